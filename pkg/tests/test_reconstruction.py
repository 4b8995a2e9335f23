import math
import warnings

import numpy as np
import pytest

from gammamap.physics import ConeOfResponse
from gammamap.reconstruction import (
    AllRowsEmpty,
    GridFormatError,
    ReconSettings,
    SystemMatrix,
    VoxelGrid,
    ZeroDenominator,
    format_grid_text,
    grid_argmax,
    mlem,
    read_grid,
    sbp,
    system_row,
    write_grid,
)

from oracles import cone_through, dense_kernel, orthogonal_pair

S = ReconSettings()


def cube(n=20, res=0.1, lo=0.0):
    return VoxelGrid.from_bounds((lo, lo, lo), (lo + n * res,) * 3, res, fill=1.0)


def random_cones(rng, n, lo=-0.5, hi=2.5):
    out = []
    for i in range(n):
        ax = rng.normal(size=3)
        ax /= np.linalg.norm(ax)
        out.append(
            ConeOfResponse(rng.uniform(lo, hi, 3), ax, rng.uniform(0.05, math.pi - 0.05), rng.uniform(0.02, 0.2), "x", i)
        )
    return out


def test_grid_indexing():
    g = VoxelGrid((0, 0, 0), 0.5, (4, 3, 2))
    j = g.index((1, 2, 1))
    assert j == 1 + 4 * (2 + 3 * 1)
    assert np.array_equal(g.ijk(j), (1, 2, 1))
    assert np.allclose(g.center(j), (0.75, 1.25, 0.75))
    assert g.index_of_point((0.75, 1.25, 0.75)) == j
    assert g.as_array().shape == (2, 3, 4)
    with pytest.raises(ValueError):
        g.index_of_point((5, 0, 0))


def test_from_bounds_dims():
    g = VoxelGrid.from_bounds((0, 0, 0), (5, 4, 2), 0.1)
    assert g.dims == (50, 40, 20)


def test_sparse_row_matches_dense(rng):
    g = cube(16, 0.125)
    for cone in random_cones(rng, 40):
        row = system_row(cone, g, S)
        sparse_dense = np.zeros(g.size)
        sparse_dense[row.indices] = row.weights
        assert np.max(np.abs(sparse_dense - dense_kernel(cone, g))) < 1e-12


def test_empty_row_when_pointing_away():
    g = cube()
    cone = ConeOfResponse((-3.0, 1.0, 1.0), (-1.0, 0.0, 0.0), 0.2, 0.02, "x")
    assert system_row(cone, g, S).empty


def test_right_angle_cone_is_plane():
    g = cube(20, 0.1)
    cone = ConeOfResponse((1.0, 1.0, 1.0), (0, 0, 1), math.pi / 2, 0.02, "x")
    row = system_row(cone, g, S)
    z = g.centers[row.indices, 2]
    dist = np.linalg.norm(g.centers[row.indices] - cone.apex, axis=1)
    # within the 3 sigma band around the plane through the apex
    assert np.all(np.abs(z - 1.0) <= dist * math.sin(3 * 0.02) + 1e-12)
    top = row.indices[np.argmax(row.weights)]
    assert abs(g.center(top)[2] - 1.0) < 0.06


def test_max_distance_and_exponent():
    g = cube()
    cone = ConeOfResponse((1.0, 1.0, 1.0), (0, 0, 1), math.pi / 2, 0.05, "x")
    near = system_row(cone, g, ReconSettings(max_distance=0.5))
    dist = np.linalg.norm(g.centers[near.indices] - cone.apex, axis=1)
    assert near.indices.size and np.all(dist <= 0.5)
    plain = system_row(cone, g, S)
    weighted = system_row(cone, g, ReconSettings(distance_exponent=1.0))
    d = np.linalg.norm(g.centers[plain.indices] - cone.apex, axis=1)
    assert np.allclose(weighted.weights, plain.weights / d)


def test_apex_voxel_excluded():
    g = cube()
    cone = ConeOfResponse(g.center(g.index((10, 10, 10))), (0, 0, 1), 1.0, 0.7, "x")
    row = system_row(cone, g, S)
    d = np.linalg.norm(g.centers[row.indices] - cone.apex, axis=1)
    assert np.all(d >= g.resolution)


def test_sbp_single_and_linear(rng):
    g = cube(12, 0.15)
    cones = random_cones(rng, 6, 0.0, 1.8)
    one = sbp(cones[:1], g, S)
    row = system_row(cones[0], g, S)
    ref = np.zeros(g.size)
    ref[row.indices] = row.weights
    assert np.array_equal(one.values, ref)
    assert np.array_equal(sbp(cones[:1] * 2, g, S).values, 2 * one.values)
    a = sbp(cones, g, S).values
    b = sbp(cones[::-1], g, S).values
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_sbp_all_empty():
    cone = ConeOfResponse((-3.0, 1.0, 1.0), (-1.0, 0.0, 0.0), 0.2, 0.02, "x")
    with pytest.raises(AllRowsEmpty):
        sbp([cone], cube(), S)
    with pytest.raises(ValueError):
        sbp([], cube(), S)


def test_orthogonal_cones_meet_in_voxel():
    g = cube(20, 0.1)
    j = g.index((11, 7, 9))
    c1, c2 = orthogonal_pair(g, j)
    assert abs(np.dot(c1.axis, c2.axis)) < 1e-12
    assert grid_argmax(sbp([c1, c2], g, S))[0] == j
    out, _ = mlem([c1, c2], g, ReconSettings(iterations=10, epsilon=0))
    assert grid_argmax(out)[0] == j


def test_sbp_rotation_equivariance(rng):
    # grid symmetric about the origin; 90 degree yaw maps (x, y, z) -> (-y, x, z) exactly
    g = VoxelGrid((-1.0, -1.0, -1.0), 0.2, (10, 10, 10))
    cones = random_cones(rng, 8, -0.9, 0.9)
    rot = lambda v: np.array([-v[1], v[0], v[2]])
    turned = [ConeOfResponse(rot(c.apex), rot(c.axis), c.half_angle, c.sigma_angle, "x") for c in cones]
    a = sbp(cones, g, S)
    b = sbp(turned, g, S)
    ijk = g.ijk(np.arange(g.size))
    mapped = g.index(np.stack([9 - ijk[:, 1], ijk[:, 0], ijk[:, 2]], axis=1))
    assert np.allclose(b.values[mapped], a.values, rtol=0, atol=1e-12)


def test_mlem_requires_iterations():
    with pytest.raises(ValueError):
        ReconSettings(iterations=0)


def test_mlem_single_cone_proportional_to_row():
    g = cube()
    cone = cone_through(g.center(g.index((5, 6, 7))), (0, 0, 1), 1.0, 0.8, sigma=0.05)
    out, ll = mlem([cone], g, ReconSettings(iterations=1, epsilon=0))
    row = system_row(cone, g, S)
    ref = np.zeros(g.size)
    ref[row.indices] = row.weights
    assert np.allclose(out.values / out.values.max(), ref / ref.max(), rtol=1e-12, atol=1e-15)
    assert len(ll) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mlem_monotone_and_total(rng):
    g = cube(12, 0.15)
    cones = random_cones(rng, 40, 0.0, 1.8)
    sm = SystemMatrix(cones, g, S)
    out, ll = mlem(sm, g, ReconSettings(iterations=25, epsilon=0))
    assert len(ll) == 26
    for a, b in zip(ll, ll[1:]):
        assert b >= a - 1e-9 * abs(a)
    assert out.values.sum() == pytest.approx(sm.n_rows, rel=1e-9)


def test_mlem_fixed_point():
    g = cube()
    j = g.index((8, 9, 10))
    s = g.center(j)
    cones = [
        cone_through(s, ax, th, dist, perp=perp)
        for ax, th, dist, perp in [
            ((1, 0, 0), 0.7, 0.6, (0, 1, 1)),
            ((0, 1, 0), 1.1, 0.5, (1, 0, 1)),
            ((0, 0, 1), 0.4, 0.7, (1, 1, 0)),
            ((1, 1, 0), 1.9, 0.45, (0, 0, 1)),
        ]
    ]
    delta = np.zeros(g.size)
    delta[j] = 1.0
    out, _ = mlem(cones, g.with_values(delta), ReconSettings(iterations=3, epsilon=0))
    expect = np.zeros(g.size)
    expect[j] = len(cones)
    assert np.max(np.abs(out.values - expect)) / len(cones) < 1e-6


def test_mlem_zero_denominator():
    g = cube()
    cone = cone_through(g.center(g.index((5, 5, 5))), (0, 0, 1), 1.0, 0.5)
    support = np.zeros(g.size)
    outside = np.setdiff1d(np.arange(g.size), system_row(cone, g, S).indices)
    support[outside[0]] = 1.0
    with pytest.raises(ZeroDenominator):
        mlem([cone], g.with_values(support), S)
    with pytest.raises(ValueError):
        mlem([cone], g.with_values(np.zeros(g.size)), S)


def test_mlem_drops_empty_rows_with_warning():
    g = cube()
    good = cone_through(g.center(g.index((5, 5, 5))), (0, 0, 1), 1.0, 0.5)
    bad = ConeOfResponse((-3.0, 1.0, 1.0), (-1.0, 0.0, 0.0), 0.2, 0.02, "x")
    with pytest.warns(RuntimeWarning):
        out, _ = mlem([good, bad], g, S)
    assert out.values.sum() == pytest.approx(1.0)
    with pytest.raises(AllRowsEmpty), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mlem([bad], g, S)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_streamed_matches_cached(rng):
    g = cube(12, 0.15)
    cones = random_cones(rng, 30, 0.0, 1.8)
    cached = SystemMatrix(cones, g, ReconSettings(epsilon=0))
    streamed = SystemMatrix(cones, g, ReconSettings(epsilon=0, max_cached_nonzeros=10))
    assert not cached.streamed and streamed.streamed
    a, la = mlem(cached, g, ReconSettings(epsilon=0))
    b, lb = mlem(streamed, g, ReconSettings(epsilon=0))
    assert np.allclose(a.values, b.values, rtol=1e-10, atol=1e-14)
    assert np.allclose(la, lb, rtol=1e-12)


def test_mlem_early_stop(rng):
    g = cube(12, 0.15)
    cones = random_cones(rng, 30, 0.0, 1.8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, ll = mlem(cones, g, ReconSettings(iterations=200, epsilon=1e-4))
    assert len(ll) < 201
    assert abs(ll[-1] - ll[-2]) / abs(ll[-2]) < 1e-4


def test_argmax_ties_and_single():
    g = cube(4, 1.0)
    assert grid_argmax(g)[0] == 0
    v = np.zeros(g.size)
    v[37] = 2.5
    j, c, val = grid_argmax(g.with_values(v))
    assert (j, val) == (37, 2.5) and np.allclose(c, g.center(37))


def test_grid_file_round_trip(tmp_path, rng):
    g = VoxelGrid((-1.5, 0.25, 3.0), 0.1, (7, 5, 3), rng.random(105).astype(np.float32))
    write_grid(g, tmp_path / "g.gvx")
    back = read_grid(tmp_path / "g.gvx")
    assert back.dims == g.dims and back.resolution == g.resolution
    assert np.array_equal(back.origin, g.origin) and np.array_equal(back.values, g.values)
    assert format_grid_text(back) == format_grid_text(g)


def test_grid_file_errors(tmp_path):
    (tmp_path / "bad.gvx").write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(GridFormatError):
        read_grid(tmp_path / "bad.gvx")
    g = cube(2, 1.0)
    write_grid(g, tmp_path / "g.gvx")
    data = (tmp_path / "g.gvx").read_bytes()
    (tmp_path / "short.gvx").write_bytes(data[:-4])
    with pytest.raises(GridFormatError):
        read_grid(tmp_path / "short.gvx")
