"""Voxel-grid imaging: cone kernels, simple backprojection and list-mode MLEM."""

from __future__ import annotations

import logging
import math
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .physics import ConeOfResponse

logger = logging.getLogger(__name__)

GRID_MAGIC = b"GVX1"


class AllRowsEmpty(ValueError):
    pass


class ZeroDenominator(ArithmeticError):
    pass


class GridFormatError(ValueError):
    pass


@dataclass
class VoxelGrid:
    """Axis-aligned grid; ``values`` is flat, x fastest (index = ix + nx*(iy + ny*iz))."""

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]
    values: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        self.resolution = float(self.resolution)
        if any(d < 1 for d in self.dims):
            raise ValueError("grid dims must be >= 1")
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")
        if self.values is None:
            self.values = np.zeros(self.size)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.size:
            raise ValueError(f"expected {self.size} values, got {self.values.size}")

    @classmethod
    def from_bounds(cls, lo, hi, resolution: float, fill: float = 0.0) -> "VoxelGrid":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        dims = np.maximum(np.ceil((hi - lo) / resolution - 1e-9).astype(int), 1)
        return cls(lo, resolution, tuple(dims), np.full(int(np.prod(dims)), float(fill)))

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.resolution

    def with_values(self, values) -> "VoxelGrid":
        return VoxelGrid(self.origin.copy(), self.resolution, self.dims, np.array(values, dtype=float))

    def ijk(self, index) -> np.ndarray:
        nx, ny, _ = self.dims
        index = np.asarray(index)
        return np.stack([index % nx, (index // nx) % ny, index // (nx * ny)], axis=-1)

    def index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk)
        nx, ny, _ = self.dims
        return ijk[..., 0] + nx * (ijk[..., 1] + ny * ijk[..., 2])

    def center(self, index) -> np.ndarray:
        return self.origin + (self.ijk(index) + 0.5) * self.resolution

    def index_of_point(self, point) -> int:
        ijk = np.floor((np.asarray(point, float) - self.origin) / self.resolution).astype(int)
        if np.any(ijk < 0) or np.any(ijk >= np.array(self.dims)):
            raise ValueError(f"point {point} outside grid")
        return int(self.index(ijk))

    @cached_property
    def centers(self) -> np.ndarray:
        c = self.center(np.arange(self.size))
        c.setflags(write=False)
        return c

    def as_array(self) -> np.ndarray:
        """View shaped (nz, ny, nx)."""
        nx, ny, nz = self.dims
        return self.values.reshape(nz, ny, nx)


@dataclass
class SystemMatrixRow:
    event_id: int
    indices: np.ndarray
    weights: np.ndarray

    @property
    def empty(self) -> bool:
        return self.indices.size == 0


@dataclass
class ReconSettings:
    iterations: int = 10
    cutoff_sigma: float = 3.0
    distance_exponent: float = 0.0
    epsilon: float = 1e-4
    max_distance: float | None = None
    max_cached_nonzeros: int = 40_000_000

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.cutoff_sigma > 0:
            raise ValueError("cutoff must be positive")


def system_row(cone: ConeOfResponse, grid: VoxelGrid, settings: ReconSettings) -> SystemMatrixRow:
    """Gaussian-in-angle weights of every voxel centre around the cone surface."""
    d = grid.centers - cone.apex
    dist = np.sqrt(np.einsum("ij,ij->i", d, d))
    keep = dist >= grid.resolution
    if settings.max_distance is not None:
        keep &= dist <= settings.max_distance
    band = settings.cutoff_sigma * cone.sigma_angle
    # cheap pre-selection on cos(angle); exact test on the angle below
    cos_lo = math.cos(min(cone.half_angle + band, math.pi))
    cos_hi = math.cos(max(cone.half_angle - band, 0.0))
    safe = np.where(keep, dist, 1.0)
    cos_a = (d @ cone.axis) / safe
    keep &= (cos_a >= cos_lo - 1e-9) & (cos_a <= cos_hi + 1e-9)
    idx = np.flatnonzero(keep)
    angle = np.arccos(np.clip(cos_a[idx], -1.0, 1.0))
    delta = angle - cone.half_angle
    inside = np.abs(delta) <= band
    idx, delta = idx[inside], delta[inside]
    w = np.exp(-(delta**2) / (2.0 * cone.sigma_angle**2))
    if settings.distance_exponent:
        w = w * dist[idx] ** (-settings.distance_exponent)
    return SystemMatrixRow(cone.event_id, idx.astype(np.int64), w)


class SystemMatrix:
    """Rows for a list of cones, cached as CSR when they fit the budget."""

    def __init__(self, cones: Sequence[ConeOfResponse], grid: VoxelGrid, settings: ReconSettings):
        self.grid = grid
        self.settings = settings
        self.n_dropped = 0
        cached: list[SystemMatrixRow] | None = []
        kept: list[ConeOfResponse] = []
        nnz = 0
        for cone in cones:
            row = system_row(cone, grid, settings)
            if row.empty:
                self.n_dropped += 1
                continue
            kept.append(cone)
            if cached is not None:
                nnz += row.indices.size
                if nnz > settings.max_cached_nonzeros:
                    logger.info("system matrix exceeds %d nonzeros; streaming rows", settings.max_cached_nonzeros)
                    cached = None
                else:
                    cached.append(row)
        self.cones = kept
        self.matrix = None
        if cached is not None and cached:
            indptr = np.zeros(len(cached) + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([r.indices.size for r in cached])
            self.matrix = sparse.csr_matrix(
                (
                    np.concatenate([r.weights for r in cached]),
                    np.concatenate([r.indices for r in cached]),
                    indptr,
                ),
                shape=(len(cached), grid.size),
            )
            self._transpose = self.matrix.T

    @property
    def n_rows(self) -> int:
        return len(self.cones)

    @property
    def streamed(self) -> bool:
        return self.matrix is None

    def rows(self):
        for cone in self.cones:
            yield system_row(cone, self.grid, self.settings)

    def forward(self, lam: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ lam
        return np.array([float(r.weights @ lam[r.indices]) for r in self.rows()])

    def back(self, y: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self._transpose @ y
        out = np.zeros(self.grid.size)
        for r, yi in zip(self.rows(), y):
            out[r.indices] += r.weights * yi
        return out

    def forward_back(self, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward projection of ``lam`` and backprojection of 1/forward."""
        if self.matrix is not None:
            fwd = self.matrix @ lam
            with np.errstate(divide="ignore"):
                return fwd, self._transpose @ (1.0 / fwd)
        fwd = np.empty(self.n_rows)
        out = np.zeros(self.grid.size)
        for i, r in enumerate(self.rows()):
            f = float(r.weights @ lam[r.indices])
            fwd[i] = f
            if f > 0:
                out[r.indices] += r.weights / f
        return fwd, out


def sbp(cones: Sequence[ConeOfResponse], grid: VoxelGrid, settings: ReconSettings) -> VoxelGrid:
    if not cones:
        raise ValueError("backprojection needs at least one cone")
    acc = np.zeros(grid.size)
    n_empty = 0
    for cone in cones:
        row = system_row(cone, grid, settings)
        if row.empty:
            n_empty += 1
            continue
        acc[row.indices] += row.weights
    if n_empty == len(cones):
        raise AllRowsEmpty("no cone intersects the grid")
    return grid.with_values(acc)


def mlem(
    cones: Sequence[ConeOfResponse] | SystemMatrix,
    grid0: VoxelGrid,
    settings: ReconSettings,
) -> tuple[VoxelGrid, list[float]]:
    """List-mode MLEM with uniform sensitivity.

    Returns the final grid and the log-likelihood sum_i log(sum_j t_ij lam_j)
    of every iterate, starting with the (rescaled) initial image.
    """
    if settings.iterations < 1:
        raise ValueError("iterations must be >= 1")
    sm = cones if isinstance(cones, SystemMatrix) else SystemMatrix(cones, grid0, settings)
    if sm.n_dropped:
        warnings.warn(f"dropping {sm.n_dropped} events whose cones miss the grid", RuntimeWarning)
    if sm.n_rows == 0:
        raise AllRowsEmpty("no usable events for MLEM")
    lam = np.array(grid0.values, dtype=float)
    if np.any(lam < 0) or not np.any(lam > 0):
        raise ValueError("initial image must be non-negative and not all zero")
    # the update is scale-free; starting at the fixed total keeps the
    # reported log-likelihood monotone from the first iterate on
    lam *= sm.n_rows / lam.sum()

    fwd, back = sm.forward_back(lam)
    if np.any(fwd <= 0):
        raise ZeroDenominator(f"{int(np.sum(fwd <= 0))} events have zero expected rate")
    history = [float(np.sum(np.log(fwd)))]
    for it in range(settings.iterations):
        lam = lam * back
        fwd, back = sm.forward_back(lam)
        if np.any(fwd <= 0):
            raise ZeroDenominator("an event lost all support during iteration")
        history.append(float(np.sum(np.log(fwd))))
        change = abs(history[-1] - history[-2]) / max(abs(history[-2]), 1e-300)
        logger.debug("mlem iteration %d: loglik %.6f (rel change %.2e)", it + 1, history[-1], change)
        if change < settings.epsilon:
            break
    return grid0.with_values(lam), history


def grid_argmax(grid: VoxelGrid) -> tuple[int, np.ndarray, float]:
    j = int(np.argmax(grid.values))
    return j, grid.center(j), float(grid.values[j])


# -- files --------------------------------------------------------------------


def write_grid(grid: VoxelGrid, path) -> None:
    nx, ny, nz = grid.dims
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<3I", nx, ny, nz))
        fh.write(struct.pack("<4d", *grid.origin, grid.resolution))
        fh.write(grid.values.astype("<f4").tobytes())


def read_grid(path) -> VoxelGrid:
    data = Path(path).read_bytes()
    if data[:4] != GRID_MAGIC:
        raise GridFormatError(f"{path}: bad magic {data[:4]!r}")
    nx, ny, nz = struct.unpack_from("<3I", data, 4)
    ox, oy, oz, res = struct.unpack_from("<4d", data, 16)
    values = np.frombuffer(data, dtype="<f4", offset=48)
    if values.size != nx * ny * nz:
        raise GridFormatError(f"{path}: expected {nx * ny * nz} values, found {values.size}")
    return VoxelGrid((ox, oy, oz), res, (nx, ny, nz), values.astype(float))


def format_grid_text(grid: VoxelGrid) -> str:
    lines = [
        f"# dims {' '.join(map(str, grid.dims))} origin {' '.join(repr(float(v)) for v in grid.origin)} "
        f"resolution {grid.resolution!r}",
        "# ix iy iz value",
    ]
    nz_idx = np.flatnonzero(grid.values)
    for j, (i, k, l) in zip(nz_idx, grid.ijk(nz_idx)):
        lines.append(f"{i} {k} {l} {float(grid.values[j])!r}")
    return "\n".join(lines) + "\n"


def write_grid_text(grid: VoxelGrid, path) -> None:
    Path(path).write_text(format_grid_text(grid))
