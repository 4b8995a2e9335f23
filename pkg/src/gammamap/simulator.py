"""Seeded list-mode event generation for a moving Compton camera.

Photons are emitted by point sources, reach the detector with an
inverse-square flux, Compton scatter once at a uniformly distributed point
in the crystal, and are either absorbed at a second point (two-interaction
event) or escape (single interaction, never imageable).
"""

from __future__ import annotations

import configparser
import functools
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr

from .geometry import (
    Pose,
    Trajectory,
    quat_from_axis_angle,
    read_trajectory,
    slerp,
    write_trajectory,
)
from .physics import (
    M_E_C2,
    DetectorModel,
    EnergyWindow,
    Interaction,
    ListModeEvent,
    check_windows,
    default_windows,
    scattered_energy,
)

logger = logging.getLogger(__name__)

# (energy keV, photons per decay); standard nuclide data
ISOTOPE_LINES: dict[str, tuple[tuple[float, float], ...]] = {
    "Ba-133": ((356.013, 0.6205), (302.853, 0.1834), (383.849, 0.0894), (276.399, 0.0716)),
    "Na-22": ((511.0, 1.798), (1274.537, 0.9994)),
    "Cs-137": ((661.657, 0.851),),
    "Co-60": ((1173.228, 0.9985), (1332.492, 0.9998)),
}

CONTINUOUS_STEP_S = 0.5
CONTINUOUS_KNOT_S = 1.0


class ScenarioError(ValueError):
    pass


class SourceInsideDetector(ValueError):
    pass


@dataclass(frozen=True)
class SourceTruth:
    """A point source with surveyed position.

    ``count_scale`` multiplies the detected rate; it stands in for shielding
    and other response effects that are not transported explicitly
    (0 means fully shielded).
    """

    source_id: str
    isotope: str
    position: tuple[float, float, float]
    activity_uci: float
    lines: tuple[tuple[float, float], ...] = ()
    count_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        lines = self.lines or ISOTOPE_LINES.get(self.isotope, ())
        if not lines:
            raise ScenarioError(f"no emission lines for isotope {self.isotope!r}")
        object.__setattr__(self, "lines", tuple((float(e), float(w)) for e, w in lines))
        if not self.activity_uci > 0:
            raise ScenarioError(f"source {self.source_id}: activity must be positive")
        if any(e <= 0 or w <= 0 for e, w in self.lines):
            raise ScenarioError(f"source {self.source_id}: line energies and weights must be positive")
        if self.count_scale < 0:
            raise ScenarioError(f"source {self.source_id}: count_scale must be >= 0")


@dataclass(frozen=True)
class Discrete:
    """Dwells at trajectory knots: (pose index, dwell seconds)."""

    dwells: tuple[tuple[int, float], ...]
    transit_speed: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "dwells", tuple((int(i), float(d)) for i, d in self.dwells))
        if not self.dwells:
            raise ScenarioError("discrete motion needs at least one dwell")
        if any(d <= 0 for _, d in self.dwells):
            raise ScenarioError("dwell times must be positive")


@dataclass(frozen=True)
class Continuous:
    speed: float = 0.1

    def __post_init__(self):
        if not self.speed > 0:
            raise ScenarioError("speed must be positive")


Motion = Union[Discrete, Continuous]


@dataclass
class Scenario:
    name: str
    room_min: tuple[float, float, float]
    room_max: tuple[float, float, float]
    trajectory: Trajectory
    motion: Motion
    sources: list[SourceTruth]
    detector: DetectorModel = field(default_factory=DetectorModel)
    windows: list[EnergyWindow] = field(default_factory=default_windows)
    seed: int = 0
    trajectory_path: str | None = None
    meta: dict[str, str] = field(default_factory=dict)
    settings: dict[str, dict[str, str]] = field(default_factory=dict)

    def validate(self) -> None:
        lo, hi = np.array(self.room_min), np.array(self.room_max)
        if np.any(hi <= lo):
            raise ScenarioError("room box must have positive extent")
        tr = self.trajectory.translations
        if np.any(tr < lo - 1e-9) or np.any(tr > hi + 1e-9):
            raise ScenarioError(f"scenario {self.name}: trajectory leaves the room box")
        check_windows(self.windows)
        ids = [s.source_id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ScenarioError("source ids must be unique")
        if isinstance(self.motion, Discrete):
            n = len(self.trajectory)
            if any(not 0 <= i < n for i, _ in self.motion.dwells):
                raise ScenarioError("dwell pose index outside trajectory")
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")

    @property
    def window_labels(self) -> list[str]:
        return list(dict.fromkeys(w.label for w in self.windows))


@dataclass(frozen=True)
class Exposure:
    """Detector timeline plus integration steps ``[t_lo, t_hi)`` with events."""

    timeline: Trajectory
    t_lo: np.ndarray
    t_hi: np.ndarray
    position: np.ndarray  # detector position at each step midpoint

    @property
    def live_time(self) -> float:
        return float(np.sum(self.t_hi - self.t_lo))


def _retime(traj: Trajectory, speed: float) -> Trajectory:
    """Re-time waypoints to constant speed and densify to one knot per second."""
    seg = np.linalg.norm(np.diff(traj.translations, axis=0), axis=1)
    if np.any(seg <= 0):
        raise ScenarioError("continuous trajectory has repeated waypoints")
    knot_t = np.concatenate([[0.0], np.cumsum(seg) / speed])
    dense_t = np.union1d(np.arange(0.0, knot_t[-1], CONTINUOUS_KNOT_S), knot_t)
    i = np.clip(np.searchsorted(knot_t, dense_t, side="right") - 1, 0, len(knot_t) - 2)
    u = (dense_t - knot_t[i]) / (knot_t[i + 1] - knot_t[i])
    trans = traj.translations[i] + u[:, None] * (traj.translations[i + 1] - traj.translations[i])
    quats = slerp(traj.rotations[i], traj.rotations[i + 1], u)
    return Trajectory(Pose(t, p, q) for t, p, q in zip(dense_t, trans, quats))


def exposure(traj: Trajectory, motion: Motion) -> Exposure:
    if isinstance(motion, Continuous):
        timeline = _retime(traj, motion.speed)
        edges = np.arange(0.0, timeline.t_last, CONTINUOUS_STEP_S)
        t_lo = edges
        t_hi = np.append(edges[1:], timeline.t_last)
        mid, _ = timeline.interpolate(0.5 * (t_lo + t_hi))
        return Exposure(timeline, t_lo, t_hi, mid)
    poses, t_lo, t_hi = [], [], []
    cursor = 0.0
    prev = None
    for idx, dwell in motion.dwells:
        knot = traj[idx]
        if prev is not None:
            gap = np.linalg.norm(knot.translation - prev.translation) / motion.transit_speed
            cursor += max(gap, 1.0)
        poses.append(Pose(cursor, knot.translation, knot.rotation))
        poses.append(Pose(cursor + dwell, knot.translation, knot.rotation))
        t_lo.append(cursor)
        t_hi.append(cursor + dwell)
        cursor += dwell
        prev = knot
    timeline = Trajectory(poses)
    t_lo, t_hi = np.array(t_lo), np.array(t_hi)
    return Exposure(timeline, t_lo, t_hi, np.array([traj[i].translation for i, _ in motion.dwells]))


def _flux_weights(src: SourceTruth, exp: Exposure) -> np.ndarray:
    """Per-step integral of 1/(4 pi r^2) dt."""
    r2 = np.sum((exp.position - np.array(src.position)) ** 2, axis=1)
    if np.any(r2 < 0.01**2):
        raise SourceInsideDetector(f"source {src.source_id} within 1 cm of the detector")
    return (exp.t_hi - exp.t_lo) / (4.0 * math.pi * r2)


def window_acceptance(energy: float, window: EnergyWindow, det: DetectorModel) -> float:
    """Probability that a fully absorbed photon's measured total lands in ``window``.

    Two Gaussian deposits with variance k^2 E_i sum to variance k^2 E0
    regardless of how the energy was split.
    """
    sigma = float(det.energy_sigma_kev(energy))
    if sigma == 0:
        return 1.0 if window.contains(energy) else 0.0
    return float(ndtr((window.high - energy) / sigma) - ndtr((window.low - energy) / sigma))


def expected_imageable_count(
    src: SourceTruth, traj: Trajectory, motion: Motion, det: DetectorModel, window: EnergyWindow
) -> float:
    flux = float(np.sum(_flux_weights(src, exposure(traj, motion))))
    rate = sum(w * window_acceptance(e, window, det) for e, w in src.lines)
    return det.efficiency_constant * src.activity_uci * src.count_scale * rate * flux


def expected_counts_by_label(scn: Scenario) -> dict[str, float]:
    out = {label: 0.0 for label in scn.window_labels}
    for src in scn.sources:
        for w in scn.windows:
            out[w.label] += expected_imageable_count(src, scn.trajectory, scn.motion, scn.detector, w)
    return out


# -- photon transport -------------------------------------------------------


def _sample_cos_theta(rng: np.random.Generator, det: DetectorModel, e0: float, n: int) -> np.ndarray:
    lo_deg, hi_deg = det.scatter_angle_range_deg
    c_min, c_max = math.cos(math.radians(hi_deg)), math.cos(math.radians(lo_deg))
    if det.scatter_law == "uniform":
        return rng.uniform(c_min, c_max, n)
    # Klein-Nishina by rejection against the uniform envelope
    grid = np.linspace(c_min, c_max, 512)
    kn_max = float(np.max(_klein_nishina(e0, grid))) * 1.001
    out = np.empty(0)
    while len(out) < n:
        c = rng.uniform(c_min, c_max, 2 * (n - len(out)) + 16)
        keep = rng.uniform(0.0, kn_max, len(c)) < _klein_nishina(e0, c)
        out = np.concatenate([out, c[keep]])
    return out[:n]


def _klein_nishina(e0: float, cos_theta: np.ndarray) -> np.ndarray:
    ratio = 1.0 / (1.0 + (e0 / M_E_C2) * (1.0 - cos_theta))
    return ratio**2 * (ratio + 1.0 / ratio - (1.0 - cos_theta**2))


def _perpendicular_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.where(np.abs(d[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = np.cross(d, u)
    return u, v


def _scatter(rng, det, e0, d_in):
    """Scattered directions and first deposits for incident unit vectors ``d_in``."""
    n = len(d_in)
    cos_t = _sample_cos_theta(rng, det, e0, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
    u, v = _perpendicular_basis(d_in)
    d_s = cos_t[:, None] * d_in + sin_t[:, None] * (np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v)
    d_s /= np.linalg.norm(d_s, axis=1, keepdims=True)
    e_scat = scattered_energy(e0, np.arccos(cos_t))
    return d_s, e_scat


def _chord_to_boundary(det: DetectorModel, p: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Distance (mm) from interior points ``p`` along ``d`` to the crystal surface."""
    half = det.half_size_mm
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pos = np.where(d > 0, (half - p) / d, np.inf)
        t_neg = np.where(d < 0, (-half - p) / d, np.inf)
    return np.min(np.minimum(t_pos, t_neg), axis=1)


def _uniform_in_crystal(rng, det: DetectorModel, n: int) -> np.ndarray:
    half = det.half_size_mm
    return rng.uniform(-half, half, (n, 3))


@functools.lru_cache(maxsize=256)
def containment_fraction(det: DetectorModel, e0: float, n: int = 40000) -> float:
    """Mean probability that the scattered photon is absorbed inside the crystal.

    Estimated once per (detector, energy) with a fixed internal seed,
    averaging over isotropic incidence. Only the escape-event rate uses it.
    """
    rng = np.random.default_rng(20180224)
    d_in = rng.normal(size=(n, 3))
    d_in /= np.linalg.norm(d_in, axis=1, keepdims=True)
    p = _uniform_in_crystal(rng, det, n)
    d_s, e_scat = _scatter(rng, det, e0, d_in)
    chord = _chord_to_boundary(det, p, d_s)
    return float(np.mean(1.0 - np.exp(-chord / det.attenuation_length_mm(e_scat))))


def _rotate(quats: np.ndarray, v: np.ndarray, inverse: bool = False) -> np.ndarray:
    from scipy.spatial.transform import Rotation

    r = Rotation.from_quat(quats, scalar_first=True)
    return (r.inv() if inverse else r).apply(v)


def _emit(rng, src: SourceTruth, e0: float, n: int, n_escape: int, exp: Exposure, weights, det):
    """Generate ``n`` absorbed and ``n_escape`` escaping photons of one line.

    Returns a list of (t, interactions) tuples, noise included.
    """
    total = n + n_escape
    if total == 0:
        return []
    p_step = weights / weights.sum()
    step = rng.choice(len(p_step), size=total, p=p_step)
    t = exp.t_lo[step] + rng.uniform(0.0, 1.0, total) * (exp.t_hi[step] - exp.t_lo[step])
    trans, quats = exp.timeline.interpolate(t)
    p1 = _uniform_in_crystal(rng, det, total)
    p1_world = _rotate(quats, p1 * 1e-3) + trans
    d_world = p1_world - np.array(src.position)
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    d_in = _rotate(quats, d_world, inverse=True)
    d_in /= np.linalg.norm(d_in, axis=1, keepdims=True)
    d_s, e_scat = _scatter(rng, det, e0, d_in)
    e_dep1 = e0 - e_scat

    absorbed = np.arange(total) < n
    chord = _chord_to_boundary(det, p1, d_s)
    lam = det.attenuation_length_mm(e_scat)
    # free path from an exponential truncated to the in-crystal chord
    u = rng.uniform(0.0, 1.0, total)
    path = -lam * np.log1p(-u * -np.expm1(-chord / lam))
    path = np.minimum(path, chord)
    p2 = p1 + path[:, None] * d_s

    half = det.half_size_mm
    if det.position_sigma_mm > 0:
        p1 = np.clip(p1 + rng.normal(0.0, det.position_sigma_mm, p1.shape), -half, half)
        p2 = np.clip(p2 + rng.normal(0.0, det.position_sigma_mm, p2.shape), -half, half)
    if det.energy_k > 0:
        e1 = e_dep1 + rng.normal(0.0, 1.0, total) * det.energy_sigma_kev(e_dep1)
        e2 = e_scat + rng.normal(0.0, 1.0, total) * det.energy_sigma_kev(e_scat)
    else:
        e1, e2 = e_dep1, e_scat
    e1 = np.maximum(e1, 1e-3)
    e2 = np.maximum(e2, 1e-3)

    out = []
    for k in range(total):
        hits = [Interaction(p1[k], e1[k])]
        if absorbed[k]:
            hits.append(Interaction(p2[k], e2[k]))
        out.append((float(t[k]), tuple(hits)))
    return out


def simulate(scn: Scenario) -> tuple[list[ListModeEvent], dict[int, str]]:
    """Simulate a scenario; returns events sorted by time and event->source ids."""
    scn.validate()
    exp = exposure(scn.trajectory, scn.motion)
    det = scn.detector
    children = np.random.SeedSequence(scn.seed).spawn(max(len(scn.sources), 1))
    raw: list[tuple[float, int, tuple[Interaction, ...], str]] = []
    for k, (src, ss) in enumerate(zip(scn.sources, children)):
        rng = np.random.default_rng(ss)
        weights = _flux_weights(src, exp)
        flux = float(weights.sum())
        for e0, branching in src.lines:
            lam = det.efficiency_constant * src.activity_uci * src.count_scale * branching * flux
            n_abs = int(rng.poisson(lam))
            p = containment_fraction(det, e0)
            n_esc = int(rng.poisson(lam * (1.0 - p) / p)) if p > 0 else 0
            for t, hits in _emit(rng, src, e0, n_abs, n_esc, exp, weights, det):
                raw.append((t, len(raw), hits, src.source_id))
    raw.sort(key=lambda r: (r[0], r[1]))
    events = [ListModeEvent(i, t, hits) for i, (t, _, hits, _) in enumerate(raw)]
    truth = {i: sid for i, (_, _, _, sid) in enumerate(raw)}
    logger.info("scenario %s: %d events from %d sources", scn.name, len(events), len(scn.sources))
    return events, truth


def perturb_trajectory(
    traj: Trajectory, sigma_t_m: float, sigma_rot_rad: float, seed: int
) -> Trajectory:
    """Add independent Gaussian translation and rotation noise at every knot."""
    if sigma_t_m < 0 or sigma_rot_rad < 0:
        raise ValueError("sigmas must be non-negative")
    if sigma_t_m == 0 and sigma_rot_rad == 0:
        return Trajectory(traj.poses)
    rng = np.random.default_rng(seed)
    n = len(traj)
    dt = rng.normal(0.0, sigma_t_m, (n, 3)) if sigma_t_m > 0 else np.zeros((n, 3))
    rotvec = rng.normal(0.0, sigma_rot_rad, (n, 3)) if sigma_rot_rad > 0 else None
    poses = []
    for k, pose in enumerate(traj):
        q = pose.rotation
        if rotvec is not None:
            angle = float(np.linalg.norm(rotvec[k]))
            if angle > 0:
                noise = Pose(0.0, (0, 0, 0), quat_from_axis_angle(rotvec[k], angle))
                q = noise.compose(Pose(0.0, (0, 0, 0), q)).rotation
        poses.append(Pose(pose.t, pose.translation + dt[k], q))
    return Trajectory(poses)


# -- files --------------------------------------------------------------------


def format_truth(truth: dict[int, str]) -> str:
    lines = ["# event_id source_id"] + [f"{eid} {sid}" for eid, sid in sorted(truth.items())]
    return "\n".join(lines) + "\n"


def write_truth(truth: dict[int, str], path) -> None:
    Path(path).write_text(format_truth(truth))


def read_truth(path) -> dict[int, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            eid, sid = line.split()
            out[int(eid)] = sid
    return out


def _vec(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split())


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def load_scenario(path) -> Scenario:
    """Read an INI-style scenario file; the trajectory path is file-relative."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path):
        raise ScenarioError(f"cannot read scenario file {path}")
    try:
        sc = cp["scenario"]
        traj_path = sc["trajectory"]
        trajectory = read_trajectory(path.parent / traj_path)
        motion_sec = cp["motion"]
        kind = motion_sec.get("type", "continuous").strip().lower()
        if kind == "discrete":
            dwells = []
            for item in motion_sec["dwells"].split():
                idx, secs = item.split(":")
                dwells.append((int(idx), float(secs)))
            motion: Motion = Discrete(tuple(dwells), float(motion_sec.get("transit_speed", 0.1)))
        elif kind == "continuous":
            motion = Continuous(float(motion_sec.get("speed", 0.1)))
        else:
            raise ScenarioError(f"unknown motion type {kind!r}")

        det_kwargs = {}
        if cp.has_section("detector"):
            d = cp["detector"]
            float_keys = (
                "position_sigma_mm energy_k efficiency_constant min_lever_arm_mm sigma_floor "
                "attenuation_length_511_mm attenuation_exponent"
            ).split()
            for key in float_keys:
                if key in d:
                    det_kwargs[key] = float(d[key])
            if "crystal_size_cm" in d:
                det_kwargs["crystal_size_cm"] = _vec(d["crystal_size_cm"])
            if "scatter_angle_range_deg" in d:
                det_kwargs["scatter_angle_range_deg"] = _vec(d["scatter_angle_range_deg"])
            if "scatter_law" in d:
                det_kwargs["scatter_law"] = d["scatter_law"].strip()
        detector = DetectorModel(**det_kwargs)

        windows = default_windows()
        if cp.has_section("windows"):
            ws = cp["windows"]
            width = float(ws.get("width", 20.0))
            windows = [
                EnergyWindow(label, c, width)
                for label, centers in ws.items()
                if label != "width"
                for c in _vec(centers)
            ]

        sources = []
        for name in cp.sections():
            if not name.startswith("source."):
                continue
            s = cp[name]
            lines = ()
            if "lines" in s:
                lines = tuple(
                    (float(a), float(b)) for a, b in (item.split(":") for item in s["lines"].split())
                )
            sources.append(
                SourceTruth(
                    source_id=name[len("source."):],
                    isotope=s["isotope"].strip(),
                    position=_vec(s["position"]),
                    activity_uci=float(s["activity_uci"]),
                    lines=lines,
                    count_scale=float(s.get("count_scale", 1.0)),
                )
            )
        settings = {
            sec: dict(cp[sec]) for sec in ("reconstruction", "localization") if cp.has_section(sec)
        }
        meta = dict(cp["meta"]) if cp.has_section("meta") else {}
        scn = Scenario(
            name=sc["name"].strip(),
            room_min=_vec(sc["room_min"]),
            room_max=_vec(sc["room_max"]),
            trajectory=trajectory,
            motion=motion,
            sources=sources,
            detector=detector,
            windows=windows,
            seed=int(sc.get("seed", 0)),
            trajectory_path=traj_path,
            meta=meta,
            settings=settings,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{path}: {exc}") from exc
    scn.validate()
    return scn


def format_scenario(scn: Scenario, header: Sequence[str] = ()) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["scenario"] = {
        "name": scn.name,
        "room_min": _fmt(scn.room_min),
        "room_max": _fmt(scn.room_max),
        "trajectory": scn.trajectory_path or f"{scn.name}_trajectory.txt",
        "seed": str(scn.seed),
    }
    if isinstance(scn.motion, Discrete):
        cp["motion"] = {
            "type": "discrete",
            "dwells": " ".join(f"{i}:{d!r}" for i, d in scn.motion.dwells),
            "transit_speed": repr(scn.motion.transit_speed),
        }
    else:
        cp["motion"] = {"type": "continuous", "speed": repr(scn.motion.speed)}
    det = scn.detector
    cp["detector"] = {
        "crystal_size_cm": _fmt(det.crystal_size_cm),
        "position_sigma_mm": repr(det.position_sigma_mm),
        "energy_k": repr(det.energy_k),
        "efficiency_constant": repr(det.efficiency_constant),
        "min_lever_arm_mm": repr(det.min_lever_arm_mm),
        "sigma_floor": repr(det.sigma_floor),
        "attenuation_length_511_mm": repr(det.attenuation_length_511_mm),
        "attenuation_exponent": repr(det.attenuation_exponent),
        "scatter_law": det.scatter_law,
        "scatter_angle_range_deg": _fmt(det.scatter_angle_range_deg),
    }
    widths = {w.width for w in scn.windows}
    if len(widths) != 1:
        raise ScenarioError("scenario files support a single window width")
    windows: dict[str, str] = {"width": repr(widths.pop())}
    for w in scn.windows:
        windows[w.label] = (windows.get(w.label, "") + " " + repr(w.center)).strip()
    cp["windows"] = windows
    for sec, values in scn.settings.items():
        cp[sec] = values
    if scn.meta:
        cp["meta"] = scn.meta
    for src in scn.sources:
        cp[f"source.{src.source_id}"] = {
            "isotope": src.isotope,
            "position": _fmt(src.position),
            "activity_uci": repr(src.activity_uci),
            "lines": " ".join(f"{e!r}:{w!r}" for e, w in src.lines),
            "count_scale": repr(src.count_scale),
        }
    import io

    buf = io.StringIO()
    for h in header:
        buf.write(f"# {h}\n")
    cp.write(buf)
    return buf.getvalue()


def save_scenario(scn: Scenario, path, header: Sequence[str] = ()) -> None:
    """Write the scenario file and its trajectory next to it."""
    path = Path(path)
    traj_name = scn.trajectory_path or f"{scn.name}_trajectory.txt"
    scn = replace(scn, trajectory_path=traj_name)
    write_trajectory(scn.trajectory, path.parent / traj_name)
    path.write_text(format_scenario(scn, header))


def scenario_hash(path) -> str:
    """Content hash of a scenario file and the trajectory it references."""
    path = Path(path)
    scn = load_scenario(path)
    h = hashlib.sha256(path.read_bytes())
    h.update((path.parent / scn.trajectory_path).read_bytes())
    return h.hexdigest()
