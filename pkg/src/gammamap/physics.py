"""Compton kinematics, energy windows, and cones of response.

Energies are in keV, detector-frame positions in mm, world positions in m.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Pose, transform_direction, transform_point

logger = logging.getLogger(__name__)

M_E_C2 = 511.0  # electron rest energy, keV
NOT_IMAGEABLE = "NotImageable"


class KinematicallyForbidden(ValueError):
    pass


class OverlappingWindows(ValueError):
    pass


class DegenerateLeverArm(ValueError):
    pass


class EventFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Interaction:
    position: np.ndarray  # mm, detector frame
    energy_dep: float  # keV

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "energy_dep", float(self.energy_dep))
        if not self.energy_dep > 0:
            raise ValueError(f"energy deposit must be positive, got {self.energy_dep}")

    def __eq__(self, other):
        if not isinstance(other, Interaction):
            return NotImplemented
        return self.energy_dep == other.energy_dep and np.array_equal(self.position, other.position)

    def __hash__(self):
        return hash((self.position.tobytes(), self.energy_dep))


@dataclass(frozen=True)
class ListModeEvent:
    event_id: int
    t: float
    interactions: tuple[Interaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "interactions", tuple(self.interactions))
        if not self.interactions:
            raise ValueError("event needs at least one interaction")

    @property
    def total_energy(self) -> float:
        return float(sum(i.energy_dep for i in self.interactions))

    @property
    def n_interactions(self) -> int:
        return len(self.interactions)

    @property
    def lever_arm_mm(self) -> float:
        if len(self.interactions) < 2:
            return 0.0
        return float(np.linalg.norm(self.interactions[0].position - self.interactions[1].position))


@dataclass(frozen=True)
class EnergyWindow:
    label: str
    center: float
    width: float = 20.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("window width must be positive")

    @property
    def low(self) -> float:
        return self.center - self.width / 2

    @property
    def high(self) -> float:
        return self.center + self.width / 2

    def contains(self, energy: float) -> bool:
        return self.low <= energy <= self.high


def default_windows(width: float = 20.0) -> list[EnergyWindow]:
    """Photopeak windows for the four isotopes; Co-60's two lines share a label."""
    return [
        EnergyWindow("Ba-133", 356.0, width),
        EnergyWindow("Na-22", 511.0, width),
        EnergyWindow("Cs-137", 662.0, width),
        EnergyWindow("Co-60", 1173.0, width),
        EnergyWindow("Co-60", 1332.0, width),
    ]


def check_windows(windows: Sequence[EnergyWindow]) -> None:
    ordered = sorted(windows, key=lambda w: w.low)
    for a, b in zip(ordered, ordered[1:]):
        if b.low <= a.high:
            raise OverlappingWindows(f"windows {a} and {b} overlap")


@dataclass(frozen=True)
class ConeOfResponse:
    apex: np.ndarray  # m, world
    axis: np.ndarray  # unit, world; points from 2nd interaction through 1st
    half_angle: float
    sigma_angle: float
    window_label: str
    event_id: int = -1

    def __post_init__(self):
        apex = np.array(self.apex, dtype=float).reshape(3)
        axis = np.array(self.axis, dtype=float).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("cone axis must be a unit vector")
        if not 0.0 < self.half_angle < math.pi:
            raise ValueError(f"half angle {self.half_angle} outside (0, pi)")
        if not self.sigma_angle > 0:
            raise ValueError("sigma_angle must be positive")
        apex.setflags(write=False)
        axis.setflags(write=False)
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class DetectorModel:
    """CdZnTe crystal response and noise model.

    ``efficiency_constant`` converts activity and inverse-square flux into
    imageable counts (counts m^2 / (uCi s)); the default is calibrated on the
    bundled test-1 scenario. Attenuation-length parameters set the free path
    of the scattered photon inside the crystal.
    """

    crystal_size_cm: tuple[float, float, float] = (2.0, 2.0, 1.5)
    position_sigma_mm: float = 1.0
    energy_k: float = 0.2
    efficiency_constant: float = 2.32704
    min_lever_arm_mm: float = 2.0
    sigma_floor: float = 0.02
    attenuation_length_511_mm: float = 18.5
    attenuation_exponent: float = 1.2
    scatter_law: str = "uniform"
    scatter_angle_range_deg: tuple[float, float] = (10.0, 120.0)

    def __post_init__(self):
        object.__setattr__(self, "crystal_size_cm", tuple(float(x) for x in self.crystal_size_cm))
        object.__setattr__(
            self, "scatter_angle_range_deg", tuple(float(x) for x in self.scatter_angle_range_deg)
        )
        if any(s <= 0 for s in self.crystal_size_cm):
            raise ValueError("crystal dimensions must be positive")
        if self.position_sigma_mm < 0 or self.energy_k < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.efficiency_constant <= 0 or self.sigma_floor <= 0 or self.min_lever_arm_mm < 0:
            raise ValueError("efficiency, sigma floor and lever arm must be positive")
        if self.scatter_law not in ("uniform", "klein-nishina"):
            raise ValueError(f"unknown scatter law {self.scatter_law!r}")
        lo, hi = self.scatter_angle_range_deg
        if not 0 <= lo < hi <= 180:
            raise ValueError("scatter angle range must satisfy 0 <= lo < hi <= 180")

    @property
    def half_size_mm(self) -> np.ndarray:
        return np.array(self.crystal_size_cm) * 5.0

    def energy_sigma_kev(self, energy) -> np.ndarray | float:
        return self.energy_k * np.sqrt(np.maximum(energy, 0.0))

    def attenuation_length_mm(self, energy):
        return self.attenuation_length_511_mm * (np.asarray(energy) / 511.0) ** self.attenuation_exponent

    def inside(self, points_mm) -> np.ndarray:
        return np.all(np.abs(np.asarray(points_mm)) <= self.half_size_mm, axis=-1)

    def without_noise(self) -> "DetectorModel":
        from dataclasses import replace

        return replace(self, position_sigma_mm=0.0, energy_k=0.0)


def compton_half_angle(e0: float, e_dep1: float) -> float:
    """Scatter angle (rad) for a photon of energy ``e0`` depositing ``e_dep1``."""
    if not e0 > 0:
        raise ValueError("incident energy must be positive")
    if not 0 < e_dep1 < e0:
        raise KinematicallyForbidden(f"deposit {e_dep1} not in (0, {e0})")
    cos_theta = 1.0 - M_E_C2 * (1.0 / (e0 - e_dep1) - 1.0 / e0)
    if cos_theta < -1.0 - 1e-12 or cos_theta > 1.0:
        raise KinematicallyForbidden(
            f"deposit {e_dep1} keV beyond Compton edge of {e0} keV line (cos={cos_theta:.6f})"
        )
    return math.acos(max(cos_theta, -1.0))


def compton_edge(e0: float) -> float:
    """Largest single-scatter deposit (backscatter)."""
    return 2.0 * e0 * e0 / (M_E_C2 + 2.0 * e0)


def scattered_energy(e0, theta):
    """Energy of the photon leaving a Compton scatter at angle ``theta``."""
    return e0 / (1.0 + (e0 / M_E_C2) * (1.0 - np.cos(theta)))


def dtheta_dedep(e0: float, e_dep1: float) -> float:
    theta = compton_half_angle(e0, e_dep1)
    s = math.sin(theta)
    if s == 0.0:
        return math.inf
    return M_E_C2 / ((e0 - e_dep1) ** 2 * s)


def match_window(ev: ListModeEvent, windows: Sequence[EnergyWindow]) -> EnergyWindow | None:
    """Window holding an imageable event's total energy, else ``None``."""
    if ev.n_interactions < 2:
        return None
    energy = ev.total_energy
    hits = [w for w in windows if w.contains(energy)]
    if len(hits) > 1:
        raise OverlappingWindows(f"{energy} keV falls in {[w.label for w in hits]}")
    return hits[0] if hits else None


def classify_event(ev: ListModeEvent, windows: Sequence[EnergyWindow]) -> str:
    w = match_window(ev, windows)
    return NOT_IMAGEABLE if w is None else w.label


def angular_uncertainty(ev: ListModeEvent, det: DetectorModel, e0: float | None = None) -> float:
    """1-sigma cone width: lever-arm geometry and energy noise in quadrature.

    ``e0`` is the assumed incident energy; the event's total energy is used
    when omitted.
    """
    if ev.n_interactions < 2:
        raise ValueError("angular uncertainty needs two interactions")
    lever = ev.lever_arm_mm
    sigma_geom = det.position_sigma_mm / lever if lever > 0 else math.inf
    if det.position_sigma_mm == 0:
        sigma_geom = 0.0
    e_dep1 = ev.interactions[0].energy_dep
    e0 = ev.total_energy if e0 is None else e0
    sigma_e = float(det.energy_sigma_kev(e_dep1))
    sigma_energy = 0.0 if sigma_e == 0 else dtheta_dedep(e0, e_dep1) * sigma_e
    total = math.hypot(sigma_geom, sigma_energy)
    return min(max(total, det.sigma_floor), math.pi / 4)


def cone_from_event(
    ev: ListModeEvent, window: EnergyWindow, pose: Pose, det: DetectorModel
) -> ConeOfResponse:
    if ev.n_interactions < 2:
        raise ValueError("cone needs at least two interactions")
    first, second = ev.interactions[0], ev.interactions[1]
    lever = second.position - first.position
    dist = float(np.linalg.norm(lever))
    if dist <= det.min_lever_arm_mm:
        raise DegenerateLeverArm(f"lever arm {dist:.3f} mm <= {det.min_lever_arm_mm} mm")
    theta = compton_half_angle(window.center, first.energy_dep)
    if theta <= 0.0 or theta >= math.pi:
        raise KinematicallyForbidden("degenerate cone opening angle")
    axis_det = -lever / dist
    axis_det = axis_det / np.linalg.norm(axis_det)
    return ConeOfResponse(
        apex=transform_point(pose, first.position * 1e-3),
        axis=transform_direction(pose, axis_det),
        half_angle=theta,
        sigma_angle=angular_uncertainty(ev, det, window.center),
        window_label=window.label,
        event_id=ev.event_id,
    )


def spectrum(events: Iterable[ListModeEvent], bin_width: float) -> dict[float, int]:
    """Histogram of total event energy keyed by bin lower edge (keV)."""
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    counts = Counter(math.floor(ev.total_energy / bin_width) * bin_width for ev in events)
    return dict(sorted(counts.items()))


def format_spectrum(hist: dict[float, int], bin_width: float) -> str:
    lines = [f"# bin_width_kev {bin_width!r}", "# low_kev count"]
    lines += [f"{float(lo)!r} {n}" for lo, n in hist.items()]
    return "\n".join(lines) + "\n"


def format_events(events: Iterable[ListModeEvent]) -> str:
    lines = ["# event_id t x_mm y_mm z_mm e_kev"]
    for ev in events:
        for it in ev.interactions:
            x, y, z = (float(v) for v in it.position)
            lines.append(f"{ev.event_id} {ev.t!r} {x!r} {y!r} {z!r} {it.energy_dep!r}")
    return "\n".join(lines) + "\n"


def write_events(events: Iterable[ListModeEvent], path) -> None:
    Path(path).write_text(format_events(events))


def read_events(path) -> list[ListModeEvent]:
    events: list[ListModeEvent] = []
    current_id = None
    current_t = 0.0
    hits: list[Interaction] = []
    seen: set[int] = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise EventFormatError(f"{path}:{lineno}: expected 6 fields")
        eid = int(parts[0])
        t, x, y, z, e = (float(v) for v in parts[1:])
        if eid != current_id:
            if current_id is not None:
                events.append(ListModeEvent(current_id, current_t, tuple(hits)))
            if eid in seen:
                raise EventFormatError(f"{path}:{lineno}: event {eid} is not contiguous")
            seen.add(eid)
            current_id, current_t, hits = eid, t, []
        hits.append(Interaction((x, y, z), e))
    if current_id is not None:
        events.append(ListModeEvent(current_id, current_t, tuple(hits)))
    return events
