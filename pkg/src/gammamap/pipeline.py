"""Scenario-level glue: events -> cones -> per-window grids -> report rows."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .geometry import Trajectory, pose_at
from .localization import ReportRow, extract_peaks, runner_up_ratio, score
from .physics import (
    ConeOfResponse,
    DegenerateLeverArm,
    KinematicallyForbidden,
    ListModeEvent,
    cone_from_event,
    match_window,
)
from .reconstruction import ReconSettings, SystemMatrix, VoxelGrid, mlem
from .simulator import Scenario, exposure, perturb_trajectory, simulate

logger = logging.getLogger(__name__)


@dataclass
class LocalizationSettings:
    min_counts: int = 20
    max_peaks: int = 1
    suppression_radius: float = 1.0
    peak_fraction: float = 0.5


@dataclass
class PipelineSettings:
    resolution: float = 0.1
    recon: ReconSettings = field(default_factory=ReconSettings)
    localization: LocalizationSettings = field(default_factory=LocalizationSettings)

    @classmethod
    def for_scenario(cls, scn: Scenario, **overrides) -> "PipelineSettings":
        """Defaults, then the scenario's own sections, then explicit overrides."""
        rec = dict(scn.settings.get("reconstruction", {}))
        loc = dict(scn.settings.get("localization", {}))
        resolution = float(rec.pop("resolution", 0.1))
        recon = ReconSettings(**_typed(ReconSettings, rec))
        localization = LocalizationSettings(**_typed(LocalizationSettings, loc))
        out = cls(resolution, recon, localization)
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "resolution":
                out.resolution = float(value)
            elif hasattr(out.recon, key):
                setattr(out.recon, key, value)
            elif hasattr(out.localization, key):
                setattr(out.localization, key, value)
            else:
                raise KeyError(f"unknown setting {key!r}")
        return out

    def as_dict(self) -> dict:
        d = {"resolution": self.resolution}
        d.update({f.name: getattr(self.recon, f.name) for f in fields(self.recon)})
        d.update({f.name: getattr(self.localization, f.name) for f in fields(self.localization)})
        return d


def _typed(cls, raw: dict) -> dict:
    out = {}
    kinds = {f.name: f.type for f in fields(cls)}
    for key, value in raw.items():
        if key not in kinds:
            raise KeyError(f"unknown {cls.__name__} key {key!r}")
        kind = kinds[key]
        if value.strip().lower() == "none":
            out[key] = None
        elif "int" in str(kind):
            out[key] = int(value)
        else:
            out[key] = float(value)
    return out


def imaging_grid(scn: Scenario, resolution: float) -> VoxelGrid:
    return VoxelGrid.from_bounds(scn.room_min, scn.room_max, resolution, fill=1.0)


@dataclass
class ConeSet:
    counts: dict[str, int]
    cones: dict[str, list[ConeOfResponse]]
    skipped: Counter


def build_cones(
    events: Sequence[ListModeEvent], scn: Scenario, timeline: Trajectory
) -> ConeSet:
    """Classify events and build world-frame cones per window label."""
    counts = {label: 0 for label in scn.window_labels}
    cones: dict[str, list[ConeOfResponse]] = defaultdict(list)
    skipped: Counter = Counter()
    for ev in events:
        window = match_window(ev, scn.windows)
        if window is None:
            continue
        counts[window.label] += 1
        try:
            cone = cone_from_event(ev, window, pose_at(timeline, ev.t), scn.detector)
        except DegenerateLeverArm:
            skipped["degenerate_lever_arm"] += 1
            continue
        except KinematicallyForbidden:
            skipped["kinematically_forbidden"] += 1
            continue
        cones[window.label].append(cone)
    return ConeSet(counts, dict(cones), skipped)


@dataclass
class WindowResult:
    grid: VoxelGrid
    loglik: list[float]
    n_cones: int


def reconstruct_windows(
    cone_set: ConeSet, scn: Scenario, settings: PipelineSettings
) -> dict[str, WindowResult]:
    """Independent MLEM per window with enough imageable counts."""
    out = {}
    for label in scn.window_labels:
        cones = cone_set.cones.get(label, [])
        if cone_set.counts[label] < settings.localization.min_counts or not cones:
            continue
        grid0 = imaging_grid(scn, settings.resolution)
        sm = SystemMatrix(cones, grid0, settings.recon)
        if sm.n_rows == 0:
            continue
        grid, ll = mlem(sm, grid0, settings.recon)
        out[label] = WindowResult(grid, ll, sm.n_rows)
    return out


def localize(
    scn: Scenario,
    counts: dict[str, int],
    results: dict[str, WindowResult],
    settings: LocalizationSettings,
) -> list[ReportRow]:
    estimates = []
    ambiguous = []
    for label, res in results.items():
        peaks = extract_peaks(
            res.grid, settings.max_peaks, settings.suppression_radius, settings.peak_fraction, label
        )
        estimates += peaks
        ratio = runner_up_ratio(res.grid, len(peaks), settings.suppression_radius)
        if ratio >= settings.peak_fraction:
            logger.info("%s %s: runner-up peak at %.2f of the first", scn.name, label, ratio)
            ambiguous.append(label)
    # windows that were never reconstructed still need a count entry
    return score(estimates, scn.sources, counts, scn.name, settings.min_counts, ambiguous)


@dataclass
class ScenarioResult:
    events: list[ListModeEvent]
    truth: dict[int, str]
    timeline: Trajectory
    cones: ConeSet
    windows: dict[str, WindowResult]
    rows: list[ReportRow]


def run_scenario(
    scn: Scenario,
    settings: PipelineSettings | None = None,
    pose_noise: tuple[float, float] = (0.0, 0.0),
    events: Sequence[ListModeEvent] | None = None,
    truth: dict[int, str] | None = None,
) -> ScenarioResult:
    """Simulate (unless ``events`` are given), reconstruct and score one scenario.

    ``pose_noise`` perturbs the timeline used for reconstruction only; the
    simulation always uses the true poses.
    """
    settings = settings or PipelineSettings.for_scenario(scn)
    if events is None:
        events, truth = simulate(scn)
    timeline = exposure(scn.trajectory, scn.motion).timeline
    recon_timeline = reconstruction_timeline(timeline, scn.seed, *pose_noise)
    cone_set = build_cones(events, scn, recon_timeline)
    windows = reconstruct_windows(cone_set, scn, settings)
    rows = localize(scn, cone_set.counts, windows, settings.localization)
    return ScenarioResult(list(events), truth or {}, timeline, cone_set, windows, rows)


def reconstruction_timeline(timeline: Trajectory, seed: int, sigma_t: float, sigma_rot: float) -> Trajectory:
    if sigma_t == 0 and sigma_rot == 0:
        return timeline
    pseed = int(np.random.SeedSequence([seed, 0x504F5345]).generate_state(1, dtype=np.uint64)[0])
    return perturb_trajectory(timeline, sigma_t, sigma_rot, pseed)
