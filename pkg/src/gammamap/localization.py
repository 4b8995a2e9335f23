"""Peak extraction from reconstructed grids and scoring against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .reconstruction import VoxelGrid

OK = "ok"
INSUFFICIENT = "insufficient_counts"
AMBIGUOUS = "ambiguous_peaks"
STATUSES = (OK, INSUFFICIENT, AMBIGUOUS)


class EmptyGrid(ValueError):
    pass


class LabelMismatch(KeyError):
    pass


class NoOkRows(ValueError):
    pass


@dataclass(frozen=True)
class SourceEstimate:
    window_label: str
    position: tuple[float, float, float]
    value: float
    rank: int
    index: int = -1


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    window: str
    truth: tuple[float, float, float]
    estimate: tuple[float, float, float] | None
    error: float | None
    status: str
    counts: int
    source_id: str = ""


@dataclass(frozen=True)
class Summary:
    mean_error: float
    max_error: float
    n_ok: int
    n_na: int


def _suppress(values: np.ndarray, grid: VoxelGrid, index: int, radius: float) -> None:
    d = np.linalg.norm(grid.centers - grid.center(index), axis=1)
    values[d <= radius] = 0.0


def _greedy_peaks(grid: VoxelGrid, n: int, radius: float) -> list[tuple[int, float]]:
    values = grid.values.copy()
    peaks = []
    for _ in range(n):
        j = int(np.argmax(values))
        v = float(values[j])
        if v <= 0:
            break
        peaks.append((j, v))
        _suppress(values, grid, j, radius)
    return peaks


def extract_peaks(
    grid: VoxelGrid,
    max_peaks: int = 1,
    suppression_radius_m: float = 1.0,
    peak_fraction: float = 0.5,
    label: str = "",
) -> list[SourceEstimate]:
    """Greedy non-maximum suppression over voxel values.

    Take the global maximum, zero everything within the suppression radius,
    repeat; later peaks below ``peak_fraction`` of the first are dropped.
    """
    if max_peaks < 1:
        raise ValueError("max_peaks must be >= 1")
    if suppression_radius_m < grid.resolution:
        raise ValueError("suppression radius must be at least one voxel")
    peaks = _greedy_peaks(grid, max_peaks, suppression_radius_m)
    if not peaks:
        raise EmptyGrid("grid has no positive voxel")
    first = peaks[0][1]
    out = []
    for rank, (j, v) in enumerate(peaks):
        if rank > 0 and v < peak_fraction * first:
            break
        out.append(SourceEstimate(label, tuple(float(x) for x in grid.center(j)), v, rank, j))
    return out


def runner_up_ratio(grid: VoxelGrid, n_taken: int, suppression_radius_m: float) -> float:
    """Height of the best peak after the first ``n_taken``, relative to the first."""
    peaks = _greedy_peaks(grid, n_taken + 1, suppression_radius_m)
    if len(peaks) <= n_taken:
        return 0.0
    return peaks[n_taken][1] / peaks[0][1]


def score(
    estimates: Sequence[SourceEstimate],
    truths: Sequence,
    counts: Mapping[str, int],
    scenario: str = "",
    min_counts: int = 20,
    ambiguous: Iterable[str] = (),
) -> list[ReportRow]:
    """Match estimates to same-window truths, nearest pairs first.

    ``truths`` carry ``isotope``, ``position`` and ``source_id``; ``counts``
    maps every reconstructed window label to its imageable count.
    """
    ambiguous = set(ambiguous)
    rows: list[ReportRow] = []
    for truth in truths:
        if truth.isotope not in counts:
            raise LabelMismatch(f"no reconstruction output for window {truth.isotope!r}")
    for label in dict.fromkeys(t.isotope for t in truths):
        group = [t for t in truths if t.isotope == label]
        n = int(counts[label])
        if n < min_counts or label in ambiguous:
            status = INSUFFICIENT if n < min_counts else AMBIGUOUS
            rows += [
                ReportRow(scenario, label, tuple(t.position), None, None, status, n, t.source_id)
                for t in group
            ]
            continue
        cands = sorted(
            (e for e in estimates if e.window_label == label), key=lambda e: (e.position, e.value)
        )
        pairs = sorted(
            (math.dist(e.position, t.position), ti, ei)
            for ti, t in enumerate(group)
            for ei, e in enumerate(cands)
        )
        assigned: dict[int, int] = {}
        used: set[int] = set()
        for dist, ti, ei in pairs:
            if ti in assigned or ei in used:
                continue
            assigned[ti] = ei
            used.add(ei)
        for ti, t in enumerate(group):
            if ti in assigned:
                e = cands[assigned[ti]]
                err = math.dist(e.position, t.position)
                rows.append(ReportRow(scenario, label, tuple(t.position), e.position, err, OK, n, t.source_id))
            else:
                rows.append(ReportRow(scenario, label, tuple(t.position), None, None, AMBIGUOUS, n, t.source_id))
    return rows


def summary(rows: Sequence[ReportRow]) -> Summary:
    if not rows:
        raise ValueError("summary needs at least one report row")
    errors = [r.error for r in rows if r.status == OK]
    if not errors:
        raise NoOkRows("no source was localized")
    return Summary(float(np.mean(errors)), float(max(errors)), len(errors), len(rows) - len(errors))


def _f(x) -> str:
    return "nan" if x is None else repr(float(x))


def format_report(rows: Sequence[ReportRow], with_summary: bool = True) -> str:
    lines = ["# scenario window truth_x truth_y truth_z est_x est_y est_z error status counts"]
    for r in rows:
        est = r.estimate or (None, None, None)
        fields = [r.scenario, r.window, *map(_f, r.truth), *map(_f, est), _f(r.error), r.status, str(r.counts)]
        lines.append(" ".join(fields))
    if with_summary and rows:
        lines.append("# summary")
        try:
            s = summary(rows)
            lines += [
                f"# mean_error {s.mean_error!r}",
                f"# max_error {s.max_error!r}",
                f"# ok_rows {s.n_ok}",
                f"# na_rows {s.n_na}",
            ]
        except NoOkRows:
            lines += ["# mean_error nan", "# max_error nan", "# ok_rows 0", f"# na_rows {len(rows)}"]
    return "\n".join(lines) + "\n"


def write_report(rows: Sequence[ReportRow], path) -> None:
    Path(path).write_text(format_report(rows))


def parse_report(text: str) -> list[ReportRow]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        p = line.split()
        if len(p) != 11:
            raise ValueError(f"bad report line: {line!r}")

        def num(s):
            return None if s == "nan" else float(s)

        truth = tuple(float(x) for x in p[2:5])
        est = None if p[5] == "nan" else tuple(float(x) for x in p[5:8])
        rows.append(ReportRow(p[0], p[1], truth, est, num(p[8]), p[9], int(p[10])))
    return rows


def read_report(path) -> list[ReportRow]:
    return parse_report(Path(path).read_text())
