"""Command-line harness: simulate, reconstruct, localize and report.

    gammamap run --scenario test1.cfg --seed 7 --out runs/t1
    gammamap run --scenario test1.cfg --out runs/t1 --stages reconstruct,localize,report
    gammamap table1 --out runs/sweep
    gammamap scenarios --out my_scenarios

Every stage writes its artifacts into ``--out`` and records a content key in
``manifest.json``. A later stage only reuses earlier artifacts whose key
matches the current scenario, seed and settings.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .geometry import write_trajectory
from .localization import OK, NoOkRows, ReportRow, format_report, read_report, summary
from .physics import check_windows, format_spectrum, read_events, spectrum, write_events
from .pipeline import (
    PipelineSettings,
    WindowResult,
    build_cones,
    localize,
    reconstruct_windows,
    reconstruction_timeline,
)
from .reconstruction import read_grid, write_grid, write_grid_text
from .scenarios import REFERENCE_TESTS, bundled_dir, write_bundled
from .simulator import (
    Scenario,
    ScenarioError,
    exposure,
    load_scenario,
    scenario_hash,
    simulate,
    write_truth,
)

logger = logging.getLogger("gammamap")

STAGES = ("simulate", "reconstruct", "localize", "report")
SPECTRUM_BIN_KEV = 2.0
MANIFEST = "manifest.json"

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2


class InvalidInput(Exception):
    """Bad flags, unreadable scenario, or mismatched artifacts."""


class StageFailure(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(str(exc))
        self.stage = stage
        self.exc = exc


def error_line(stage: str, exc: BaseException) -> str:
    msg = " ".join(str(exc).split()) or exc.__class__.__name__
    return f"ERROR stage={stage} type={type(exc).__name__} message={msg}"


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass
class RunConfig:
    scenario_path: Path
    out: Path
    stages: tuple[str, ...]
    seed: int | None = None
    iterations: int | None = None
    resolution: float | None = None
    window_width: float | None = None
    perturb_pose: tuple[float, float] = (0.0, 0.0)


def parse_stages(text: str) -> tuple[str, ...]:
    if text.strip() == "all":
        return STAGES
    asked = [s.strip() for s in text.split(",") if s.strip()]
    unknown = [s for s in asked if s not in STAGES]
    if unknown or not asked:
        raise InvalidInput(f"unknown stage(s) {unknown or text!r}; choose from {', '.join(STAGES)} or all")
    # always execute in pipeline order
    return tuple(s for s in STAGES if s in asked)


def parse_pose_noise(text: str | None) -> tuple[float, float]:
    if not text:
        return (0.0, 0.0)
    parts = text.split(",")
    if len(parts) != 2:
        raise InvalidInput("--perturb-pose expects sigma_t,sigma_rot")
    try:
        st, sr = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise InvalidInput(f"--perturb-pose: {exc}") from None
    if st < 0 or sr < 0:
        raise InvalidInput("--perturb-pose sigmas must be non-negative")
    return st, sr


class Run:
    """One scenario run with on-disk artifacts and stage keys."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        try:
            scn = load_scenario(cfg.scenario_path)
            self.scn_hash = scenario_hash(cfg.scenario_path)
        except (OSError, ScenarioError, ValueError, KeyError) as exc:
            raise InvalidInput(f"{cfg.scenario_path}: {exc}") from exc
        if cfg.seed is not None:
            scn.seed = int(cfg.seed)
        if cfg.window_width is not None:
            scn.windows = [replace(w, width=float(cfg.window_width)) for w in scn.windows]
        try:
            scn.validate()
            check_windows(scn.windows)
            self.settings = PipelineSettings.for_scenario(
                scn, iterations=cfg.iterations, resolution=cfg.resolution
            )
        except (ScenarioError, ValueError, KeyError) as exc:
            raise InvalidInput(str(exc)) from exc
        self.scn: Scenario = scn
        self.out = cfg.out
        self.keys = {
            "simulate": _digest([self.scn_hash, scn.seed]),
        }
        windows = [[w.label, w.center, w.width] for w in scn.windows]
        recon_settings = dict(asdict(self.settings.recon), resolution=self.settings.resolution)
        self.keys["reconstruct"] = _digest(
            [self.keys["simulate"], recon_settings, windows, list(cfg.perturb_pose)]
        )
        self.keys["localize"] = _digest([self.keys["reconstruct"], self.settings.as_dict()])
        self.keys["report"] = self.keys["localize"]

    # -- manifest -------------------------------------------------------------

    def _manifest(self) -> dict:
        path = self.out / MANIFEST
        if not path.exists():
            return {"stages": {}}
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"corrupt manifest {path}: {exc}") from exc

    def _record(self, stage: str) -> None:
        man = self._manifest()
        man.update(
            scenario=str(self.cfg.scenario_path),
            scenario_hash=self.scn_hash,
            seed=self.scn.seed,
            settings=self.settings.as_dict(),
            settings_hash=_digest(self.settings.as_dict()),
            perturb_pose=list(self.cfg.perturb_pose),
        )
        stages = man.setdefault("stages", {})
        stages[stage] = {"key": self.keys[stage]}
        # anything downstream is now stale
        for later in STAGES[STAGES.index(stage) + 1:]:
            stages.pop(later, None)
        (self.out / MANIFEST).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")

    def _require(self, stage: str) -> None:
        rec = self._manifest()["stages"].get(stage)
        if rec is None:
            raise InvalidInput(f"no {stage} artifacts in {self.out}; run that stage first")
        if rec["key"] != self.keys[stage]:
            raise InvalidInput(
                f"{stage} artifacts in {self.out} were produced from a different scenario, seed or settings"
            )

    # -- stages ---------------------------------------------------------------

    def simulate(self) -> None:
        events, truth = simulate(self.scn)
        write_events(events, self.out / "events.txt")
        write_truth(truth, self.out / "truth.txt")
        timeline = exposure(self.scn.trajectory, self.scn.motion).timeline
        write_trajectory(timeline, self.out / "poses.txt", header=("exposure timeline",))
        hist = spectrum(events, SPECTRUM_BIN_KEV)
        (self.out / "spectrum.txt").write_text(format_spectrum(hist, SPECTRUM_BIN_KEV))
        logger.info("%s: %d events", self.scn.name, len(events))

    def reconstruct(self) -> None:
        self._require("simulate")
        events = read_events(self.out / "events.txt")
        timeline = exposure(self.scn.trajectory, self.scn.motion).timeline
        recon_tl = reconstruction_timeline(timeline, self.scn.seed, *self.cfg.perturb_pose)
        if recon_tl is not timeline:
            write_trajectory(recon_tl, self.out / "poses_reconstruction.txt")
        cone_set = build_cones(events, self.scn, recon_tl)
        for old in self.out.glob("grid_*"):
            old.unlink()
        results = reconstruct_windows(cone_set, self.scn, self.settings)
        for label, res in results.items():
            write_grid(res.grid, self.out / f"grid_{label}.gvx")
            write_grid_text(res.grid, self.out / f"grid_{label}.txt")
        info = {
            "counts": cone_set.counts,
            "skipped": dict(cone_set.skipped),
            "windows": {
                label: {"n_cones": r.n_cones, "iterations": len(r.loglik) - 1, "loglik": r.loglik}
                for label, r in results.items()
            },
        }
        (self.out / "reconstruction.json").write_text(json.dumps(info, indent=2) + "\n")

    def localize(self) -> None:
        self._require("reconstruct")
        info = json.loads((self.out / "reconstruction.json").read_text())
        results = {}
        for label, meta in info["windows"].items():
            grid = read_grid(self.out / f"grid_{label}.gvx")
            results[label] = WindowResult(grid, meta["loglik"], meta["n_cones"])
        rows = localize(self.scn, info["counts"], results, self.settings.localization)
        (self.out / "localization.txt").write_text(format_report(rows, with_summary=False))

    def report(self) -> list[ReportRow]:
        self._require("localize")
        rows = read_report(self.out / "localization.txt")
        (self.out / "report.txt").write_text(format_report(rows))
        return rows

    def execute(self) -> list[ReportRow] | None:
        self.out.mkdir(parents=True, exist_ok=True)
        rows = None
        for stage in self.cfg.stages:
            t0 = time.perf_counter()
            try:
                result = getattr(self, stage)()
            except InvalidInput:
                raise
            except Exception as exc:  # any stage failure is reported, not raised
                raise StageFailure(stage, exc) from exc
            if stage == "report":
                rows = result
            self._record(stage)
            logger.info("%s: %s done in %.1f s", self.scn.name, stage, time.perf_counter() - t0)
        return rows


# -- table ---------------------------------------------------------------------


def _row_text(row: ReportRow) -> str:
    return f"{row.error:.2f}" if row.status == OK else row.status


def format_table(per_test: dict[int, list[ReportRow] | str]) -> str:
    lines = [f"{'test':>4}  {'motion':<34} {'source':<16} {'counts':>6}  {'error_m':<20} {'reference':>9}"]
    for pub in REFERENCE_TESTS:
        got = per_test.get(pub.test)
        if isinstance(got, str) or got is None:
            lines.append(f"{pub.test:>4}  {pub.motion:<34} {'failed: ' + (got or 'not run')}")
            continue
        remaining = list(got)
        for k, ps in enumerate(pub.sources):
            row = next((r for r in remaining if r.window == ps.isotope), None)
            if row is None:
                continue
            remaining.remove(row)
            label = f"{row.window} {ps.activity_uci:g}uCi"
            ref = "n/a" if ps.error_m is None else f"{ps.error_m:.2f}"
            motion = pub.motion if k == 0 else ""
            head = f"{pub.test:>4}" if k == 0 else " " * 4
            lines.append(
                f"{head}  {motion:<34} {label:<16} {row.counts:>6}  {_row_text(row):<20} {ref:>9}"
            )
    rows = [r for v in per_test.values() if isinstance(v, list) for r in v]
    try:
        s = summary(rows) if rows else None
    except NoOkRows:
        s = None
    if s is None:
        lines.append("mean error over ok rows: n/a")
    else:
        lines.append(
            f"mean error over ok rows: {s.mean_error:.3f} m (max {s.max_error:.3f} m, "
            f"{s.n_ok} ok, {s.n_na} not localized)"
        )
    return "\n".join(lines) + "\n"


# -- entry points ----------------------------------------------------------------


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--iterations", type=int, help="MLEM iterations")
    p.add_argument("--resolution", type=float, help="voxel edge in metres")
    p.add_argument("--window-width", type=float, help="energy window width in keV")
    p.add_argument("--perturb-pose", metavar="SIGMA_T,SIGMA_ROT", help="pose noise in m and rad")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gammamap", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--stages", default="all", help="all, or a comma list of " + ",".join(STAGES))
    _common_flags(run)

    tab = sub.add_parser("table1", help="run all nine bundled scenario analogs")
    tab.add_argument("--scenario-dir", type=Path, default=None)
    tab.add_argument("--out", type=Path, default=Path("table1_runs"))
    _common_flags(tab)

    gen = sub.add_parser("scenarios", help="write the bundled scenario files")
    gen.add_argument("--out", required=True, type=Path)
    return ap


def _run_config(args, scenario: Path, out: Path, stages) -> RunConfig:
    if args.iterations is not None and args.iterations < 1:
        raise InvalidInput("--iterations must be >= 1")
    if args.resolution is not None and not args.resolution > 0:
        raise InvalidInput("--resolution must be positive")
    if args.window_width is not None and not args.window_width > 0:
        raise InvalidInput("--window-width must be positive")
    return RunConfig(
        scenario_path=scenario,
        out=out,
        stages=stages,
        seed=args.seed,
        iterations=args.iterations,
        resolution=args.resolution,
        window_width=args.window_width,
        perturb_pose=parse_pose_noise(args.perturb_pose),
    )


def cmd_run(args) -> int:
    cfg = _run_config(args, args.scenario, args.out, parse_stages(args.stages))
    rows = Run(cfg).execute()
    if rows is not None:
        sys.stdout.write(format_report(rows))
    return EXIT_OK


def cmd_table1(args) -> int:
    directory = args.scenario_dir or bundled_dir()
    per_test: dict[int, list[ReportRow] | str] = {}
    status = EXIT_OK
    for pub in REFERENCE_TESTS:
        path = directory / f"test{pub.test}.cfg"
        try:
            if not path.exists():
                raise InvalidInput(f"missing scenario file {path}")
            cfg = _run_config(args, path, args.out / f"test{pub.test}", STAGES)
            per_test[pub.test] = Run(cfg).execute() or []
        except (InvalidInput, StageFailure) as exc:
            stage = exc.stage if isinstance(exc, StageFailure) else "input"
            print(error_line(stage, exc), file=sys.stderr)
            per_test[pub.test] = f"{type(exc).__name__}"
            status = EXIT_PARTIAL
    text = format_table(per_test)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "table1.txt").write_text(text)
    rows = [r for v in per_test.values() if isinstance(v, list) for r in v]
    (args.out / "report.txt").write_text(format_report(rows))
    sys.stdout.write(text)
    return status


def cmd_scenarios(args) -> int:
    for path in write_bundled(args.out):
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "table1": cmd_table1, "scenarios": cmd_scenarios}
    try:
        return handlers[args.command](args)
    except InvalidInput as exc:
        print(error_line("input", exc), file=sys.stderr)
        return EXIT_INVALID
    except StageFailure as exc:
        print(error_line(exc.stage, exc.exc), file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
