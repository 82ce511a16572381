"""Command-line front end: replication batches over scenario/profile/policy grids.

Usage::

    python -m vodswarm --scenario lp --profile hi --policy all --reps 30 --out results/

Every cell gets its own summary CSV; a comparison table puts the three
policies side by side for each scenario and profile. The exit code is 0 on
success, 2 when some metric's 95% interval is wider than 5% of its mean
(results are still written) and 1 on error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .engine import SimulationError
from .metrics import METRICS, aggregate, finalize_run, fmt, per_run_csv
from .model import ConfigError, ScenarioConfig, build_scenario, parse_config_entries
from .swarm import simulate

log = logging.getLogger(__name__)

SCENARIOS = ("op", "lp", "bp")
PROFILE_LABELS = ("hi", "mi", "li")
POLICIES = ("original", "sbnp", "qbps")

SUMMARY_HEADER = ("scenario", "profile", "policy", "metric", "mean", "ci_low", "ci_high",
                  "rel_halfwidth", "reps")

EXIT_OK, EXIT_ERROR, EXIT_CI_FLAG = 0, 1, 2


@dataclass(frozen=True)
class Cell:
    scenario: str
    profile: str
    policy: str

    @property
    def tag(self) -> str:
        return f"{self.scenario}_{self.profile}_{self.policy}"


@dataclass
class RunMatrix:
    cells: list
    reps: int = 30
    base_seed: int = 1
    out_dir: Path = Path("results")
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    emit: str = "summary"

    def seed(self, cell_index: int, rep: int) -> int:
        return self.base_seed + cell_index * self.reps + rep

    def config(self, cell_index: int, rep: int) -> ScenarioConfig:
        cell = self.cells[cell_index]
        return self.base.with_overrides(provision=cell.scenario, profile=cell.profile,
                                        kind=cell.policy, seed=self.seed(cell_index, rep))


def _axis(flag, configured, choices):
    value = flag if flag is not None else configured
    if value is None or value == "all":
        return list(choices)
    return [value]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vodswarm", description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=SCENARIOS + ("all",))
    ap.add_argument("--profile", choices=PROFILE_LABELS + ("all",))
    ap.add_argument("--policy", choices=POLICIES + ("all",))
    ap.add_argument("--reps", type=int, help="replications per cell (default 30)")
    ap.add_argument("--seed", type=int, help="base seed (default 1)")
    ap.add_argument("--duration", type=float, help="simulated seconds per run (default 7200)")
    ap.add_argument("--config", type=Path, help="key = value file overriding the defaults")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--emit", choices=("summary", "per-run", "trace"), default="summary")
    return ap


def parse_args(argv=None) -> RunMatrix:
    ap = build_parser()
    args = ap.parse_args(argv)
    entries = {}
    if args.config is not None:
        try:
            entries = parse_config_entries(args.config.read_text())
        except (OSError, ConfigError) as exc:
            ap.error(f"--config: {exc}")
    base = ScenarioConfig().with_overrides(**entries)
    if args.duration is not None:
        base = base.with_overrides(duration=args.duration)
    reps = args.reps if args.reps is not None else base.replications
    seed = args.seed if args.seed is not None else base.seed
    if reps < 1:
        ap.error("--reps must be at least 1")
    if not base.duration > 0:
        ap.error("--duration must be positive")
    cells = [Cell(s, p, k)
             for s in _axis(args.scenario, entries.get("provision"), SCENARIOS)
             for p in _axis(args.profile, entries.get("profile"), PROFILE_LABELS)
             for k in _axis(args.policy, entries.get("kind"), POLICIES)]
    try:
        build_scenario(base.with_overrides(provision=cells[0].scenario,
                                           profile=cells[0].profile, kind=cells[0].policy))
    except ConfigError as exc:
        ap.error(str(exc))
    return RunMatrix(cells, reps, seed, args.out, base, args.emit)


def run_cell(matrix: RunMatrix, index: int, *, check_invariants=False, trace=False):
    """Run every replication of one cell; returns the list of :class:`RunResult`."""
    results = []
    for rep in range(matrix.reps):
        scenario = build_scenario(matrix.config(index, rep))
        results.append(simulate(scenario, check_invariants=check_invariants, trace=trace))
    return results


def summary_rows(cell: Cell, summary) -> list:
    return [[cell.scenario, cell.profile, cell.policy, name, fmt(s.mean), fmt(s.ci_low),
             fmt(s.ci_high), fmt(s.rel_halfwidth), s.n_runs]
            for name, s in ((m, summary[m]) for m in METRICS)]


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_trace(path: Path, trace):
    _write_csv(path, ("time", "event", "peer", "detail"),
               ([fmt(t), kind, peer, "" if detail is None else detail]
                for t, kind, peer, detail in trace))


def comparison_rows(summaries: dict) -> list:
    """One row per (scenario, profile, metric) with each policy's mean side by side."""
    groups = {}
    for cell, summary in summaries.items():
        groups.setdefault((cell.scenario, cell.profile), {})[cell.policy] = summary
    rows = []
    for (scen, prof), by_policy in groups.items():
        for name in METRICS:
            rows.append([scen, prof, name] + [
                fmt(by_policy[k][name].mean) if k in by_policy else "" for k in POLICIES])
    return rows


def execute(matrix: RunMatrix) -> int:
    out = matrix.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        log.error("cannot write to %s: %s", out, exc)
        return EXIT_ERROR
    summaries = {}
    flagged = False
    status = EXIT_OK
    try:
        for index, cell in enumerate(matrix.cells):
            results = run_cell(matrix, index, trace=matrix.emit == "trace")
            reports = [finalize_run(r.ledgers, r.served) for r in results]
            summary = aggregate(reports)
            summaries[cell] = summary
            _write_csv(out / f"summary_{cell.tag}.csv", SUMMARY_HEADER,
                       summary_rows(cell, summary))
            if matrix.emit == "per-run":
                seeds = [matrix.seed(index, rep) for rep in range(matrix.reps)]
                (out / f"per_run_{cell.tag}.csv").write_text(per_run_csv(reports, seeds))
            elif matrix.emit == "trace":
                for rep, r in enumerate(results):
                    _write_trace(out / f"trace_{cell.tag}_rep{rep}.csv", r.trace)
            for s in summary.values():
                if s.flagged:
                    flagged = True
                    log.info("%s: %s relative half-width %.3g exceeds 5%%",
                             cell.tag, s.name, s.rel_halfwidth)
    except SimulationError as exc:
        log.error("simulation failed: %s", exc)
        status = EXIT_ERROR
    finally:
        _write_csv(out / "comparison.csv", ("scenario", "profile", "metric") + POLICIES,
                   comparison_rows(summaries))
    if status == EXIT_OK and flagged:
        status = EXIT_CI_FLAG
    return status


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    matrix = parse_args(argv)
    return execute(matrix)


if __name__ == "__main__":
    sys.exit(main())
