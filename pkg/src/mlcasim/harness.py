"""Monte Carlo experiment runner and command-line entry point.

Runs every (policy, AV count) cell of a plan for ``iterations`` seeds,
writes one CSV per cell plus ``summary.csv`` and the plot tables
``fig2.dat`` .. ``fig5.dat``, and prints a deviation report against the
published reference values.

Exit codes: 0 ok, 1 incomplete figure data in ``--strict`` mode,
2 configuration error, 3 MLCA validation failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import multiprocessing
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .config import ExperimentPlan, dump_config, load_config, plan_from_items
from .core import POLICY_ORDER, ConfigError, PolicyId
from .engine import run_iteration
from .metrics import CHECKPOINTS_KM, CheckpointTable, TrialSummary, average_trials, round_half_up
from .mlca import MLCAInvariantError
from .scenario import ScenarioConfig

log = logging.getLogger("mlcasim")

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3

TRIAL_HEADER = ["seed", "c5", "c10", "c15", "c20", "collisions"]
SUMMARY_HEADER = [
    "policy", "avs", "iterations",
    "mean_c5", "mean_c10", "mean_c15", "mean_c20", "mean_collisions", "collisions_per_100",
    "c5", "c10", "c15", "c20", "accidents_per_100",
]

# reference cumulative counts at 5/10/15/20 km and accidents per 100 trials
PAPER_TARGETS: dict[tuple[PolicyId, int], tuple[int, int, int, int]] = {
    (PolicyId.LC2017, 1): (1, 2, 4, 5), (PolicyId.LC2017, 3): (2, 6, 9, 14),
    (PolicyId.MOBIL, 1): (1, 2, 3, 4), (PolicyId.MOBIL, 3): (2, 5, 9, 13),
    (PolicyId.IDM_LC, 1): (1, 2, 4, 6), (PolicyId.IDM_LC, 3): (3, 7, 8, 13),
    (PolicyId.CONTINUOUS, 1): (0, 1, 3, 4), (PolicyId.CONTINUOUS, 3): (3, 6, 9, 12),
    (PolicyId.MLCA, 1): (0, 1, 2, 4), (PolicyId.MLCA, 3): (4, 7, 11, 13),
    (PolicyId.NONE, 1): (1, 3, 5, 8), (PolicyId.NONE, 3): (5, 9, 17, 20),
}
PAPER_ACCIDENTS: dict[PolicyId, int] = {
    PolicyId.LC2017: 0, PolicyId.MOBIL: 2, PolicyId.IDM_LC: 1,
    PolicyId.CONTINUOUS: 0, PolicyId.MLCA: 1, PolicyId.NONE: 6,
}
FIGURES: dict[str, tuple[PolicyId, ...]] = {
    "fig2.dat": (PolicyId.LC2017, PolicyId.MOBIL),
    "fig3.dat": (PolicyId.IDM_LC, PolicyId.CONTINUOUS),
    "fig4.dat": (PolicyId.MLCA, PolicyId.NONE),
}
LANE_CHANGE_TOLERANCE = 3
ACCIDENT_TOLERANCE = 2


class ValidationFailure(RuntimeError):
    def __init__(self, policy: PolicyId, n_tracked: int, seed: int, label: str, record: dict):
        super().__init__(f"{policy.value} {n_tracked}AV seed {seed}: {label} {record}")
        self.label = label
        self.record = record


# ---------------------------------------------------------------------------
# running


def _run_one(job: tuple[ScenarioConfig, PolicyId, int, int, bool]) -> TrialSummary:
    cfg, policy, n_tracked, seed, validate = job
    scen = cfg.with_(n_tracked=n_tracked)
    try:
        ilog = run_iteration(scen, policy, seed, validate=validate)
    except MLCAInvariantError as exc:
        raise ValidationFailure(policy, n_tracked, seed, exc.label, exc.record) from None
    if validate and ilog.violations:
        label, record = ilog.violations[0]
        raise ValidationFailure(policy, n_tracked, seed, label, record)
    return TrialSummary.from_log(ilog)


def run_cell(cfg: ScenarioConfig, policy: PolicyId, n_tracked: int, seeds: Sequence[int],
             validate: bool = False, pool=None) -> list[TrialSummary]:
    """Run one (policy, AV count) cell; results come back sorted by seed."""
    jobs = [(cfg, policy, n_tracked, s, validate) for s in seeds]
    if pool is None:
        out = [_run_one(j) for j in jobs]
    else:
        out = pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * _pool_size(pool))))
    return sorted(out, key=lambda t: t.seed)


def _pool_size(pool) -> int:
    return getattr(pool, "_processes", 1) or 1


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class SummaryRow:
    policy: PolicyId
    avs: int
    iterations: int
    means: tuple[float, ...]
    mean_collisions: float

    @property
    def presented(self) -> tuple[int, ...]:
        return tuple(round_half_up(m) for m in self.means)

    @property
    def collisions_per_100(self) -> float:
        return 100.0 * self.mean_collisions

    @property
    def accidents_per_100(self) -> int:
        return round_half_up(self.collisions_per_100)

    @classmethod
    def from_trials(cls, policy: PolicyId, avs: int, trials: Sequence[TrialSummary]) -> "SummaryRow":
        avg = average_trials(trials)
        return cls(policy, avs, avg.n_trials, avg.table.counts, avg.collisions)

    def csv_row(self) -> list[str]:
        return [self.policy.value, str(self.avs), str(self.iterations),
                *(_fmt(m) for m in self.means), _fmt(self.mean_collisions),
                _fmt(self.collisions_per_100),
                *(str(p) for p in self.presented), str(self.accidents_per_100)]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def sort_rows(rows: Iterable[SummaryRow]) -> list[SummaryRow]:
    order = {p: i for i, p in enumerate(POLICY_ORDER)}
    return sorted(rows, key=lambda r: (order[r.policy], r.avs))


def write_trials_csv(path: Path, trials: Sequence[TrialSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_HEADER)
        for t in sorted(trials, key=lambda t: t.seed):
            w.writerow([t.seed, *(int(c) for c in t.table.counts), t.collisions])


def read_trials_csv(path: Path, policy: Optional[PolicyId] = None, avs: int = 1) -> list[TrialSummary]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRIAL_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            seed, *counts, col = (int(x) for x in row)
            out.append(TrialSummary(policy, avs, seed, CheckpointTable(tuple(counts)), col))
    return out


def write_summary_csv(path: Path, rows: Sequence[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in sort_rows(rows):
            w.writerow(r.csv_row())


def read_summary_csv(path: Path) -> list[SummaryRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SUMMARY_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for d in reader:
            means = tuple(float(d[f"mean_c{int(c)}"]) for c in CHECKPOINTS_KM)
            rows.append(SummaryRow(PolicyId(d["policy"]), int(d["avs"]), int(d["iterations"]),
                                   means, float(d["mean_collisions"])))
    return rows


def trials_filename(policy: PolicyId, avs: int) -> str:
    return f"trials_{policy.value}_{avs}.csv"


def paper_rows() -> list[SummaryRow]:
    """The reference values expressed as summary rows (collisions per 100 trials)."""
    return [SummaryRow(p, n, 100, tuple(float(c) for c in t), PAPER_ACCIDENTS[p] / 100.0)
            for (p, n), t in PAPER_TARGETS.items()]


def emit_figure_data(rows: Sequence[SummaryRow], out: Path) -> list[str]:
    """Write fig2.dat .. fig5.dat; returns the list of missing (policy, AV) cells.

    Figures 2-4 hold one row per policy and AV count with the presentation
    counts at each checkpoint.  fig5.dat holds accidents per 100 trials per
    policy, one row per AV count plus ``all`` (trials pooled).  Missing cells
    are written as ``NA``.
    """
    out = Path(out)
    by_key = {(r.policy, r.avs): r for r in rows}
    av_counts = sorted({r.avs for r in rows}) or [1, 3]
    missing: list[str] = []
    head = " ".join(f"km{int(c)}" for c in CHECKPOINTS_KM)
    for name, pols in FIGURES.items():
        lines = [f"# series {head}"]
        for p in pols:
            for n in av_counts:
                r = by_key.get((p, n))
                if r is None:
                    missing.append(f"{p.value}_{n}AV")
                    vals = " ".join("NA" for _ in CHECKPOINTS_KM)
                else:
                    vals = " ".join(str(v) for v in r.presented)
                lines.append(f"{p.value}_{n}AV {vals}")
        (out / name).write_text("\n".join(lines) + "\n")
    lines = ["# avs " + " ".join(p.value for p in POLICY_ORDER)]
    for n in [*av_counts, None]:
        vals = []
        for p in POLICY_ORDER:
            cells = [by_key[(p, k)] for k in av_counts if (p, k) in by_key and (n is None or k == n)]
            if not cells:
                if n is not None:
                    missing.append(f"{p.value}_{n}AV collisions")
                vals.append("NA")
                continue
            trials = sum(c.iterations for c in cells)
            pooled = math.fsum(c.mean_collisions * c.iterations for c in cells) / trials
            vals.append(str(round_half_up(100.0 * pooled)))
        lines.append(f"{'all' if n is None else f'{n}AV'} " + " ".join(vals))
    (out / "fig5.dat").write_text("\n".join(lines) + "\n")
    return sorted(set(missing))


def deviation_report(rows: Sequence[SummaryRow]) -> tuple[str, bool]:
    """Text report of presented values against the reference; second item: all within tolerance."""
    lines = [f"{'cell':16s} {'simulated':>16s} {'reference':>16s}  max|dev|  ok"]
    ok_all = True
    for r in sort_rows(rows):
        ref = PAPER_TARGETS.get((r.policy, r.avs))
        if ref is None:
            continue
        dev = max(abs(a - b) for a, b in zip(r.presented, ref))
        ok = dev <= LANE_CHANGE_TOLERANCE
        ok_all &= ok
        lines.append(f"{r.policy.value + '_' + str(r.avs) + 'AV':16s} {str(r.presented):>16s} "
                     f"{str(ref):>16s}  {dev:8d}  {'yes' if ok else 'NO'}")
    lines.append("")
    lines.append(f"{'accidents/100':16s} {'simulated':>16s} {'reference':>16s}  |dev|     ok")
    by_policy: dict[PolicyId, list[SummaryRow]] = {}
    for r in rows:
        by_policy.setdefault(r.policy, []).append(r)
    for p in POLICY_ORDER:
        cells = by_policy.get(p)
        if not cells:
            continue
        trials = sum(c.iterations for c in cells)
        per100 = 100.0 * math.fsum(c.mean_collisions * c.iterations for c in cells) / trials
        sim = round_half_up(per100)
        dev = abs(sim - PAPER_ACCIDENTS[p])
        ok = dev <= ACCIDENT_TOLERANCE
        ok_all &= ok
        lines.append(f"{p.value:16s} {sim:>16d} {PAPER_ACCIDENTS[p]:>16d}  {dev:5d}     {'yes' if ok else 'NO'}")
    return "\n".join(lines) + "\n", ok_all


# ---------------------------------------------------------------------------
# experiment


@dataclass
class ExperimentResult:
    rows: list[SummaryRow]
    trials: dict[tuple[PolicyId, int], list[TrialSummary]]
    missing: list[str]
    report: str
    elapsed: float


def run_experiment(cfg: ScenarioConfig, plan: ExperimentPlan, out: Optional[Path] = None) -> ExperimentResult:
    """Run the plan, write artifacts into ``out`` (when given) and return the results.

    Raises:
        ValidationFailure: an MLCA assertion failed in validation mode.
        OSError: the output directory is not writable.
    """
    t0 = time.perf_counter()
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
    seeds = [plan.base_seed + i for i in range(plan.iterations)]
    trials: dict[tuple[PolicyId, int], list[TrialSummary]] = {}
    pool = multiprocessing.Pool(plan.jobs) if plan.jobs > 1 else None
    try:
        for policy in plan.policies:
            for n in plan.av_counts:
                t1 = time.perf_counter()
                cell = run_cell(cfg, policy, n, seeds, plan.validate, pool)
                trials[(policy, n)] = cell
                log.info("%s %dAV: %d iterations in %.1f s", policy.value, n, len(cell),
                         time.perf_counter() - t1)
                if out is not None:
                    write_trials_csv(out / trials_filename(policy, n), cell)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    rows = sort_rows(SummaryRow.from_trials(p, n, t) for (p, n), t in trials.items())
    report, _ = deviation_report(rows)
    missing: list[str] = []
    if out is not None:
        write_summary_csv(out / "summary.csv", rows)
        missing = emit_figure_data(rows, out)
        (out / "deviation_report.txt").write_text(report)
    return ExperimentResult(rows, trials, missing, report, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# CLI


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mlcasim",
        description="Run the lane-change policy experiment matrix and write CSV/plot tables.")
    ap.add_argument("--policy", action="append", metavar="P",
                    help="policy to run (repeatable or comma separated; default: all six)")
    ap.add_argument("--avs", metavar="N[,N]", help="tracked AV counts, e.g. 1,3 (default)")
    ap.add_argument("--iterations", type=int, help="iterations per cell (default 100)")
    ap.add_argument("--seed", type=int, help="base seed; iteration i uses seed+i (default 0)")
    ap.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    ap.add_argument("--config", type=Path, help="INI config file (flags override it)")
    ap.add_argument("--validate", action="store_true", default=None,
                    help="abort on any MLCA assertion violation (exit 3)")
    ap.add_argument("--jobs", type=int, help="worker processes (default 1)")
    ap.add_argument("--strict", action="store_true",
                    help="exit 1 when figure tables are incomplete")
    ap.add_argument("--dump-config", action="store_true",
                    help="print the effective configuration and exit")
    ap.add_argument("-q", "--quiet", action="store_true", help="only print the summary")
    return ap


def _plan_from_args(args: argparse.Namespace, plan: ExperimentPlan) -> ExperimentPlan:
    items: dict[str, str] = {}
    if args.policy:
        items["policies"] = " ".join(args.policy)
    if args.avs is not None:
        items["avs"] = args.avs
    if args.iterations is not None:
        items["iterations"] = str(args.iterations)
    if args.seed is not None:
        items["seed"] = str(args.seed)
    if args.jobs is not None:
        items["jobs"] = str(args.jobs)
    if args.validate:
        items["validate"] = "true"
    return plan_from_items(items, plan)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.config is not None:
            cfg, plan = load_config(args.config)
        else:
            cfg, plan = ScenarioConfig(), ExperimentPlan()
        plan = _plan_from_args(args, plan)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        print(dump_config(cfg, plan))
        return EXIT_OK
    try:
        res = run_experiment(cfg, plan, args.out)
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(res.report, end="")
    print(f"wrote {args.out} in {res.elapsed:.1f} s")
    if res.missing:
        log.warning("figure tables incomplete, missing: %s", ", ".join(res.missing))
        if args.strict:
            return EXIT_INCOMPLETE
    return EXIT_OK


__all__ = [
    "PAPER_TARGETS", "PAPER_ACCIDENTS", "SummaryRow", "ExperimentResult", "ValidationFailure",
    "run_cell", "run_experiment", "emit_figure_data", "deviation_report", "paper_rows",
    "write_trials_csv", "read_trials_csv", "write_summary_csv", "read_summary_csv", "main",
]

if __name__ == "__main__":
    raise SystemExit(main())
