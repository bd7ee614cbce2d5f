"""Command-line entry point: ``simulate``, ``test``, ``tables`` and ``verify``."""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import limit_laws, statistics
from .dataio import fmt_human, fmt_machine, ingest_csv
from .harness import EXPERIMENTS, ExperimentConfig, GrowthConditionWarning, run_experiment
from .distributions import NullModel, exact_m4, quantile_a

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    pass


def _print_block(title: str, rows: Sequence[tuple[str, object]]) -> None:
    print(title)
    for label, value in rows:
        text = value if isinstance(value, str) else fmt_human(value)
        print(f"  {label:<21} {text}")


def _m4_arg(text: str):
    if text in ("exact", "plugin"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--m4 must be 'exact', 'plugin' or a number, got {text!r}") from None
    return value


def _seed_arg(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covextremes",
        description="Extremes and Frobenius norm of high-dimensional sample covariance matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo experiment under an iid null model")
    sim.add_argument("experiment", choices=EXPERIMENTS + ("corollary28",))
    sim.add_argument("--n", type=_positive_int, required=True, help="observations per replication")
    sim.add_argument("--p", type=_positive_int, required=True, help="dimension")
    sim.add_argument("--reps", type=_positive_int, required=True)
    sim.add_argument("--model", default="normal", help="normal | bernoulli | t:DOF | pareto:ALPHA")
    sim.add_argument("--k", type=_positive_int, default=1, help="number of largest entries kept")
    sim.add_argument("--beta", type=float, default=0.05)
    sim.add_argument("--seed", type=_seed_arg, default=0)
    sim.add_argument(
        "--unions",
        action="append",
        metavar="SPEC",
        help="interval union 'a,b;c,d' (inf allowed); repeat for several sets [default: 0,inf]",
    )
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--m4", type=_m4_arg, default="exact", help="exact | plugin | FLOAT")
    sim.add_argument("--trace-s", choices=("data", "expectation"), default="data")
    sim.add_argument("--thresholds", default="-1,0,1", help="comma-separated y grid for joint checks")
    sim.add_argument("--oracle-reps", type=_positive_int, default=None)
    sim.add_argument("--workers", type=_positive_int, default=1)
    sim.add_argument("--no-figures", action="store_true")

    tst = sub.add_parser("test", help="combined independence tests on a CSV data set")
    tst.add_argument("--data", type=Path, required=True, help="rows = observations, columns = variables")
    tst.add_argument("--k", type=_positive_int, required=True)
    tst.add_argument("--beta", type=float, default=0.05)
    tst.add_argument("--raw", action="store_true", help="skip centering and scaling of columns")
    tst.add_argument("--m4", type=float, default=None, help="fourth moment; default is the plug-in estimate")
    tst.add_argument("--out", type=Path, required=True)

    tab = sub.add_parser("tables", help="build a Monte Carlo quantile table")
    tab.add_argument("table", choices=("f4k",))
    tab.add_argument("--k", type=int, required=True)
    tab.add_argument("--samples", type=int, default=limit_laws.DEFAULT_TABLE_SAMPLES)
    tab.add_argument("--seed", type=_seed_arg, default=limit_laws.DEFAULT_TABLE_SEED)
    tab.add_argument("--out", type=Path, required=True)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--full", action="store_true", help="full replication counts (default is scaled down)")
    ver.add_argument("--seed", type=_seed_arg, default=42)
    ver.add_argument("--scale", type=float, default=0.2, help="replication multiplier without --full")
    ver.add_argument("--workers", type=_positive_int, default=1)
    ver.add_argument("--only", default=None, help="comma-separated criterion numbers")
    ver.add_argument("--out", type=Path, default=None, help="keep records and summaries here")
    return parser


def _unions_text(config: ExperimentConfig) -> str:
    return "  ".join(str(u) for u in config.unions)


def cmd_simulate(args) -> int:
    from .plotting import render_experiment

    try:
        thresholds = [float(v) for v in args.thresholds.split(",") if v.strip()]
        config = ExperimentConfig(
            experiment=args.experiment,
            model=NullModel.parse(args.model),
            n=args.n,
            p=args.p,
            reps=args.reps,
            k=args.k,
            beta=args.beta,
            unions=args.unions or ["0,inf"],
            thresholds=thresholds,
            master_seed=args.seed,
            m4_mode=args.m4,
            trace_s=args.trace_s,
            oracle_reps=args.oracle_reps,
        )
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    rows: list[tuple[str, object]] = [
        ("experiment", config.experiment),
        ("model", config.model.spec()),
        ("n", config.n),
        ("p", config.p),
        ("reps", config.reps),
        ("k", config.k),
        ("beta", config.beta),
        ("seed", config.master_seed),
    ]
    m4 = config.m4_mode if isinstance(config.m4_mode, float) else exact_m4(config.model)
    if config.experiment != "stable":
        rows.append(("m4 mode", str(config.m4_mode)))
        rows.append(("m4", m4 if config.m4_mode != "plugin" else "per replication"))
    if config.experiment != "stable" and config.p >= 3:
        rows.append(("d_p", statistics.compute_dp(config.p)))
    if config.experiment != "stable" and math.isfinite(m4):
        rows.append(("mu_n", statistics.mu_n(config.n, config.p, m4)))
        rows.append(("sigma_n", math.sqrt(statistics.sigma_n_sq(config.n, config.p, m4))))
    rows.append(("threshold", statistics.rejection_threshold(config.beta)))
    if config.experiment in ("pp", "joint"):
        rows.append(("unions", _unions_text(config)))
        rows.append(("mu(U)", "  ".join(fmt_human(limit_laws.mu_measure(u)) for u in config.unions)))
    if config.experiment == "stable":
        rows.append(("a_np", quantile_a(config.model, config.n * config.p)))
        rows.append(("trace S", config.trace_s))
    _print_block("resolved configuration", rows)
    sys.stdout.flush()

    with warnings.catch_warnings():
        # already reported by validate() above
        warnings.simplefilter("ignore", GrowthConditionWarning)
        summary = run_experiment(config, workers=args.workers, out_dir=args.out)
    _print_block("estimators", list(summary.aggregates.items()))
    if not args.no_figures:
        figures = render_experiment(summary, args.out)
        _print_block("figures", [(f.stem, str(f)) for f in figures])
    return EXIT_OK


def cmd_test(args) -> int:
    from .pipeline import run_test

    try:
        data = ingest_csv(args.data, standardize=not args.raw)
        outcome, report = run_test(data, k=args.k, beta=args.beta, m4=args.m4)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(report, end="")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.txt").write_text(report)
    fields = outcome.to_dict()
    e = outcome.extras
    for key in ("p", "n", "d_p", "m4", "m4_source", "mu_n", "sigma_n", "trace_s", "trace_s2"):
        fields[key] = e[key]
    fields["g_top"] = list(e["g_top"])
    fields["top_pairs"] = [list(pair) for pair in e["top_pairs"]]
    (args.out / "outcome.json").write_text(json.dumps(fields, indent=2) + "\n")
    lines = ["test,statistic,p_t,combined,reject"]
    stats_ = (outcome.t1, outcome.t2k, outcome.t3k, outcome.t4k)
    p_t = (outcome.p_t1, outcome.p_t2k, outcome.p_t3k, outcome.p_t4k)
    for i in range(4):
        cells = (stats_[i], p_t[i], outcome.combined[i], outcome.decisions[i])
        lines.append(f"T{i + 1}," + ",".join(fmt_machine(c) for c in cells))
    (args.out / "tests.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_tables(args) -> int:
    try:
        if args.k < 2:
            raise ValueError("spacing tables need k >= 2")
        _print_block(
            "resolved configuration",
            [("table", args.table), ("k", args.k), ("samples", args.samples), ("seed", args.seed), ("out", str(args.out))],
        )
        sys.stdout.flush()
        table = limit_laws.build_f4k_table(args.k, args.samples, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    table.save(args.out)
    q = table.quantiles
    pr = table.probabilities
    _print_block(
        "table",
        [
            ("knots", len(q)),
            ("median", float(q[int(abs(pr - 0.5).argmin())])),
            ("q(0.95)", float(q[int(abs(pr - 0.95).argmin())])),
            ("q(0.99)", float(q[int(abs(pr - 0.99).argmin())])),
            ("last knot", float(q[-1])),
        ],
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import AcceptanceContext, run_criteria

    scale = 1.0 if args.full else args.scale
    try:
        only = None if args.only is None else [int(v) for v in args.only.split(",") if v.strip()]
        if not scale > 0:
            raise ValueError("--scale must be positive")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _print_block(
        "resolved configuration",
        [
            ("seed", args.seed),
            ("scale", scale),
            ("workers", args.workers),
            ("criteria", "all" if only is None else ",".join(map(str, only))),
            ("out", "none" if args.out is None else str(args.out)),
        ],
    )
    sys.stdout.flush()
    ctx = AcceptanceContext(seed=args.seed, scale=scale, workers=args.workers, out_dir=args.out)
    try:
        results = run_criteria(ctx, only=only, echo=lambda s: print(s, flush=True))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "test": cmd_test, "tables": cmd_tables, "verify": cmd_verify}


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.showwarning = _show_warning
        try:
            return COMMANDS[args.command](args)
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
