"""Command-line entry points.

Subcommands:

* ``gen-data``   write a dataset CSV from a generator spec (JSON + flag overrides)
* ``train``      one training run; writes the trace CSV and optionally a checkpoint
* ``sweep``      run a sweep config or preset; writes the results CSV
* ``threshold``  per-group threshold correction on a scores CSV
* ``report``     render a results/trace/pareto CSV to an SVG chart

Configs come from JSON files; command-line flags win over file values.
Exit codes: 0 success, 1 usage error, 2 runtime error.  Diagnostics go to
stderr; data only ever goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import numpy as np

from . import datagen, report, sweep, threshold
from .errors import FairlabError
from .model import forward, init_model, save_checkpoint
from .trainer import EarlyStoppingSpec, TrainConfig, train

__all__ = ["main", "cli_main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to code 1."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fairlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("--spec", help="JSON file with generator spec fields")
    p.add_argument("--out", required=True, help="output dataset CSV path")
    for flag, typ in [
        ("--n-total", int), ("--d-core", int), ("--d-spur", int), ("--d-noise", int),
        ("--core-mean", float), ("--spur-mean", float), ("--noise-sigma", float),
        ("--majority-fraction", float), ("--positive-fraction", float), ("--seed", int),
    ]:
        p.add_argument(flag, type=typ)

    p = sub.add_parser("train", help="run one training configuration")
    p.add_argument("--data", required=True, help="dataset CSV (f0..fN,y,a)")
    p.add_argument("--width", type=int, required=True, help="model width m")
    p.add_argument("--config", help="JSON file with training config fields")
    p.add_argument("--trace-out", required=True, help="trace CSV output path")
    p.add_argument("--checkpoint-out", help="model checkpoint JSON output path")
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--split", default="0.5,0.25,0.25", help="train,val,test fractions")
    p.add_argument("--split-seed", type=int, default=0)
    for flag, typ in [
        ("--steps", int), ("--batch-size", int), ("--mindiff-batch-size", int),
        ("--lambda", float), ("--lr", float), ("--lr-decay-every", int),
        ("--weight-decay", float), ("--flood-level", float), ("--eval-every", int),
        ("--seed", int),
    ]:
        p.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    p.add_argument("--early-stopping", choices=["primary", "total"])

    p = sub.add_parser("sweep", help="run an experiment sweep")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sweep.PRESET_NAMES)
    group.add_argument("--config", help="sweep config JSON file")
    p.add_argument("--out", required=True, help="results CSV output path")
    p.add_argument("--widths", help="comma list overriding the width grid")
    p.add_argument("--lambdas", help="comma list overriding the lambda grid")
    p.add_argument("--seeds", help="comma list overriding the replicate seeds")
    p.add_argument("--steps", type=int, help="override training steps")

    p = sub.add_parser("threshold", help="per-group threshold correction on scores")
    p.add_argument("--scores", required=True,
                   help="CSV with columns score,y,a[,split]; split in {val,test}")
    p.add_argument("--thr", type=float, help="single FNR-gap constraint")
    p.add_argument("--pareto", help="comma list of constraints (overrides --thr)")
    p.add_argument("--grid", type=int, default=threshold.DEFAULT_GRID)
    p.add_argument("--out", help="output CSV path (default: stdout)")

    p = sub.add_parser("report", help="render a CSV to an SVG chart")
    p.add_argument("--results", required=True, help="results, trace, or pareto CSV")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--kind", choices=["auto", "width", "trace", "pareto"], default="auto")
    p.add_argument("--metric", default="test_err",
                   help="metric to plot from a sweep results CSV")
    p.add_argument("--columns", default="train_lp,train_fnr_gap",
                   help="trace columns to plot")
    p.add_argument("--title", default="")
    return parser


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_gen_data(args) -> int:
    doc = _load_json(args.spec) if args.spec else {}
    for key in (
        "n_total", "d_core", "d_spur", "d_noise", "core_mean", "spur_mean",
        "noise_sigma", "majority_fraction", "positive_fraction", "seed",
    ):
        v = getattr(args, key)
        if v is not None:
            doc[key] = v
    spec = datagen.SpuriousSpec(**doc)
    datagen.save_csv(datagen.generate_spurious(spec), args.out)
    print(f"wrote {spec.n_total} rows x {spec.d} features to {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    data = datagen.load_csv(args.data)
    fracs = [float(v) for v in args.split.split(",")]
    if len(fracs) != 3:
        raise _UsageError("--split needs three comma-separated fractions")
    tr, va, _ = datagen.split(data, datagen.SplitSpec(*fracs, seed=args.split_seed))

    doc = _load_json(args.config) if args.config else {}
    overrides = {
        "total_steps": args.steps,
        "batch_size": args.batch_size,
        "mindiff_batch_size": args.mindiff_batch_size,
        "lambda_": getattr(args, "lambda"),
        "lr_initial": args.lr,
        "lr_decay_every": args.lr_decay_every,
        "weight_decay": args.weight_decay,
        "flood_level": args.flood_level,
        "eval_every": args.eval_every,
        "seed": args.seed,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.early_stopping:
        crit = "primary_val_loss" if args.early_stopping == "primary" else "total_val_loss"
        doc["early_stopping"] = {"criterion": crit}
    config = sweep._train_from_json(doc)

    model = init_model(args.width, data.d, args.model_seed)
    result = train(model, tr, va, config)
    result.trace.to_csv(args.trace_out)
    if args.checkpoint_out:
        save_checkpoint(result.model, args.checkpoint_out)
    stopped = f", stopped early at step {result.stopped_early_at}" if result.stopped_early_at else ""
    print(
        f"trained width {args.width} for {int(result.trace.step[-1])} steps{stopped}; "
        f"trace -> {args.trace_out}",
        file=sys.stderr,
    )
    return 0


def _cmd_sweep(args) -> int:
    config = sweep.preset(args.preset) if args.preset else sweep.load_config(args.config)
    if args.widths:
        config = replace(config, widths=tuple(int(w) for w in args.widths.split(",")))
    if args.lambdas:
        config = replace(config, lambdas=tuple(float(v) for v in args.lambdas.split(",")))
    if args.seeds:
        config = replace(config, seeds=tuple(int(s) for s in args.seeds.split(",")))
    if args.steps:
        train_cfg = replace(
            config.train,
            total_steps=args.steps,
            lr_decay_every=max(1, args.steps // 3),
            eval_every=min(config.train.eval_every, args.steps),
        )
        config = replace(config, train=train_cfg)
    summaries = sweep.run_sweep(config)
    sweep.write_results_csv(summaries, args.out)
    print(f"{len(summaries)} cells -> {args.out}", file=sys.stderr)
    return 0


def _read_scores_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if not {"score", "y", "a"}.issubset(cols):
            raise FairlabError(f"scores CSV needs columns score,y,a (found {cols})")
        rows = {"val": [], "test": []}
        has_split = "split" in cols
        for i, row in enumerate(reader, start=1):
            try:
                entry = (float(row["score"]), int(row["y"]), int(row["a"]))
            except ValueError as exc:
                raise datagen.CsvFormatError(f"malformed field ({exc})", row=i) from None
            if has_split:
                kind = row["split"].strip()
                if kind not in rows:
                    raise datagen.CsvFormatError(
                        f"split must be 'val' or 'test', found {row['split']!r}", row=i
                    )
                rows[kind].append(entry)
            else:
                rows["val"].append(entry)
    if not has_split:
        rows["test"] = rows["val"]
    for kind in ("val", "test"):
        if not rows[kind]:
            raise FairlabError(f"scores CSV has no {kind} rows")
    unpack = lambda part: tuple(np.asarray(v) for v in zip(*part))
    return unpack(rows["val"]), unpack(rows["test"])


def _cmd_threshold(args) -> int:
    if args.thr is None and not args.pareto:
        raise _UsageError("one of --thr or --pareto is required")
    (vs, vy, va), (ts, ty, ta) = _read_scores_csv(args.scores)
    thr_list = (
        [float(v) for v in args.pareto.split(",")] if args.pareto else [args.thr]
    )
    results = threshold.pareto_front(vs, vy, va, ts, ty, ta, thr_list, args.grid)
    if args.out:
        threshold.write_pareto_csv(results, args.out)
        print(f"{len(results)} rows -> {args.out}", file=sys.stderr)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(threshold.PARETO_CSV_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    repr(float(r.constraint)), repr(r.thresholds.tau_a0),
                    repr(r.thresholds.tau_a1), repr(r.val_error), repr(r.val_fnr_gap),
                    repr(r.test_error), repr(r.test_fnr_gap), int(r.feasible),
                ]
            )
    return 0


def _read_csv_columns(path) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list[str]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name in cols:
                cols[name].append(row[name])
    return cols


def _chart_from_results(cols, metric, title):
    widths = np.array([int(w) for w in cols["width"]])
    lams = cols["lambda"]
    regs = cols["regularizer"]
    metrics = cols["metric"]
    means = np.array([float(v) for v in cols["mean"]])
    cis = np.array([float(v) for v in cols["ci95"]])

    keep = [i for i, m in enumerate(metrics) if m == metric]
    if not keep:
        raise FairlabError(f"metric {metric!r} not present in results CSV")
    series = []
    combos = sorted({(lams[i], regs[i]) for i in keep}, key=lambda c: (float(c[0]), c[1]))
    for lam, reg in combos:
        rows = [i for i in keep if lams[i] == lam and regs[i] == reg]
        rows.sort(key=lambda i: widths[i])
        label = f"lambda={float(lam):g}" + ("" if reg == "none" else f", {reg}")
        series.append(
            report.ChartSeries(
                label=label,
                x=tuple(float(widths[i]) for i in rows),
                y=tuple(means[i] for i in rows),
                ci=tuple(cis[i] for i in rows),
            )
        )
    # Mark the interpolation width when the baseline train error reveals one.
    marker = None
    try:
        from .metrics import interpolation_threshold

        base = [i for i, m in enumerate(metrics) if m == "train_err"]
        by_width: dict[int, float] = {}
        for i in sorted(base, key=lambda i: widths[i]):
            by_width.setdefault(int(widths[i]), float(means[i]))
        if by_width:
            marker = float(interpolation_threshold(by_width))
    except FairlabError:
        marker = None
    spec = report.ChartSpec(x_axis="width", title=title or metric, y_label=metric, x_marker=marker)
    return spec, series


def _chart_from_trace(cols, columns, title):
    steps = tuple(float(v) for v in cols["step"])
    series = []
    for name in columns:
        if name not in cols:
            raise FairlabError(f"trace column {name!r} not in CSV")
        series.append(
            report.ChartSeries(label=name, x=steps, y=tuple(float(v) for v in cols[name]))
        )
    return report.ChartSpec(x_axis="step", title=title, y_label=""), series


def _chart_from_pareto(cols, title):
    thr = tuple(float(v) for v in cols["thr"])
    series = [
        report.ChartSeries(label=n, x=thr, y=tuple(float(v) for v in cols[n]))
        for n in ("val_err", "test_err")
    ]
    return report.ChartSpec(x_axis="thr", title=title, y_label="error"), series


def _cmd_report(args) -> int:
    cols = _read_csv_columns(args.results)
    kind = args.kind
    if kind == "auto":
        if "metric" in cols:
            kind = "width"
        elif "step" in cols:
            kind = "trace"
        elif "thr" in cols:
            kind = "pareto"
        else:
            raise FairlabError("cannot infer chart kind from CSV header")
    if kind == "width":
        spec, series = _chart_from_results(cols, args.metric, args.title)
    elif kind == "trace":
        spec, series = _chart_from_trace(cols, args.columns.split(","), args.title)
    else:
        spec, series = _chart_from_pareto(cols, args.title)
    svg = report.render_chart(spec, series)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"chart ({kind}) -> {args.out}", file=sys.stderr)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "threshold": _cmd_threshold,
    "report": _cmd_report,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        handler = _COMMANDS[args.command]
    except _UsageError as exc:
        print(f"fairlab: usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"fairlab: usage error: {exc}", file=sys.stderr)
        return 1
    except (FairlabError, OSError, json.JSONDecodeError) as exc:
        print(f"fairlab: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
