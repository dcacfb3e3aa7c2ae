"""Command-line front end.

    ssl-lab run <preset> [--seeds N] [--out DIR] [--check] [--epochs N]
    ssl-lab run --config FILE [...]
    ssl-lab list
    ssl-lab report DIR

Training presets write one run CSV per variant and seed plus a gnuplot
script; oracle presets write a certification CSV. `--check` turns declared
tolerance violations into exit code 1. `report` aggregates per-seed CSVs
into mean/min/max band CSVs (the shaded-area convention) plus a summary of
final-epoch statistics. Exit codes: 0 ok, 1 tolerance violation or failed
run, 2 usage error. SSL_LAB_THREADS caps the per-seed worker fan-out.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunSetup, parse_config, write_config
from .errors import ConvergenceError, DivergenceError, SslLabError
from .oracles import write_certification_csv
from .presets import (ORACLE_CHECKS, PRESETS, Preset, Variant, evaluate_bands,
                      get_preset, seeded)
from .trainer import load_run_csv, prepare_data, train, write_run_csv

_METRIC_COLUMNS = (("loss", 2), ("min_max_cosine", 3),
                   ("median_max_cosine", 4), ("max_max_cosine", 5))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssl-lab",
        description="sparse-coding SSL laboratory: presets, checks, reports")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="run a preset or a config file")
    run.add_argument("preset", nargs="?", help="preset name (see `list`)")
    run.add_argument("--config", help="run config file instead of a preset")
    run.add_argument("--seeds", type=int, default=None,
                     help="number of seeds (default: preset's own)")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--check", action="store_true",
                     help="fail (exit 1) on any declared tolerance violation")
    run.add_argument("--epochs", type=int, default=None,
                     help="override epochs for every variant")

    sub.add_parser("list", help="list available presets")

    report = sub.add_parser("report", help="aggregate per-seed run CSVs")
    report.add_argument("run_dir", help="directory holding *-seed*.csv files")
    return parser


def _thread_cap(n_tasks: int) -> int:
    raw = os.environ.get("SSL_LAB_THREADS", "")
    if raw:
        try:
            cap = int(raw)
            if cap < 1:
                raise ValueError
        except ValueError:
            raise SslLabError(
                f"SSL_LAB_THREADS must be a positive integer, got {raw!r}")
        return min(cap, n_tasks)
    return min(os.cpu_count() or 1, n_tasks)


def _gnuplot_script(labels_seeds: list[tuple[str, int]], stem: str) -> str:
    lines = [
        "# generated by ssl-lab; render with: gnuplot <this file>",
        'set datafile separator ","',
        "set terminal pngcairo size 900,600",
        'set xlabel "epoch"',
        "set key outside right",
    ]
    for metric, col in _METRIC_COLUMNS:
        lines.append(f'set output "{stem}-{metric}.png"')
        lines.append(f'set ylabel "{metric}"')
        plots = [f'"{label}-seed{seed}.csv" using 1:{col} with lines '
                 f'title "{label} s{seed}"'
                 for label, seed in labels_seeds]
        lines.append("plot \\\n  " + ", \\\n  ".join(plots))
    lines.append("")
    return "\n".join(lines)


def _aggregate_script(labels: list[str], stem: str) -> str:
    lines = [
        "# generated by ssl-lab; render with: gnuplot <this file>",
        'set datafile separator ","',
        "set terminal pngcairo size 900,600",
        'set xlabel "epoch"',
        "set key outside right",
        "set style fill transparent solid 0.25 noborder",
    ]
    for k, (metric, _) in enumerate(_METRIC_COLUMNS):
        mean_col = 2 + 3 * k
        lines.append(f'set output "{stem}-{metric}.png"')
        lines.append(f'set ylabel "{metric}"')
        plots = []
        for label in labels:
            fname = f"aggregate-{label}.csv"
            plots.append(f'"{fname}" using 1:{mean_col + 1}:{mean_col + 2} '
                         f'with filledcurves notitle')
            plots.append(f'"{fname}" using 1:{mean_col} with lines '
                         f'title "{label}"')
        lines.append("plot \\\n  " + ", \\\n  ".join(plots))
    lines.append("")
    return "\n".join(lines)


def _one_run(setup: RunSetup, seed: int, label: str, out: Path) -> tuple[str, Path]:
    s = seeded(setup, seed)
    data = prepare_data(s.data, seed)
    result = train(s.train, s.model, data)
    path = out / f"{label}-seed{seed}.csv"
    write_run_csv(path, result.records)
    return label, path


def _run_training(preset: Preset, seeds: int, out: Path, check: bool,
                  epochs: int | None) -> int:
    variants = preset.variants
    if epochs is not None:
        variants = tuple(
            Variant(v.label, RunSetup(
                data=v.setup.data, model=v.setup.model,
                train=replace(v.setup.train, epochs=epochs)))
            for v in variants)
    tasks = [(v, seed) for v in variants for seed in range(seeds)]
    out.mkdir(parents=True, exist_ok=True)
    for v in variants:
        write_config(out / f"{v.label}.cfg", v.setup)

    results: dict[str, list[Path]] = {v.label: [] for v in variants}
    with ThreadPoolExecutor(max_workers=_thread_cap(len(tasks))) as pool:
        futures = [(v.label, seed,
                    pool.submit(_one_run, v.setup, seed, v.label, out))
                   for v, seed in tasks]
        for label, seed, fut in futures:
            _, path = fut.result()
            results[label].append(path)
            print(f"wrote {path}")

    script = _gnuplot_script([(v.label, s) for v, s in tasks], preset.name)
    (out / "plot.gp").write_text(script, encoding="utf-8")
    print(f"wrote {out / 'plot.gp'}")

    if not check:
        return 0
    curves = {label: [load_run_csv(p) for p in paths]
              for label, paths in results.items()}
    rows = evaluate_bands(preset.bands, curves)
    write_certification_csv(out / "checks.csv", rows)
    failed = [r for r in rows if not r.passed]
    for r in rows:
        state = "ok" if r.passed else "FAIL"
        print(f"[{state}] {r.check} {r.instance}: value={r.value:.6g} "
              f"expected={r.expected:.6g} margin={r.margin:.3g}")
    return 1 if failed else 0


def _run_oracle(preset: Preset, out: Path, check: bool) -> int:
    rows = ORACLE_CHECKS[preset.name]()
    out.mkdir(parents=True, exist_ok=True)
    path = out / "checks.csv"
    write_certification_csv(path, rows)
    failed = [r for r in rows if not r.passed]
    print(f"wrote {path} ({len(rows)} rows, {len(rows) - len(failed)} passed)")
    for r in failed:
        print(f"[FAIL] {r.check} {r.instance}: value={r.value:.6g} "
              f"expected={r.expected:.6g} margin={r.margin:.3g}")
    if check and failed:
        return 1
    return 0


def _cmd_run(args) -> int:
    if bool(args.preset) == bool(args.config):
        print("error: pass exactly one of <preset> or --config FILE",
              file=sys.stderr)
        return 2
    if args.seeds is not None and args.seeds < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return 2
    if args.epochs is not None and args.epochs < 1:
        print("error: --epochs must be >= 1", file=sys.stderr)
        return 2

    if args.config:
        setup = parse_config(args.config)
        name = Path(args.config).stem
        preset = Preset(name=name, description=f"config file {args.config}",
                        kind="train",
                        variants=(Variant(name, setup),), seeds=1)
    else:
        preset = get_preset(args.preset)

    out = Path(args.out) if args.out else Path("runs") / preset.name
    if preset.kind == "oracle":
        if args.seeds is not None or args.epochs is not None:
            print("error: --seeds/--epochs do not apply to oracle presets",
                  file=sys.stderr)
            return 2
        return _run_oracle(preset, out, args.check)
    seeds = args.seeds if args.seeds is not None else preset.seeds
    return _run_training(preset, seeds, out, args.check, args.epochs)


def _cmd_list() -> int:
    width = max(len(name) for name in PRESETS)
    for name, preset in PRESETS.items():
        kind = preset.kind
        extra = (f"{len(preset.variants)} variants x {preset.seeds} seeds"
                 if kind == "train" else "certification")
        print(f"{name:<{width}}  {kind:<6}  {extra:<24}  {preset.description}")
    return 0


def _cmd_report(run_dir: str) -> int:
    root = Path(run_dir)
    if not root.is_dir():
        print(f"error: {run_dir} is not a directory", file=sys.stderr)
        return 2
    by_label: dict[str, list[Path]] = {}
    for path in sorted(root.glob("*-seed*.csv")):
        label = path.name.rsplit("-seed", 1)[0]
        by_label.setdefault(label, []).append(path)
    if not by_label:
        print(f"error: no *-seed*.csv run files in {run_dir}", file=sys.stderr)
        return 2

    summary_lines = ["label,seeds," + ",".join(
        f"final_{m}_{s}" for m, _ in _METRIC_COLUMNS for s in ("mean", "std"))]
    for label, paths in sorted(by_label.items()):
        arrays = [load_run_csv(p) for p in paths]
        epochs = {a.shape[0] for a in arrays}
        if len(epochs) != 1:
            print(f"error: seed files for {label!r} disagree on epoch count "
                  f"{sorted(epochs)}", file=sys.stderr)
            return 2
        stack = np.stack(arrays)             # (seeds, rows, 6)
        agg_path = root / f"aggregate-{label}.csv"
        header = "epoch," + ",".join(
            f"{m}_{s}" for m, _ in _METRIC_COLUMNS
            for s in ("mean", "min", "max"))
        with open(agg_path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in range(stack.shape[1]):
                cells = [f"{int(stack[0, row, 0])}"]
                for _, col in _METRIC_COLUMNS:
                    vals = stack[:, row, col - 1]
                    cells += [f"{vals.mean():.17g}", f"{vals.min():.17g}",
                              f"{vals.max():.17g}"]
                fh.write(",".join(cells) + "\n")
        print(f"wrote {agg_path}")
        finals = stack[:, -1, :]
        cells = [label, str(len(paths))]
        for _, col in _METRIC_COLUMNS:
            vals = finals[:, col - 1]
            cells += [f"{vals.mean():.17g}", f"{vals.std():.17g}"]
        summary_lines.append(",".join(cells))

    (root / "summary.csv").write_text("\n".join(summary_lines) + "\n",
                                      encoding="utf-8")
    print(f"wrote {root / 'summary.csv'}")
    script = _aggregate_script(sorted(by_label), root.name or "report")
    (root / "plot-aggregate.gp").write_text(script, encoding="utf-8")
    print(f"wrote {root / 'plot-aggregate.gp'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code in (None, 0):
            return 0
        return code if isinstance(code, int) else 2
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list":
            return _cmd_list()
        return _cmd_report(args.run_dir)
    except (DivergenceError, ConvergenceError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    except SslLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
