"""Command-line front end: ``run``, ``verify`` and ``spectrum``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 solver/runtime error. Output files are written to a temporary directory
first and moved into place only once everything has been produced.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import certify, config as cfg
from .harness import SUMMARY_COLUMNS, SolverFailure, StepMetrics, compare_methods, run_experiment
from .knowledge import ConfigError, generate_world
from .numerics import LinalgError
from .projector import build_projector, gram_spectrum

OUTPUT_ENV = "NULLSPACE_EDIT_OUTPUT"
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

TRAJECTORY_COLUMNS = StepMetrics.columns()
RATIO_COLUMNS = ["method_a", "method_b", "metric", "ratio"]
SPECTRUM_COLUMNS = ["index", "eigenvalue"]
SWEEP_COLUMNS = ["threshold", "retained_dim"]
SWEEP_THRESHOLDS = [10.0 ** e for e in range(-14, 5)]


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render(rows: list[dict], columns: list[str], fmt: str) -> str:
    """CSV with one header row, or JSON with one object per line."""
    if fmt == "json":
        return "".join(
            json.dumps({c: _jsonable(r[c]) for c in columns}) + "\n" for r in rows
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)) and not isinstance(value, bool):
        return int(value)
    if isinstance(value, (str, bool)) or value is None:
        return value
    return str(value)


def write_outputs(output_dir: Path, files: dict[str, str]) -> None:
    """Write all files into ``output_dir`` atomically (temp dir then rename)."""
    output_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=output_dir))
    try:
        for name, text in files.items():
            (staging / name).write_text(text, encoding="utf-8")
        for name in files:
            os.replace(staging / name, output_dir / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def _overrides(items: list[str] | None, seed: int | None) -> dict:
    out = dict(cfg.parse_override(item) for item in items or [])
    if seed is not None:
        out["seed"] = seed
    return out


def _output_dir(args) -> Path:
    return Path(args.output or os.environ.get(OUTPUT_ENV) or "results")


def _parse_seed(text: str) -> list[int]:
    """``N`` or an inclusive range ``A..B``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None


def cmd_run(args) -> int:
    seeds = args.seed
    if seeds is not None and len(seeds) != 1:
        raise ConfigError("run takes a single seed", "seed")
    values, experiment = cfg.load(args.config, _overrides(args.override, seeds and seeds[0]))
    try:
        trajectory = run_experiment(experiment, workers=args.workers)
    except SolverFailure as exc:
        print(f"error: solver failure in method={exc.method} step={exc.step}: {exc.cause}",
              file=sys.stderr)
        return EXIT_RUNTIME

    fmt = args.format
    rows = [m.as_record() for m in trajectory.records()]
    files = {f"trajectory.{fmt}": render(rows, TRAJECTORY_COLUMNS, fmt)}
    if len(experiment.methods) >= 2:
        summary = compare_methods(trajectory)
        files[f"summary.{fmt}"] = render(summary.rows(), SUMMARY_COLUMNS, fmt)
        ratio_rows = [
            {"method_a": a, "method_b": b, "metric": k, "ratio": v}
            for (a, b), metrics in summary.ratios.items()
            for k, v in metrics.items()
        ]
        files[f"ratios.{fmt}"] = render(ratio_rows, RATIO_COLUMNS, fmt)
    else:
        steps = trajectory.per_method[experiment.methods[0]]
        files[f"summary.{fmt}"] = render(
            [{
                "method": str(experiment.methods[0]),
                "final_preservation_error": steps[-1].preservation_error,
                "mean_update_error": float(np.mean([s.update_error for s in steps])),
                "max_retention_error": max(s.retention_error for s in steps),
                "total_delta_norm": float(sum(s.delta_norm for s in steps)),
            }],
            SUMMARY_COLUMNS, fmt,
        )
    files["projector.json"] = json.dumps(trajectory.projector_summary, indent=2) + "\n"
    files["config.resolved"] = cfg.dump_config(values)
    out = _output_dir(args)
    write_outputs(out, files)
    print(f"wrote {len(rows)} step records for {len(experiment.methods)} method(s) to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    seeds = args.seed or [0]
    results = certify.run_checks(seeds, inject_bug=args.inject_bug)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  seed  {'value':>10}  {'tol':>8}  status")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {r.seed:>4}  {r.value:>10.3e}  {r.tolerance:>8.1e}  {status}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"\n{len(failed)} of {len(results)} checks failed:", file=sys.stderr)
        for r in failed:
            print(f"  {r.name} (seed {r.seed}): {r.value:.3e} > {r.tolerance:.1e}",
                  file=sys.stderr)
        return EXIT_VERIFY
    print(f"\nall {len(results)} checks passed")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    seeds = args.seed
    if seeds is not None and len(seeds) != 1:
        raise ConfigError("spectrum takes a single seed", "seed")
    values, experiment = cfg.load(args.config, _overrides(args.override, seeds and seeds[0]))
    _, preserved = generate_world(experiment.world)
    eigenvalues, _ = gram_spectrum(preserved.keys)
    solver = experiment.solver
    proj = build_projector(preserved.keys, solver.threshold, relative=solver.relative_threshold)

    spectrum_rows = [{"index": i, "eigenvalue": float(v)} for i, v in enumerate(eigenvalues)]
    sweep_rows = [
        {"threshold": t, "retained_dim": build_projector(
            preserved.keys, t, relative=solver.relative_threshold).retained_dim}
        for t in SWEEP_THRESHOLDS
    ]
    files = {
        "spectrum.csv": render(spectrum_rows, SPECTRUM_COLUMNS, "csv"),
        "sweep.csv": render(sweep_rows, SWEEP_COLUMNS, "csv"),
        "config.resolved": cfg.dump_config(values),
    }
    out = _output_dir(args)
    write_outputs(out, files)

    near_zero = int(np.sum(eigenvalues < 1e-10))
    print(f"d_in={len(eigenvalues)}  eigenvalues below 1e-10: {near_zero}")
    print(f"retained_dim at threshold {solver.threshold:g} "
          f"({'relative' if solver.relative_threshold else 'absolute'}): {proj.retained_dim}")
    for row in sweep_rows:
        print(f"  threshold {row['threshold']:>8.0e}  retained_dim {row['retained_dim']}")
    print(f"wrote spectrum.csv and sweep.csv to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nullspace-edit",
        description="Null-space constrained editing of linear associative memories.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_format=True):
        p.add_argument("--config", type=Path, help="flat TOML config file")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--output", type=Path,
                       help=f"output directory (default: ${OUTPUT_ENV} or ./results)")
        p.add_argument("--seed", type=_parse_seed, help="seed N (verify also takes A..B)")
        if with_format:
            p.add_argument("--format", choices=["json", "csv"], default="csv")

    p_run = sub.add_parser("run", help="run a sequential editing experiment")
    common(p_run)
    p_run.add_argument("--workers", type=int, default=1, help="threads for method runs")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="certify closed forms against the oracle")
    p_verify.add_argument("--seed", type=_parse_seed, help="seed N or inclusive range A..B")
    p_verify.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    p_verify.set_defaults(func=cmd_verify)

    p_spec = sub.add_parser("spectrum", help="print the preserved-key Gram spectrum")
    common(p_spec, with_format=False)
    p_spec.set_defaults(func=cmd_spectrum)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LinalgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
