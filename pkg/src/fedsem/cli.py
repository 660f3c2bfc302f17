"""Command-line front end: dataset generation, single runs, grid sweeps.

Subcommands:
  generate  write a synthetic CSV dataset plus a JSON metadata sidecar
  run       execute one experiment from a config file
  sweep     run the Cartesian product of axis values over a base config
  report    re-render summary.txt from an existing result.json

Exit codes: 0 success, 1 runtime failure, 2 configuration failure. With
the FEDSEM_OUT environment variable set, relative output directories are
resolved under it.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
import time
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import generate_synthetic, load_csv, mask_labels, partition, save_csv, split_train_test
from .errors import ConfigError
from .federation import run_fedavg
from .metrics import SummaryRow, export_history, render_summary, summarize
from .protocol import run_fedsem

TRAIN_RATIO = 0.8
SWEEP_AXES = {
    "labeled_fraction": ("labels", "labeled_fraction"),
    "epochs": ("federation", "local_epochs"),
    "rounds": ("federation", "rounds"),
    "seed": ("federation", "master_seed"),
}
SWEEP_HEADER = "labeled_percent,rounds,epochs,seed,accuracy_phase1,accuracy_phase2,gain"


def resolve_output_dir(configured: str | None) -> Path:
    """Configured (or default) directory, rooted at $FEDSEM_OUT if relative."""
    base = Path(configured) if configured else Path("fedsem-out")
    root = os.environ.get("FEDSEM_OUT", "")
    if not base.is_absolute() and root:
        base = Path(root) / base
    return base


def _params_digest(params) -> str:
    return hashlib.sha256(params.flatten().tobytes()).hexdigest()


def _prepare_data(config: ExperimentConfig):
    ds_cfg = config.dataset
    if ds_cfg.source == "synthetic":
        dataset = generate_synthetic(
            ds_cfg.samples, ds_cfg.classes, ds_cfg.dim, ds_cfg.separation, ds_cfg.seed
        )
    else:
        dataset = load_csv(ds_cfg.path, ds_cfg.classes, ds_cfg.has_header)
    shards = partition(dataset, config.partition)
    shards = split_train_test(shards, ratio=TRAIN_RATIO, seed=config.partition.seed)
    masked = mask_labels(
        dataset,
        shards,
        config.labels.labeled_fraction,
        config.labels.mask_mode,
        config.labels.mask_seed,
    )
    return masked, shards


def _execute(config: ExperimentConfig, dataset, shards):
    """Run one experiment; returns (history, result payload, summary text)."""
    fed = config.federation
    common = {
        "clients": fed.num_clients,
        "clients_per_round": fed.clients_per_round,
        "labeled_fraction": config.labels.labeled_fraction,
        "local_epochs": fed.local_epochs,
        "rounds": fed.rounds,
    }
    if config.fedsem is not None:
        result = run_fedsem(config.fedsem, shards, dataset)
        row = summarize(
            result,
            labeled_fraction=config.labels.labeled_fraction,
            rounds=fed.rounds,
            epochs=fed.local_epochs,
        )
        history = result.history
        payload = dict(
            common,
            mode="fedsem",
            labeled_percent=row.labeled_percent,
            phase1_rounds=sum(1 for r in history if r.phase == "phase1"),
            phase2_rounds=sum(1 for r in history if r.phase == "phase2"),
            accuracy_phase1=result.accuracy_phase1,
            accuracy_phase2=result.accuracy_phase2,
            gain=result.gain,
            pseudo_label_accuracy=result.pseudo_label_accuracy,
            final_test_accuracy=history[-1].test_accuracy,
            final_test_loss=history[-1].test_loss,
            model_phase1_sha256=_params_digest(result.model_phase1),
            model_phase2_sha256=_params_digest(result.model_phase2),
        )
        summary_text = render_summary([row])
    else:
        state = run_fedavg(fed, shards, dataset, labeled_only=False)
        history = state.history
        best = max(r.test_accuracy for r in history) if history else float("nan")
        payload = dict(
            common,
            mode="fedavg",
            best_accuracy=best,
            final_test_accuracy=history[-1].test_accuracy if history else None,
            final_test_loss=history[-1].test_loss if history else None,
            model_sha256=_params_digest(state.global_params),
        )
        summary_text = (
            "single-phase federated run\n"
            f"rounds: {len(history)}\n"
            f"best test accuracy: {best:.6f}\n"
        )
    return history, payload, summary_text


def _write_outputs(out_dir: Path, history, payload, summary_text, formats) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if "csv" in formats:
        export_history(history, out_dir / "history.csv", "csv")
    if "json" in formats:
        export_history(history, out_dir / "history.json", "json")
    with open(out_dir / "result.json", "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    with open(out_dir / "summary.txt", "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_text)


def cmd_generate(args) -> int:
    try:
        dataset = generate_synthetic(args.samples, args.classes, args.dim, args.sep, args.seed)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        out = Path(args.out)
        if out.parent and not out.parent.exists():
            out.parent.mkdir(parents=True, exist_ok=True)
        save_csv(dataset, out, header=False)
        meta = {
            "d": args.dim,
            "generator": "unit-direction-gaussian-blobs-v1",
            "n": args.samples,
            "num_classes": args.classes,
            "seed": args.seed,
            "separation": float(args.sep),
        }
        with open(f"{out}.meta.json", "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error writing dataset: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"wrote {args.samples} samples to {out} (+ {out}.meta.json)")
    return 0


def cmd_run(args) -> int:
    try:
        config = load_config(args.config, overrides=args.override, seed=args.seed, out_dir=args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out_dir = resolve_output_dir(config.output.directory)
    stage = "data setup"
    try:
        started = time.perf_counter()
        dataset, shards = _prepare_data(config)
        stage = "training"
        history, payload, summary_text = _execute(config, dataset, shards)
        stage = "writing outputs"
        _write_outputs(out_dir, history, payload, summary_text, config.output.formats)
        elapsed = time.perf_counter() - started
    except ConfigError as exc:
        print(f"configuration error during {stage}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error during {stage}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(summary_text, end="")
        print(f"outputs in {out_dir} ({elapsed:.1f}s)")
    return 0


def _parse_axes(axis_args) -> list[tuple[str, list[str]]]:
    if not axis_args:
        raise ConfigError("sweep needs at least one --axis key=v1,v2,...")
    axes = []
    for item in axis_args:
        if "=" not in item:
            raise ConfigError(f"axis must look like key=v1,v2, got {item!r}")
        key, raw_values = item.split("=", 1)
        key = key.strip()
        if key not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {key!r}, expected one of {sorted(SWEEP_AXES)}")
        values = [v.strip() for v in raw_values.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"axis {key} has no values")
        axes.append((key, values))
    return axes


def cmd_sweep(args) -> int:
    try:
        axes = _parse_axes(args.axis)
        base = load_config(args.config, overrides=args.override, seed=args.seed, out_dir=args.out)
        if base.fedsem is None:
            raise ConfigError("sweep requires a [fedsem] section in the config")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out_root = resolve_output_dir(base.output.directory)
    rows: list[str] = []
    stage = "sweep setup"
    try:
        for cell in itertools.product(*[[(key, v) for v in values] for key, values in axes]):
            slug = "_".join(f"{key}-{value}" for key, value in cell)
            stage = f"cell {slug}"
            cell_overrides = list(args.override) + [
                f"{SWEEP_AXES[key][0]}.{SWEEP_AXES[key][1]}={value}" for key, value in cell
            ]
            config = load_config(
                args.config,
                overrides=cell_overrides,
                seed=args.seed,
                out_dir=str(out_root / "cells" / slug),
            )
            dataset, shards = _prepare_data(config)
            history, payload, summary_text = _execute(config, dataset, shards)
            _write_outputs(
                resolve_output_dir(config.output.directory),
                history,
                payload,
                summary_text,
                config.output.formats,
            )
            rows.append(
                f"{payload['labeled_percent']:g},{payload['rounds']},{payload['local_epochs']},"
                f"{config.federation.master_seed},{payload['accuracy_phase1']:.6f},"
                f"{payload['accuracy_phase2']:.6f},{payload['gain']:.6f}"
            )
            if not args.quiet:
                print(f"cell {slug}: gain {payload['gain']:.6f}")
        stage = "writing sweep.csv"
        out_root.mkdir(parents=True, exist_ok=True)
        with open(out_root / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join([SWEEP_HEADER] + rows) + "\n")
    except ConfigError as exc:
        print(f"configuration error during {stage}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error during {stage}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"sweep table in {out_root / 'sweep.csv'} ({len(rows)} cells)")
    return 0


def cmd_report(args) -> int:
    path = Path(args.result)
    if path.is_dir():
        path = path / "result.json"
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read result file: {exc}", file=sys.stderr)
        return 1
    try:
        if payload.get("mode") == "fedsem":
            row = SummaryRow(
                labeled_percent=payload["labeled_percent"],
                rounds=payload["rounds"],
                epochs=payload["local_epochs"],
                accuracy_phase1=payload["accuracy_phase1"],
                accuracy_phase2=payload["accuracy_phase2"],
                gain=payload["gain"],
            )
            summary_text = render_summary([row])
        else:
            summary_text = (
                "single-phase federated run\n"
                f"rounds: {payload['rounds']}\n"
                f"best test accuracy: {payload['best_accuracy']:.6f}\n"
            )
        with open(path.parent / "summary.txt", "w", encoding="utf-8", newline="") as fh:
            fh.write(summary_text)
    except (KeyError, ValueError) as exc:
        print(f"malformed result file {path}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(summary_text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsem",
        description="Deterministic two-phase semi-supervised federated learning simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic CSV dataset")
    gen.add_argument("--classes", type=int, default=10)
    gen.add_argument("--samples", type=int, default=4000)
    gen.add_argument("--dim", type=int, default=16)
    gen.add_argument("--sep", type=float, default=2.0, help="class separation")
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.add_argument("--quiet", action="store_true")
    gen.set_defaults(handler=cmd_generate)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="run a grid of experiments")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2")
    sweep.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--quiet", action="store_true")
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", help="re-render summary.txt from result.json")
    report.add_argument("--result", required=True, help="result.json path or run directory")
    report.add_argument("--quiet", action="store_true")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
