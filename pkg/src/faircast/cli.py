"""Command-line entry point: train, eval, ablate, synth, plot.

Configuration precedence is CLI flags over config-file values over the
built-in defaults; a saved manifest can seed all of it for bit-exact
re-execution.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULTS, TrainConfig
from .data import (
    MinMaxNormalizer,
    chronological_split,
    group_labels,
    load_series,
    make_windows,
    save_series,
    synth_two_group,
)
from .graph import dump_adjacency
from .grouping import dump_embeddings
from .metrics import evaluate_model, write_per_variable_csv, write_report
from .training import apply_best, fit, load_checkpoint, save_checkpoint

OUTPUT_ROOT_ENV = "FAIRCAST_RUNS_ROOT"

# CLI flag name -> TrainConfig field
_FLAG_FIELDS = {
    "window": "window",
    "horizon": "horizon",
    "hidden_dim": "hidden_dim",
    "embed_dim": "embed_dim",
    "clusters": "n_clusters",
    "top_n": "top_n",
    "lambda_a": "lambda_adv",
    "lr_generator": "lr_generator",
    "lr_discriminator": "lr_discriminator",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "seed": "seed",
    "indicator_every": "indicator_update_every",
    "metric_scale": "metric_scale",
    "grad_clip": "grad_clip",
}
_FLAG_DISABLES = {
    "no_adversary": "use_adversary",
    "no_clustering_loss": "use_clustering_loss",
    "no_orthogonality_loss": "use_orthogonality_loss",
}


class CliError(RuntimeError):
    pass


def _resolve_out(path: str) -> Path:
    out = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


class RunLock:
    """One run at a time per output directory."""

    def __init__(self, directory: Path):
        self.path = directory / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(f"{self.path}: another run holds this output directory") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


def _parse_config_file(path: str) -> dict:
    """`key = value` lines; keys are config field names, '#' starts a comment."""
    values: dict = {}
    field_names = {f.name for f in fields(TrainConfig)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if key not in field_names:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def _coerce(key: str, raw: str):
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise CliError(f"ratios need three numbers, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _resolve_config(args, manifest: dict | None) -> TrainConfig:
    values = DEFAULTS.to_dict()
    if manifest is not None:
        values.update(manifest["config"])
    if getattr(args, "config", None):
        values.update(_parse_config_file(args.config))
    for flag, field_name in _FLAG_FIELDS.items():
        given = getattr(args, flag, None)
        if given is not None:
            values[field_name] = None if given == "none" else given
    for flag, field_name in _FLAG_DISABLES.items():
        if getattr(args, flag, None):
            values[field_name] = False
    if getattr(args, "shared_adversary_objective", None):
        values["shared_adversary_objective"] = True
    cfg = TrainConfig.from_dict(values)
    cfg.validate()
    return cfg


def _prepare_windows(cfg: TrainConfig, data_path: str, has_header: bool, ratios):
    series = load_series(data_path, has_header=has_header)
    train_part, val_part, test_part = chronological_split(series, ratios)
    if train_part is None:
        raise CliError("train split is empty; adjust --ratios")
    norm = MinMaxNormalizer().fit(train_part)
    w_train = make_windows(norm.apply_series(train_part), cfg.window, cfg.horizon)
    w_val = (
        make_windows(norm.apply_series(val_part), cfg.window, cfg.horizon)
        if val_part is not None
        else None
    )
    w_test = (
        make_windows(norm.apply_series(test_part), cfg.window, cfg.horizon)
        if test_part is not None
        else None
    )
    return series, norm, w_train, w_val, w_test


def _write_history_csv(history: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "l_forecast", "l_cluster", "l_ortho", "l_adv", "total"])
        for row in history:
            writer.writerow(
                [row["iteration"]]
                + [repr(row[k]) for k in ("l_forecast", "l_cluster", "l_ortho", "l_adv", "total")]
            )


def _write_manifest(path: Path, cfg: TrainConfig, data_path: str, has_header: bool,
                    ratios, out_dir: Path, seconds: float) -> dict:
    payload = {
        "package_version": __version__,
        "run_id": hashlib.sha256(
            json.dumps([cfg.to_dict(), str(data_path), list(ratios)], sort_keys=True).encode()
        ).hexdigest()[:12],
        "data": {
            "path": str(data_path),
            "sha256": _sha256_file(data_path),
            "has_header": bool(has_header),
            "ratios": list(ratios),
        },
        "config": cfg.to_dict(),
        "out_dir": str(out_dir),
        "train_seconds": seconds,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def cmd_train(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text()) if args.manifest else None
    cfg = _resolve_config(args, manifest)
    data_path = args.data or (manifest and manifest["data"]["path"])
    if not data_path:
        raise CliError("--data is required (or supply --manifest)")
    has_header = bool(args.has_header) or bool(manifest and manifest["data"]["has_header"])
    ratios = _parse_ratios(args.ratios) if args.ratios else (
        tuple(manifest["data"]["ratios"]) if manifest else (0.7, 0.2, 0.1)
    )
    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(out_dir):
        started = time.time()
        series, norm, w_train, w_val, _ = _prepare_windows(cfg, data_path, has_header, ratios)
        state, history = fit(w_train, w_val, cfg)
        state.normalizer = norm
        save_checkpoint(state, out_dir / "checkpoint.ckpt")
        _write_history_csv(history, out_dir / "history.csv")
        with open(out_dir / "val_metrics.txt", "w") as fh:
            if state.val_history:
                for epoch, mae in state.val_history:
                    fh.write(f"epoch {epoch}: val_mae = {mae:.10g}\n")
                fh.write(f"best_val_mae = {state.best_val_mae:.10g}\n")
            else:
                fh.write("no validation split\n")
        seconds = time.time() - started
        _write_manifest(out_dir / "manifest.json", cfg, data_path, has_header, ratios, out_dir, seconds)
        if args.dump_adjacency:
            dump_adjacency(state.model.graph, out_dir / "adjacency.csv")
    print(f"trained {cfg.epochs} epochs on {series.n_variables} variables -> {out_dir}")
    return 0


def _prediction_columns(horizon: int, n_vars: int) -> list[str]:
    return [f"h{j + 1}_var{i}" for j in range(horizon) for i in range(n_vars)]


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise CliError(f"{ckpt_path}: checkpoint not found")
    state = load_checkpoint(ckpt_path)
    cfg = state.cfg
    if args.metric_scale:
        cfg.metric_scale = args.metric_scale
    if not args.use_final:
        apply_best(state)
    ratios = _parse_ratios(args.ratios) if args.ratios else (0.7, 0.2, 0.1)
    norm = state.normalizer
    if norm is None:
        raise CliError("checkpoint carries no normalizer state; re-train to evaluate")
    series = load_series(args.data, has_header=bool(args.has_header))
    _, _, test_part = chronological_split(series, ratios)
    if test_part is None:
        raise CliError("test split is empty; adjust --ratios")
    w_test = make_windows(norm.apply_series(test_part), cfg.window, cfg.horizon)
    report = evaluate_model(state, w_test, norm, cfg)
    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(report, out_dir / "report.txt")
    write_per_variable_csv(report, out_dir / "per_variable_mae.csv", names=series.variable_names)
    if args.dump_predictions:
        from .metrics import collect_predictions

        preds = collect_predictions(state.model, w_test, cfg.batch_size)
        targets = w_test.targets
        if cfg.metric_scale == "original":
            preds = norm.invert(preds)
            targets = norm.invert(targets)
        cols = _prediction_columns(cfg.horizon, series.n_variables)
        for name, tensor in (("predictions.csv", preds), ("targets.csv", targets)):
            with open(out_dir / name, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(cols)
                for row in tensor.reshape(tensor.shape[0], -1):
                    writer.writerow([repr(float(v)) for v in row])
    if args.dump_embeddings:
        out = state.model.forward(w_test.inputs[: cfg.batch_size], training=False)
        dump_embeddings(out_dir, out.hidden.data, out.fused.data, out.assignments.data)
    if args.dump_adjacency:
        dump_adjacency(state.model.graph, out_dir / "adjacency.csv")
    for line in report.lines():
        print(line)
    return 0


ABLATION_VARIANTS = [
    ("full", {}),
    ("no_adversary", {"use_adversary": False}),
    ("no_clustering_loss", {"use_clustering_loss": False}),
    ("no_orthogonality_loss", {"use_orthogonality_loss": False}),
]


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args, None)
    if not args.data:
        raise CliError("--data is required")
    seeds = [int(s) for s in args.seeds.replace(",", " ").split()]
    if not seeds:
        raise CliError("--seeds must list at least one seed")
    ratios = _parse_ratios(args.ratios) if args.ratios else (0.7, 0.2, 0.1)
    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed_rows = []
    table_rows = []
    with RunLock(out_dir):
        for variant, overrides in ABLATION_VARIANTS:
            maes, mapes, variances = [], [], []
            for seed in seeds:
                run_cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides, "seed": seed})
                _, norm, w_train, w_val, w_test = _prepare_windows(
                    run_cfg, args.data, bool(args.has_header), ratios
                )
                if w_test is None:
                    raise CliError("test split is empty; adjust --ratios")
                state, _ = fit(w_train, w_val, run_cfg)
                apply_best(state)
                report = evaluate_model(state, w_test, norm, run_cfg)
                per_seed_rows.append(
                    [variant, seed, report.mae, report.mape, report.var_fairness]
                )
                maes.append(report.mae)
                mapes.append(report.mape)
                variances.append(report.var_fairness)
            table_rows.append(
                [variant, float(np.mean(maes)), float(np.mean(mapes)), float(np.mean(variances))]
            )
    with open(out_dir / "ablation_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "mae", "mape", "var"])
        for row in table_rows:
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])
    with open(out_dir / "ablation_per_seed.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "mae", "mape", "var"])
        for row in per_seed_rows:
            writer.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])
    print(f"{'variant':<24}{'MAE':>12}{'MAPE':>12}{'VAR':>14}")
    for variant, mae, mape, var in table_rows:
        print(f"{variant:<24}{mae:>12.6f}{mape:>12.6f}{var:>14.8f}")
    return 0


def cmd_synth(args) -> int:
    series = synth_two_group(
        args.n_easy,
        args.n_hard,
        args.steps,
        args.noise_easy,
        args.noise_hard,
        seed=args.seed,
        segment_len=args.segment_len,
        jump_scale=args.jump_scale,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_series(series, out)
    sidecar = out.with_suffix(out.suffix + ".groups.csv")
    with open(sidecar, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["column", "name", "group"])
        for i, (name, group) in enumerate(zip(series.variable_names, group_labels(series))):
            writer.writerow([i, name, group])
    print(f"wrote {series.n_steps}x{series.n_variables} matrix to {out} (+ {sidecar.name})")
    return 0


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(args.run_dir)
    eval_dir = Path(args.eval_dir) if args.eval_dir else run_dir
    out_dir = Path(args.out) if args.out else run_dir / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    made = []

    history_path = run_dir / "history.csv"
    if history_path.exists():
        rows = list(csv.DictReader(open(history_path)))
        iters = [int(r["iteration"]) for r in rows]
        fig, ax = plt.subplots(figsize=(8, 5))
        for key in ("l_forecast", "l_cluster", "l_ortho", "l_adv", "total"):
            ax.plot(iters, [float(r[key]) for r in rows], label=key)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend()
        ax.set_title("training losses")
        fig.savefig(out_dir / "loss_curves.png", dpi=120)
        plt.close(fig)
        made.append("loss_curves.png")

    mae_path = eval_dir / "per_variable_mae.csv"
    if mae_path.exists():
        rows = list(csv.DictReader(open(mae_path)))
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.bar([r["name"] for r in rows], [float(r["mae"]) for r in rows])
        ax.set_ylabel("MAE")
        ax.set_title("per-variable MAE")
        ax.tick_params(axis="x", rotation=90)
        fig.tight_layout()
        fig.savefig(out_dir / "mae_bars.png", dpi=120)
        plt.close(fig)
        made.append("mae_bars.png")

    preds_path = eval_dir / "predictions.csv"
    targets_path = eval_dir / "targets.csv"
    if preds_path.exists() and targets_path.exists():
        idx = args.variable
        col = None
        preds_rows = list(csv.DictReader(open(preds_path)))
        target_rows = list(csv.DictReader(open(targets_path)))
        col = f"h1_var{idx}"
        if preds_rows and col in preds_rows[0]:
            fig, ax = plt.subplots(figsize=(9, 4))
            ax.plot([float(r[col]) for r in target_rows], label="truth")
            ax.plot([float(r[col]) for r in preds_rows], label="prediction")
            ax.set_xlabel("window")
            ax.set_title(f"one-step-ahead forecast, variable {idx}")
            ax.legend()
            fig.savefig(out_dir / f"overlay_var{idx}.png", dpi=120)
            plt.close(fig)
            made.append(f"overlay_var{idx}.png")
    if not made:
        raise CliError(f"nothing to plot under {run_dir} / {eval_dir}")
    print(f"wrote {', '.join(made)} to {out_dir}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--window", type=int)
    parser.add_argument("--horizon", type=int)
    parser.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    parser.add_argument("--embed-dim", type=int, dest="embed_dim")
    parser.add_argument("--clusters", type=int)
    parser.add_argument("--top-n", type=int, dest="top_n")
    parser.add_argument("--lambda-a", type=float, dest="lambda_a")
    parser.add_argument("--lr-generator", type=float, dest="lr_generator")
    parser.add_argument("--lr-discriminator", type=float, dest="lr_discriminator")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--indicator-every", type=int, dest="indicator_every")
    parser.add_argument("--metric-scale", choices=["original", "normalized"], dest="metric_scale")
    parser.add_argument("--grad-clip", dest="grad_clip",
                        type=lambda v: v if v == "none" else float(v))
    parser.add_argument("--no-adversary", action="store_true", default=None)
    parser.add_argument("--no-clustering-loss", action="store_true", default=None)
    parser.add_argument("--no-orthogonality-loss", action="store_true", default=None)
    parser.add_argument("--shared-adversary-objective", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faircast", description="fairness-aware multivariate time-series forecasting"
    )
    parser.add_argument("--version", action="version", version=f"faircast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a run directory")
    p_train.add_argument("--data", help="numeric CSV, rows = time steps")
    p_train.add_argument("--out", required=True, help="output run directory")
    p_train.add_argument("--manifest", help="re-execute from a saved manifest")
    p_train.add_argument("--ratios", help="train,val,test ratios (default 0.7,0.2,0.1)")
    p_train.add_argument("--has-header", action="store_true", default=None)
    p_train.add_argument("--dump-adjacency", action="store_true")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--ratios")
    p_eval.add_argument("--has-header", action="store_true", default=None)
    p_eval.add_argument("--metric-scale", choices=["original", "normalized"], dest="metric_scale")
    p_eval.add_argument("--use-final", action="store_true",
                        help="evaluate the final parameters instead of the best-validation snapshot")
    p_eval.add_argument("--dump-predictions", action="store_true")
    p_eval.add_argument("--dump-embeddings", action="store_true")
    p_eval.add_argument("--dump-adjacency", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="full model vs the three loss-toggle ablations")
    p_ablate.add_argument("--data")
    p_ablate.add_argument("--out", required=True)
    p_ablate.add_argument("--ratios")
    p_ablate.add_argument("--has-header", action="store_true", default=None)
    p_ablate.add_argument("--seeds", default="1,2,3,4,5")
    _add_config_flags(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_synth = sub.add_parser("synth", help="generate the two-group benchmark CSV")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--n-easy", type=int, default=8, dest="n_easy")
    p_synth.add_argument("--n-hard", type=int, default=8, dest="n_hard")
    p_synth.add_argument("--steps", type=int, default=2000)
    p_synth.add_argument("--noise-easy", type=float, default=0.02, dest="noise_easy")
    p_synth.add_argument("--noise-hard", type=float, default=0.25, dest="noise_hard")
    p_synth.add_argument("--seed", type=int, default=1)
    p_synth.add_argument("--segment-len", type=int, default=50, dest="segment_len")
    p_synth.add_argument("--jump-scale", type=float, default=1.5, dest="jump_scale")
    p_synth.set_defaults(func=cmd_synth)

    p_plot = sub.add_parser("plot", help="static figures from a finished run")
    p_plot.add_argument("--run-dir", required=True, dest="run_dir")
    p_plot.add_argument("--eval-dir", dest="eval_dir")
    p_plot.add_argument("--variable", type=int, default=0)
    p_plot.add_argument("--out")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
