"""The ``aqua`` command line:

    aqua gen-data  --config cfg.yaml [--out DIR] [--force] [--seed N]
    aqua train     --config cfg.yaml [--manifest PATH] [--out DIR] [--resume CKPT]
    aqua evaluate  --config cfg.yaml [--checkpoint CKPT] [--manifest PATH] [--out DIR]
    aqua explain   --config cfg.yaml [--checkpoint CKPT] [--manifest PATH] [--out DIR]
    aqua report    [--config cfg.yaml] [--results DIR] [--out DIR]

Paths default to the config's layout under <output_dir or $AQUA_RESULTS_ROOT>/
<name>/. Exit codes: 0 ok, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data.series import Sensor
from .data.storage import Manifest, ManifestEntry, save_sample
from .data.synthetic import SyntheticConfig, generate_synthetic_scene
from .errors import TrainingDiverged, UserError

logger = logging.getLogger("aquacast")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; usage errors are 1
        raise UserError(message)


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise UserError("--config is required for this command")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out_dir = Path(args.out) if args.out else cfg.dataset_dir()
    manifest_path = out_dir / "manifest.json"
    if out_dir.exists() and any(out_dir.iterdir()):
        if not args.force:
            raise UserError(f"{out_dir} is not empty; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)

    d = cfg.data
    # (count, sensor, region, starting year) per split; regions follow the
    # sensor-based split rule.
    groups = [
        (d.n_pretrain, Sensor.LANDSAT5, ("usa", "europe"), 1995),
        (d.n_finetune, Sensor.SENTINEL2, ("brazil",), 2016),
        (d.n_test, Sensor.SENTINEL2, ("usa", "europe"), 2016),
    ]
    entries = []
    counter = 0
    for count, sensor, regions, start_year in groups:
        for i in range(count):
            seed = cfg.seed * 1_000_003 + counter
            dynamics = d.dynamics[counter % len(d.dynamics)]
            syn = SyntheticConfig(
                height=d.height,
                width=d.width,
                series_length=d.series_length,
                window_months=d.window_months,
                future_length=d.future_length,
                dynamics=dynamics,
                noise=d.noise,
                cloud_fraction=d.cloud_fraction,
                artifact_prob=d.artifact_prob,
                trend_gain=d.trend_gain,
                threshold=cfg.threshold,
                start_year=start_year,
            )
            record = generate_synthetic_scene(
                syn,
                seed=seed,
                sensor=sensor,
                region=regions[i % len(regions)],
                sample_id=f"synth-{counter:06d}",
            )
            rel = f"sample_{counter:06d}"
            save_sample(record, out_dir / rel)
            entries.append(ManifestEntry(rel, record.split, record.sample_id))
            counter += 1
    manifest = Manifest(entries=entries, seed=cfg.seed, config=cfg.to_dict()["data"])
    manifest.save(manifest_path)
    print(f"wrote {counter} samples and {manifest_path}")
    return 0


def _manifest_path(cfg: ExperimentConfig, args) -> Path:
    path = Path(args.manifest) if getattr(args, "manifest", None) else cfg.dataset_dir() / "manifest.json"
    if not path.exists():
        raise UserError(f"manifest not found: {path} (run `aqua gen-data` first?)")
    return path


def cmd_train(args) -> int:
    from .train import train_model

    cfg = _load(args)
    manifest = _manifest_path(cfg, args)
    out_dir = Path(args.out) if args.out else cfg.train_dir()
    result = train_model(cfg, manifest, out_dir, resume_from=args.resume)
    print(f"best checkpoint: {result.best_checkpoint} (val score {result.best_score:.4f})")
    print(f"training log: {result.log_path}")
    return 0


def _checkpoint_path(cfg: ExperimentConfig, args) -> Path:
    path = Path(args.checkpoint) if getattr(args, "checkpoint", None) else cfg.train_dir() / "best.pt"
    if not path.exists():
        raise UserError(f"checkpoint not found: {path} (run `aqua train` first?)")
    return path


def cmd_evaluate(args) -> int:
    from .evaluate import evaluate_checkpoint

    cfg = _load(args)
    out_dir = Path(args.out) if args.out else cfg.eval_dir()
    reports = evaluate_checkpoint(
        _checkpoint_path(cfg, args),
        _manifest_path(cfg, args),
        out_dir,
        task=cfg.task,
    )
    for name, report in sorted(reports.items()):
        keys = sorted(report.values)[:4]
        summary = ", ".join(f"{k}={report.values[k]:.3f}" for k in keys)
        print(f"{name}: {summary} -> {out_dir / f'report_{name}.json'}")
    return 0


def cmd_explain(args) -> int:
    from .explain import run_explain

    cfg = _load(args)
    out_dir = Path(args.out) if args.out else cfg.explain_dir()
    result = run_explain(
        _checkpoint_path(cfg, args),
        _manifest_path(cfg, args),
        out_dir,
        theta=cfg.subgroup_theta,
        welch_alpha=cfg.welch_alpha,
    )
    for notice in result.get("notices", []):
        print(f"notice: {notice}")
    print(f"explanation reports in {out_dir}")
    return 0


def cmd_report(args) -> int:
    from .reporting import generate_report

    if args.config:
        cfg = _load(args)
        results = Path(args.results) if args.results else cfg.root()
        out_dir = Path(args.out) if args.out else cfg.report_dir()
    else:
        if not args.results:
            raise UserError("report needs --results or --config")
        results = Path(args.results)
        out_dir = Path(args.out) if args.out else results / "report"
    path = generate_report(results, out_dir)
    print(f"report written to {path}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="aqua", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=False, checkpoint=False):
        p.add_argument("--config", help="experiment config YAML")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", help="output directory override")
        if manifest:
            p.add_argument("--manifest", help="dataset manifest path")
        if checkpoint:
            p.add_argument("--checkpoint", help="model checkpoint path")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--force", action="store_true", help="overwrite an existing non-empty directory")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model with the configured schedule")
    common(p, manifest=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint plus baselines on the test split")
    common(p, manifest=True, checkpoint=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("explain", help="channel saliency and climate subgroup analysis")
    common(p, manifest=True, checkpoint=True)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("report", help="merge runs into comparison tables and plots")
    common(p)
    p.add_argument("--results", help="results tree to merge")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
