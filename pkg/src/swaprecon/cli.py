"""Command-line surface.

Every option can also come from a JSON or TOML config file passed as
`swaprecon --config FILE <command>`; sections are keyed by command name
and explicit command-line flags win over config values.
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .classifier import DecisionThresholds
from .data import (
    SyntheticConfig,
    load_annotation,
    load_image,
    read_dataset,
    render_svg,
    save_annotation,
    write_dataset,
)
from .data import AnnotationRecord
from .evaluate import (
    DEFAULT_CLS_THRESHOLDS,
    DEFAULT_SEG_THRESHOLDS,
    ablation,
    bench_params,
    evaluate_model,
    sweep,
    write_ablation_csv,
    write_bench_csv,
    write_sweep_csv,
)
from .model import PipelineSettings, ReconModel
from .sampler import PlanarGraph
from .training import train_model


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(raw.decode())
    return json.loads(raw)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON or TOML file with per-command defaults.")
@click.pass_context
def main(ctx, config_path):
    """Building planar-graph reconstruction with channel-swap backbones."""
    if config_path:
        ctx.default_map = _load_config(config_path)


def _scenes_slice(data_dir, skip, limit):
    scenes = [(img, rec) for img, rec in read_dataset(data_dir)]
    scenes = scenes[skip:]
    if limit is not None:
        scenes = scenes[:limit]
    if not scenes:
        raise click.ClickException("selected scene slice is empty")
    return scenes


def _settings(topk, expand_target, neighbors):
    return PipelineSettings(topk=topk, expand_target=expand_target,
                            neighbors=neighbors)


def _parse_threshold_list(text):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.ClickException(f"bad threshold list: {text!r}")
    if not values:
        raise click.ClickException("threshold list is empty")
    return values


@main.command("gen-data")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", default=200, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--noise", default=0.03, show_default=True)
@click.option("--corners-min", default=4, show_default=True)
@click.option("--corners-max", default=12, show_default=True)
def gen_data(out_dir, count, seed, noise, corners_min, corners_max):
    """Generate a synthetic scene dataset under OUT/{images,annotations}."""
    cfg = SyntheticConfig(seed=seed, count=count, noise=noise,
                          corners_min=corners_min, corners_max=corners_max)
    written = write_dataset(cfg, out_dir)
    click.echo(f"wrote {written} scenes to {out_dir}")


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["swap", "noswap", "swapnn"]),
              default="swap", show_default=True)
@click.option("--epochs", default=25, show_default=True)
@click.option("--cls-epochs", default=60, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--decay", default=1e-4, show_default=True)
@click.option("--decay-mode", type=click.Choice(["lr", "weight"]), default="lr",
              show_default=True)
@click.option("--dilation", default=1, show_default=True)
@click.option("--no-classifier", is_flag=True, help="Train only the backbone.")
@click.option("--loss-curve", "curve_path", type=click.Path(dir_okay=False),
              default=None, help="Write per-epoch losses as CSV.")
@click.option("--skip", default=0, show_default=True, help="Skip leading scenes.")
@click.option("--limit", default=None, type=int, help="Use at most N scenes.")
@click.option("--quiet", is_flag=True)
def train(data_dir, out_path, mode, epochs, cls_epochs, seed, lr, batch_size,
          decay, decay_mode, dilation, no_classifier, curve_path, skip, limit, quiet):
    """Train a backbone (and classifier) on a dataset directory."""
    scenes = _scenes_slice(data_dir, skip, limit)
    model, seg_curve, cls_curve = train_model(
        scenes, mode=mode, seed=seed, epochs=epochs, cls_epochs=cls_epochs,
        dilation=dilation, with_classifier=not no_classifier, lr=lr,
        batch_size=batch_size, decay=decay, decay_mode=decay_mode,
        log_every=0 if quiet else max(epochs // 10, 1),
    )
    model.save(out_path)
    if curve_path:
        with open(curve_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "epoch", "loss"])
            for i, value in enumerate(seg_curve):
                writer.writerow(["backbone", i, f"{value:.10f}"])
            for i, value in enumerate(cls_curve):
                writer.writerow(["classifier", i, f"{value:.10f}"])
    click.echo(
        f"trained {mode} model on {len(scenes)} scenes "
        f"({model.parameter_count} parameters) -> {out_path}"
    )


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--annotation", "annotation_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seg-threshold", default=0.5, show_default=True)
@click.option("--cls-threshold", default=0.5, show_default=True)
@click.option("--topk", default=64, show_default=True)
@click.option("--expand-target", default=256, show_default=True)
@click.option("--neighbors", type=click.Choice(["4", "8", "16"]), default="4",
              show_default=True)
@click.option("--no-classifier", is_flag=True, help="Decide on the segmentation score only.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the predicted graph as annotation JSON.")
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None,
              help="Write an SVG overlay of predicted vs truth edges.")
@click.option("--dump-scores", "scores_path", type=click.Path(dir_okay=False),
              default=None, help="Write the scored candidate set as JSON.")
def infer(model_path, image_path, annotation_path, seg_threshold, cls_threshold,
          topk, expand_target, neighbors, no_classifier, out_path, svg_path,
          scores_path):
    """Reconstruct the planar graph of one image."""
    model = ReconModel.load(model_path)
    image = load_image(image_path)
    record = load_annotation(annotation_path)
    settings = _settings(topk, expand_target, int(neighbors))
    thresholds = DecisionThresholds(seg_threshold, cls_threshold)
    use_classifier = not no_classifier
    scores = model.score_image(image, record.corners, settings, use_classifier)
    edges = model.decide_edges(scores, thresholds, use_classifier)
    predicted = PlanarGraph(record.corners, edges)
    click.echo(f"{record.image_id}: {len(edges)} edges from {len(scores.pairs)} candidates")
    if out_path:
        save_annotation(
            AnnotationRecord(record.image_id, record.corners, sorted(edges)), out_path
        )
    if svg_path:
        render_svg(image, predicted, record.graph(), svg_path)
    if scores_path:
        Path(scores_path).write_text(scores.scored.to_json() + "\n")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--seg-threshold", default=0.5, show_default=True)
@click.option("--cls-threshold", default=0.5, show_default=True)
@click.option("--topk", default=64, show_default=True)
@click.option("--expand-target", default=256, show_default=True)
@click.option("--neighbors", type=click.Choice(["4", "8", "16"]), default="4",
              show_default=True)
@click.option("--dilation", default=1, show_default=True)
@click.option("--no-classifier", is_flag=True)
@click.option("--skip", default=0, show_default=True)
@click.option("--limit", default=None, type=int)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write per-image prediction rows as JSON.")
def eval_cmd(model_path, data_dir, seg_threshold, cls_threshold, topk,
             expand_target, neighbors, dilation, no_classifier, skip, limit,
             out_path):
    """Evaluate edge metrics and mask MAE over a dataset slice."""
    model = ReconModel.load(model_path)
    scenes = _scenes_slice(data_dir, skip, limit)
    metrics, rows = evaluate_model(
        model, scenes, DecisionThresholds(seg_threshold, cls_threshold),
        _settings(topk, expand_target, int(neighbors)),
        use_classifier=not no_classifier, dilation=dilation,
    )
    click.echo(
        f"P {metrics.precision:.4f}  R {metrics.recall:.4f}  F1 {metrics.f1:.4f}  "
        f"MAE {metrics.mae:.4f}  mask-recall@0.5 {metrics.mask_recall:.4f}  "
        f"(tp {metrics.tp} fp {metrics.fp} fn {metrics.fn}, {len(scenes)} scenes)"
    )
    if out_path:
        Path(out_path).write_text(json.dumps(rows, indent=1) + "\n")


@main.command("sweep")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--seg-thresholds", default=",".join(str(v) for v in DEFAULT_SEG_THRESHOLDS),
              show_default=True)
@click.option("--cls-thresholds", default=",".join(str(v) for v in DEFAULT_CLS_THRESHOLDS),
              show_default=True)
@click.option("--topk", default=64, show_default=True)
@click.option("--expand-target", default=256, show_default=True)
@click.option("--neighbors", type=click.Choice(["4", "8", "16"]), default="4",
              show_default=True)
@click.option("--skip", default=0, show_default=True)
@click.option("--limit", default=None, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def sweep_cmd(model_path, data_dir, seg_thresholds, cls_thresholds, topk,
              expand_target, neighbors, skip, limit, out_path):
    """Grid of metrics over segmentation x classification thresholds."""
    model = ReconModel.load(model_path)
    scenes = _scenes_slice(data_dir, skip, limit)
    grid = sweep(
        model, scenes,
        _parse_threshold_list(seg_thresholds), _parse_threshold_list(cls_thresholds),
        _settings(topk, expand_target, int(neighbors)),
    )
    write_sweep_csv(grid, out_path)
    click.echo(f"cls\\seg   " + "  ".join(f"{s:>17.2f}" for s in grid.seg_thresholds))
    for cls_t in grid.cls_thresholds:
        cells = [grid.cells[(seg_t, cls_t)] for seg_t in grid.seg_thresholds]
        click.echo(
            f"{cls_t:7.2f}  "
            + "  ".join(f"{m.precision:.3f}/{m.recall:.3f}/{m.f1:.3f}" for m in cells)
        )
    click.echo(f"wrote {out_path}")


@main.command("ablation")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--train-count", default=160, show_default=True)
@click.option("--epochs", default=25, show_default=True)
@click.option("--cls-epochs", default=60, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--seg-threshold", default=0.5, show_default=True)
@click.option("--cls-threshold", default=0.5, show_default=True)
@click.option("--dilation", default=1, show_default=True)
@click.option("--quiet", is_flag=True)
def ablation_cmd(data_dir, out_dir, train_count, epochs, cls_epochs, seed,
                 seg_threshold, cls_threshold, dilation, quiet):
    """Four-way swap/classifier ablation with dumped predictions."""
    scenes = _scenes_slice(data_dir, 0, None)
    if len(scenes) <= train_count:
        raise click.ClickException(
            f"need more than {train_count} scenes for a held-out split"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = ablation(
        scenes[:train_count], scenes[train_count:],
        DecisionThresholds(seg_threshold, cls_threshold),
        seed=seed, epochs=epochs, cls_epochs=cls_epochs, dilation=dilation,
        dump_dir=out, log_every=0 if quiet else max(epochs // 5, 1),
    )
    write_ablation_csv(report, out / "ablation.csv")
    for row in report:
        click.echo(
            f"{row['model']:>24}: P {row['precision']:.4f} R {row['recall']:.4f} "
            f"F1 {row['f1']:.4f} MAE {row['mae']:.4f} maskR {row['mask_recall']:.4f}"
        )
    click.echo(f"wrote {out / 'ablation.csv'}")


@main.command("bench-params")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--dump-perms", "perms_path", type=click.Path(dir_okay=False),
              default=None, help="Write the swap permutation of each width as JSON.")
@click.option("--key", default=5, show_default=True, help="XOR key for dumped tables.")
def bench_params_cmd(out_path, perms_path, key):
    """Parameter-count table: 3x3 conv vs swap variants with 1x1 mixing."""
    rows = bench_params()
    if perms_path:
        from .evaluate import BENCH_WIDTHS
        from .swap import SwapConfig, build_swap_permutation

        tables = {
            str(width): build_swap_permutation(
                SwapConfig(key=key, channels=width)
            ).perm.tolist()
            for width in BENCH_WIDTHS
        }
        Path(perms_path).write_text(json.dumps(tables, indent=1) + "\n")
        click.echo(f"wrote permutation tables to {perms_path}")
    click.echo(f"{'width':>6} {'conv3x3':>12} {'swap+1x1':>12} {'swapnn+1x1':>12} {'reduction':>10}")
    for row in rows:
        click.echo(
            f"{row['width']:>6} {row['conv3x3']:>12} {row['swap_block']:>12} "
            f"{row['swapnn_block']:>12} {row['reduction']:>10.3f}"
        )
    if out_path:
        write_bench_csv(rows, out_path)
        click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    sys.exit(main())
