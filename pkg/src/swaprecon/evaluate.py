"""Evaluation harness: edge precision/recall/F1, mask MAE, threshold sweeps,
the four-way swap/classifier ablation, and the parameter-count benchmark."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import DecisionThresholds
from .model import PipelineSettings, ReconModel
from .sampler import PlanarGraph
from .swap import SwapConfig, SwapNNParams, build_swap_permutation
from .tensor import ConvParams, param_count
from .training import mask_for, train_model

DEFAULT_SEG_THRESHOLDS = (0.5, 0.6, 0.7, 0.8)
DEFAULT_CLS_THRESHOLDS = (0.4, 0.5, 0.6, 0.7)

BENCH_WIDTHS = (16, 64, 256, 1024)


@dataclass
class Metrics:
    """Edge-set accuracy plus optional segmentation-quality numbers."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    mae: float | None = None
    mask_recall: float | None = None

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        out = {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }
        if self.mae is not None:
            out["mae"] = self.mae
        if self.mask_recall is not None:
            out["mask_recall"] = self.mask_recall
        return out


def eval_edges(predicted: PlanarGraph, truth: PlanarGraph) -> Metrics:
    """Exact-pair precision/recall over shared ground-truth corners."""
    if predicted.corners.shape != truth.corners.shape or not np.array_equal(
        predicted.corners, truth.corners
    ):
        raise ValueError("predicted and truth graphs must share the corner list")
    tp = len(predicted.edges & truth.edges)
    return Metrics(
        tp=tp, fp=len(predicted.edges) - tp, fn=len(truth.edges) - tp
    )


def eval_mae(prob_map: np.ndarray, truth_mask: np.ndarray) -> float:
    """Mean absolute per-pixel difference."""
    prob_map = np.asarray(prob_map, dtype=np.float64)
    truth_mask = np.asarray(truth_mask, dtype=np.float64)
    if prob_map.shape != truth_mask.shape:
        raise ValueError(f"shape mismatch: {prob_map.shape} vs {truth_mask.shape}")
    return float(np.abs(prob_map - truth_mask).mean())


def mask_recall(prob_map: np.ndarray, truth_mask: np.ndarray,
                threshold: float = 0.5) -> float:
    """Recall of mask pixels after binarizing the map at *threshold*."""
    prob_map = np.asarray(prob_map, dtype=np.float64)
    truth_mask = np.asarray(truth_mask, dtype=np.float64)
    positives = truth_mask > 0.5
    if not positives.any():
        return 0.0
    return float(((prob_map > threshold) & positives).sum() / positives.sum())


def evaluate_model(model: ReconModel, scenes: list,
                   thresholds: DecisionThresholds,
                   settings: PipelineSettings = PipelineSettings(),
                   use_classifier: bool = True, dilation: int = 1):
    """Aggregate metrics over scenes; TP/FP/FN summed, MAE averaged.

    Returns (Metrics, per-image rows) where each row carries the image id,
    the predicted edge list, and the per-image counts; the rows are enough
    to recompute the aggregate from dumped predictions.
    """
    total = Metrics()
    maes = []
    recalls = []
    rows = []
    for image, record in scenes:
        truth = record.graph()
        scores = model.score_image(image, record.corners, settings, use_classifier)
        predicted = PlanarGraph(
            record.corners, model.decide_edges(scores, thresholds, use_classifier)
        )
        m = eval_edges(predicted, truth)
        mask = mask_for(record, side=model.segnet.config.side, dilation=dilation)
        maes.append(eval_mae(scores.prob_map, mask))
        recalls.append(mask_recall(scores.prob_map, mask))
        total.tp += m.tp
        total.fp += m.fp
        total.fn += m.fn
        rows.append(
            {
                "image_id": record.image_id,
                "predicted_edges": sorted(predicted.edges),
                "tp": m.tp, "fp": m.fp, "fn": m.fn,
            }
        )
    total.mae = float(np.mean(maes))
    total.mask_recall = float(np.mean(recalls))
    return total, rows


@dataclass
class SweepGrid:
    """Metrics per (segmentation, classification) threshold pair."""

    seg_thresholds: tuple
    cls_thresholds: tuple
    cells: dict = field(default_factory=dict)  # (seg, cls) -> Metrics

    def rows(self):
        for cls_t in self.cls_thresholds:
            for seg_t in self.seg_thresholds:
                yield seg_t, cls_t, self.cells[(seg_t, cls_t)]


def sweep(model: ReconModel, scenes: list,
          seg_thresholds=DEFAULT_SEG_THRESHOLDS,
          cls_thresholds=DEFAULT_CLS_THRESHOLDS,
          settings: PipelineSettings = PipelineSettings(),
          use_classifier: bool = True) -> SweepGrid:
    """Score each scene once, then re-apply the decision per grid cell."""
    cached = []
    for image, record in scenes:
        scores = model.score_image(image, record.corners, settings, use_classifier)
        cached.append((record, scores))
    grid = SweepGrid(tuple(seg_thresholds), tuple(cls_thresholds))
    for seg_t in grid.seg_thresholds:
        for cls_t in grid.cls_thresholds:
            th = DecisionThresholds(seg_t, cls_t)
            cell = Metrics()
            for record, scores in cached:
                predicted = PlanarGraph(
                    record.corners, model.decide_edges(scores, th, use_classifier)
                )
                m = eval_edges(predicted, record.graph())
                cell.tp += m.tp
                cell.fp += m.fp
                cell.fn += m.fn
            grid.cells[(seg_t, cls_t)] = cell
    return grid


def write_sweep_csv(grid: SweepGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cls_threshold", "seg_threshold",
                         "precision", "recall", "f1", "tp", "fp", "fn"])
        for seg_t, cls_t, m in grid.rows():
            writer.writerow([cls_t, seg_t,
                             f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}",
                             m.tp, m.fp, m.fn])


ABLATION_ROWS = (
    ("segnet", "noswap", False),
    ("segnet-swap", "swap", False),
    ("segnet-classifier", "noswap", True),
    ("segnet-swap-classifier", "swap", True),
)


def ablation(train_scenes: list, eval_scenes: list,
             thresholds: DecisionThresholds, seed: int = 0,
             epochs: int = 25, cls_epochs: int = 60, dilation: int = 1,
             settings: PipelineSettings = PipelineSettings(),
             dump_dir=None, log_every: int = 0, models: dict | None = None):
    """Four-way ablation: backbone with/without swap, with/without classifier.

    One backbone per swap mode is trained and shared between its
    seg-only and classifier rows, so those rows report identical MAE.
    Pre-trained models may be supplied as {"swap": ..., "noswap": ...};
    otherwise both are trained here.  Returns a list of row dicts; with
    dump_dir set, per-image predictions are written as JSON next to the
    report.
    """
    if not eval_scenes or (models is None and not train_scenes):
        raise ValueError("ablation needs non-empty train and eval scene lists")
    if models is None:
        models = {}
        for mode in ("noswap", "swap"):
            models[mode], _, _ = train_model(
                train_scenes, mode=mode, seed=seed, epochs=epochs,
                cls_epochs=cls_epochs, dilation=dilation, log_every=log_every,
            )
    report = []
    for name, mode, use_classifier in ABLATION_ROWS:
        metrics, rows = evaluate_model(
            models[mode], eval_scenes, thresholds, settings,
            use_classifier=use_classifier, dilation=dilation,
        )
        entry = {"model": name, **metrics.as_dict()}
        report.append(entry)
        if dump_dir is not None:
            dump_path = Path(dump_dir) / f"predictions_{name}.json"
            dump_path.write_text(json.dumps(rows, indent=1) + "\n")
    return report


def write_ablation_csv(report: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "precision", "recall", "f1", "mae", "mask_recall"])
        for row in report:
            writer.writerow([
                row["model"],
                f"{row['precision']:.6f}", f"{row['recall']:.6f}", f"{row['f1']:.6f}",
                f"{row['mae']:.6f}", f"{row['mask_recall']:.6f}",
            ])


def recompute_from_dump(dump_path, scenes) -> Metrics:
    """Rebuild aggregate edge metrics from a predictions dump."""
    rows = json.loads(Path(dump_path).read_text())
    truth_by_id = {record.image_id: record.graph() for _, record in scenes}
    total = Metrics()
    for row in rows:
        truth = truth_by_id[row["image_id"]]
        predicted = PlanarGraph(
            truth.corners, {tuple(e) for e in row["predicted_edges"]}
        )
        m = eval_edges(predicted, truth)
        total.tp += m.tp
        total.fp += m.fp
        total.fn += m.fn
    return total


def bench_params(widths=BENCH_WIDTHS, group_divisor: int = 4) -> list:
    """Parameter counts: 3x3 conv vs swap + 1x1 vs grouped swap + 1x1.

    All convolutions are counted bias-free so the table isolates the
    weight tensors; the grouped variant's 1x1 halves the channel count.
    """
    rows = []
    for c in widths:
        conv3 = param_count(ConvParams(np.zeros((c, c, 3, 3))))
        perm = build_swap_permutation(SwapConfig(key=5, channels=c))
        mix_full = param_count(ConvParams(np.zeros((c, c, 1, 1))))
        swap_total = param_count(perm) + mix_full
        nn = SwapNNParams.init(c, max(c // group_divisor, 1))
        mix_half = param_count(ConvParams(np.zeros((max(c // 2, 1), c, 1, 1))))
        swapnn_total = param_count(nn) + mix_half
        rows.append(
            {
                "width": c,
                "conv3x3": conv3,
                "swap_block": swap_total,
                "swap_added": param_count(perm),
                "swapnn_block": swapnn_total,
                "swapnn_added": param_count(nn),
                "reduction": conv3 / swap_total,
            }
        )
    return rows


def write_bench_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["width", "conv3x3", "swap_block", "swap_added",
                         "swapnn_block", "swapnn_added", "reduction"])
        for row in rows:
            writer.writerow([row["width"], row["conv3x3"], row["swap_block"],
                             row["swap_added"], row["swapnn_block"],
                             row["swapnn_added"], f"{row['reduction']:.3f}"])
