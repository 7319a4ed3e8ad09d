"""Full reconstruction model: backbone + fusion weights + edge classifier,
the end-to-end inference pipeline, and the checkpoint container.

Checkpoints are .npz archives: a JSON metadata entry ("meta") carrying a
format version and the backbone configuration, plus one shape-tagged array
per parameter (enc_w0, enc_b0, ..., fusion_w, cls_w, cls_b).
"""
from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass

import numpy as np
from numpy.lib import format as _npformat

from .classifier import ClassifierParams, DecisionThresholds, classify, decide
from .sampler import (
    PlanarGraph,
    ScoredEdgeSet,
    enumerate_candidates,
    expand_scores,
    extract_edge_features,
    fuse_features,
    score_candidates,
    top_k,
)
from .segnet import SegNet, SegNetConfig

CHECKPOINT_VERSION = 1

DEFAULT_TOPK = 64
DEFAULT_EXPAND_TARGET = 256


@dataclass(frozen=True)
class PipelineSettings:
    """Inference-time knobs of the candidate pipeline."""

    topk: int = DEFAULT_TOPK
    expand_target: int = DEFAULT_EXPAND_TARGET
    neighbors: int = 4
    score_points: int = 64

    def __post_init__(self):
        if self.topk < 1:
            raise ValueError("topk must be positive")
        if self.expand_target < self.topk:
            raise ValueError(
                f"expand target {self.expand_target} smaller than topk {self.topk}"
            )


@dataclass
class CandidateScores:
    """Per-image scoring artifacts cached for threshold re-application."""

    pairs: list            # unique candidate pairs surviving top-k, rank order
    seg_scores: np.ndarray  # original (unexpanded) segmentation score per pair
    cls_scores: np.ndarray  # classifier probability per pair (0.0 if unused)
    prob_map: np.ndarray
    scored: ScoredEdgeSet   # full pre-expansion candidate set


class ReconModel:
    """Trained backbone plus fusion weights and optional classifier."""

    def __init__(self, segnet: SegNet, fusion_weights=None,
                 classifier: ClassifierParams | None = None):
        self.segnet = segnet
        levels = segnet.config.levels
        if fusion_weights is None:
            fusion_weights = np.full(levels, 1.0 / levels)
        self.fusion_weights = np.asarray(fusion_weights, dtype=np.float64)
        self.classifier = classifier

    @property
    def parameter_count(self) -> int:
        total = self.segnet.parameter_count + self.fusion_weights.size
        if self.classifier is not None:
            total += self.classifier.parameter_count
        return total

    # -- scoring and decision ------------------------------------------------

    def score_image(self, image: np.ndarray, corners: np.ndarray,
                    settings: PipelineSettings = PipelineSettings(),
                    use_classifier: bool = True) -> CandidateScores:
        """Run the backbone and score/select candidate edges for one image.

        Candidates are scored on the probability map, expanded to the
        fixed pool size, ranked, and reduced to the top-k; expansion
        copies of a pair collapse onto the first (highest-ranked)
        occurrence before the classifier runs.
        """
        corners = np.asarray(corners, dtype=np.float64).reshape(-1, 2)
        if len(corners) < 2:
            raise ValueError(f"need at least 2 corners, got {len(corners)}")
        outputs = self.segnet.forward(image)
        candidates = enumerate_candidates(corners)
        scored = score_candidates(
            outputs.prob_map, corners, candidates,
            n_points=settings.score_points, neighbors=settings.neighbors,
        )
        expanded = expand_scores(scored, settings.expand_target)
        selected = top_k(expanded, settings.topk)

        original_score = dict(zip(scored.edges, scored.scores))
        pairs = []
        seen = set()
        for idx in selected:
            pair = expanded.edges[idx]
            if pair not in seen:
                seen.add(pair)
                pairs.append(pair)
        seg_scores = np.array([original_score[pair] for pair in pairs])

        if use_classifier:
            if self.classifier is None:
                raise ValueError(
                    "model has no classifier head; pass use_classifier=False "
                    "(CLI: --no-classifier) for segmentation-only decisions"
                )
            feature_maps = [f[0] for f in outputs.features]
            cls_scores = np.array([
                classify(
                    fuse_features(
                        extract_edge_features(
                            feature_maps, corners[i], corners[j],
                            frame_side=self.segnet.config.side,
                        ),
                        self.fusion_weights,
                    ),
                    self.classifier,
                )
                for (i, j) in pairs
            ])
        else:
            cls_scores = np.zeros(len(pairs))
        return CandidateScores(pairs, seg_scores, cls_scores, outputs.prob_map, scored)

    def decide_edges(self, scores: CandidateScores, thresholds: DecisionThresholds,
                     use_classifier: bool = True) -> set:
        """Apply the dual-threshold rule to cached candidate scores."""
        if use_classifier and self.classifier is None:
            raise ValueError("model has no classifier head; pass use_classifier=False")
        kept = set()
        for pair, seg, cls in zip(scores.pairs, scores.seg_scores, scores.cls_scores):
            if use_classifier:
                if decide(seg, cls, thresholds):
                    kept.add(pair)
            elif seg > thresholds.seg:
                kept.add(pair)
        return kept

    def run_pipeline(self, image: np.ndarray, corners: np.ndarray,
                     thresholds: DecisionThresholds,
                     settings: PipelineSettings = PipelineSettings(),
                     use_classifier: bool = True) -> PlanarGraph:
        """Image + corners -> reconstructed planar graph."""
        corners = np.asarray(corners, dtype=np.float64).reshape(-1, 2)
        scores = self.score_image(image, corners, settings, use_classifier)
        return PlanarGraph(corners, self.decide_edges(scores, thresholds, use_classifier))

    # -- checkpointing ---------------------------------------------------

    def save(self, path) -> None:
        cfg = self.segnet.config
        meta = {
            "version": CHECKPOINT_VERSION,
            "segnet": {
                "side": cfg.side,
                "levels": cfg.levels,
                "base_channels": cfg.base_channels,
                "swap_key": cfg.swap_key,
                "mode": cfg.mode,
                "group_divisor": cfg.group_divisor,
            },
            "has_classifier": self.classifier is not None,
        }
        arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
        net = self.segnet
        for tag, convs in (("enc", net.enc), ("dec", net.dec), ("side", net.side_heads)):
            for level, conv in enumerate(convs):
                arrays[f"{tag}_w{level}"] = conv.weights
                arrays[f"{tag}_b{level}"] = conv.bias
        if net.swapnn is not None:
            for level, p in enumerate(net.swapnn):
                arrays[f"swapnn_w{level}"] = p.weights
        arrays["fusion_w"] = self.fusion_weights
        if self.classifier is not None:
            arrays["cls_w"] = self.classifier.weights
            arrays["cls_b"] = np.array([self.classifier.bias])
        # plain np.savez stamps zip entries with the wall clock; fixing the
        # timestamp keeps checkpoint bytes reproducible run to run
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
                with zf.open(info, "w") as fh:
                    _npformat.write_array(fh, np.ascontiguousarray(arr))

    @classmethod
    def load(cls, path) -> "ReconModel":
        with np.load(path) as archive:
            try:
                meta = json.loads(bytes(archive["meta"]).decode())
            except KeyError:
                raise ValueError(f"{path}: not a model checkpoint (no meta entry)") from None
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(
                    f"{path}: unsupported checkpoint version {meta.get('version')}"
                )
            net = SegNet(SegNetConfig(**meta["segnet"]), seed=0)
            for tag, convs in (("enc", net.enc), ("dec", net.dec), ("side", net.side_heads)):
                for level, conv in enumerate(convs):
                    for attr, key in (("weights", f"{tag}_w{level}"),
                                      ("bias", f"{tag}_b{level}")):
                        stored = archive[key]
                        current = getattr(conv, attr)
                        if stored.shape != current.shape:
                            raise ValueError(
                                f"{path}: {key} has shape {stored.shape}, "
                                f"expected {current.shape}"
                            )
                        setattr(conv, attr, stored.astype(np.float64))
            if net.swapnn is not None:
                for level, p in enumerate(net.swapnn):
                    p.weights = archive[f"swapnn_w{level}"].astype(np.float64)
            fusion = archive["fusion_w"].astype(np.float64)
            classifier = None
            if meta["has_classifier"]:
                classifier = ClassifierParams(
                    archive["cls_w"].astype(np.float64),
                    float(archive["cls_b"][0]),
                )
        return cls(net, fusion, classifier)
