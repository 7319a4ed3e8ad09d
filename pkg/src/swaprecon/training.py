"""Two-stage training: segmentation backbone first, then the classifier and
fusion weights on features from the frozen backbone."""
from __future__ import annotations

import numpy as np

from .classifier import train_classifier
from .data import AnnotationRecord, rasterize_edges
from .model import ReconModel
from .sampler import enumerate_candidates, extract_edge_features
from .segnet import SegNet, SegNetConfig, TrainConfig


def mask_for(record: AnnotationRecord, side: int = 64, dilation: int = 1) -> np.ndarray:
    """Ground-truth edge mask of one annotation as a (1, 1, side, side) tensor."""
    return rasterize_edges(record.graph(), side=side, dilation=dilation).reshape(
        1, 1, side, side
    )


def collect_edge_samples(segnet: SegNet, scenes: list):
    """Per-scale feature stacks and labels for every candidate corner pair.

    Label 1 marks pairs that are ground-truth edges.  Returns
    (features (n, levels, dim), labels (n,)).
    """
    stacks = []
    labels = []
    side = segnet.config.side
    for image, record in scenes:
        outputs = segnet.forward(image)
        feature_maps = [f[0] for f in outputs.features]
        truth = record.graph().edges
        for (i, j) in enumerate_candidates(record.corners):
            feature = extract_edge_features(
                feature_maps, record.corners[i], record.corners[j], frame_side=side
            )
            stacks.append(feature.stacked)
            labels.append(1.0 if (i, j) in truth else 0.0)
    return np.stack(stacks), np.array(labels)


def train_model(scenes: list, mode: str = "swap", seed: int = 0,
                epochs: int = 25, cls_epochs: int = 60, dilation: int = 1,
                with_classifier: bool = True, lr: float = 1e-3,
                batch_size: int = 8, decay: float = 1e-4,
                decay_mode: str = "lr", neg_ratio: float = 3.0,
                log_every: int = 0, segnet_config: SegNetConfig | None = None):
    """Train a full model on (image, annotation) scenes.

    Returns (ReconModel, backbone loss curve, classifier loss curve).
    The backbone trains on rasterized edge masks; the classifier then
    trains on candidate features from the frozen backbone.
    """
    if segnet_config is None:
        segnet_config = SegNetConfig(mode=mode)
    elif segnet_config.mode != mode:
        raise ValueError("segnet_config.mode disagrees with mode argument")
    net = SegNet(segnet_config, seed=seed)
    pairs = [
        (image, mask_for(record, side=segnet_config.side, dilation=dilation))
        for image, record in scenes
    ]
    seg_tcfg = TrainConfig(
        epochs=epochs, lr=lr, batch_size=batch_size, decay=decay,
        decay_mode=decay_mode, seed=seed, log_every=log_every,
    )
    seg_curve = net.train(pairs, seg_tcfg)

    if not with_classifier:
        return ReconModel(net), seg_curve, []

    features, labels = collect_edge_samples(net, scenes)
    cls_tcfg = TrainConfig(
        epochs=cls_epochs, lr=lr, batch_size=batch_size, decay=decay,
        decay_mode=decay_mode, seed=seed, log_every=log_every,
    )
    params, fusion, cls_curve = train_classifier(
        features, labels, cls_tcfg, neg_ratio=neg_ratio
    )
    return ReconModel(net, fusion, params), seg_curve, cls_curve
