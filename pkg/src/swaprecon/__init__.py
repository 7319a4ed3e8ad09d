"""Building planar-graph reconstruction with channel-swap convolution
surrogates: a deterministic numpy implementation with a CLI."""

from .classifier import ClassifierParams, DecisionThresholds, bce_loss, classify, decide
from .data import AnnotationRecord, SyntheticConfig, generate_synthetic_scene, rasterize_edges
from .model import PipelineSettings, ReconModel
from .sampler import (
    EdgeFeature,
    PlanarGraph,
    ScoredEdgeSet,
    bilinear_sample,
    edge_points,
    enumerate_candidates,
    expand_scores,
    extract_edge_features,
    fuse_features,
    score_edge,
    top_k,
)
from .segnet import SegNet, SegNetConfig, SideOutputs, TrainConfig
from .swap import (
    SwapConfig,
    SwapNNParams,
    SwapPermutation,
    build_swap_permutation,
    swap_block,
    swap_forward,
    swapnn_forward,
    xor_partner,
)
from .tensor import ConvParams, param_count
from .training import train_model

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "ClassifierParams",
    "ConvParams",
    "DecisionThresholds",
    "EdgeFeature",
    "PipelineSettings",
    "PlanarGraph",
    "ReconModel",
    "ScoredEdgeSet",
    "SegNet",
    "SegNetConfig",
    "SideOutputs",
    "SwapConfig",
    "SwapNNParams",
    "SwapPermutation",
    "SyntheticConfig",
    "TrainConfig",
    "bce_loss",
    "bilinear_sample",
    "build_swap_permutation",
    "classify",
    "decide",
    "edge_points",
    "enumerate_candidates",
    "expand_scores",
    "extract_edge_features",
    "fuse_features",
    "generate_synthetic_scene",
    "param_count",
    "rasterize_edges",
    "score_edge",
    "swap_block",
    "swap_forward",
    "swapnn_forward",
    "top_k",
    "train_model",
    "xor_partner",
]
