"""Channel-swap operators: parameter-free XOR exchange and its grouped variant.

The swap operation pairs channels in the upper half of the channel range by
XOR-ing their indices with a small integer key, then exchanges each pair.
It carries zero trainable parameters.  The grouped variant ("swapnn") scales
every channel by one scalar shared across its group, adding ceil(c/G)
parameters.  Both have exact analytic backward passes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import ConvParams, conv2d_forward, require_tensor4


def xor_partner(index: int, key: int) -> int:
    """Exchange partner of a channel index under a given XOR key."""
    if index < 0 or key < 0:
        raise ValueError("channel index and key must be non-negative")
    return index ^ key


@dataclass(frozen=True)
class SwapConfig:
    """Channel count and XOR key defining one swap permutation."""

    key: int
    channels: int

    def __post_init__(self):
        if self.channels < 2:
            raise ValueError(f"need at least 2 channels, got {self.channels}")
        if self.key < 0:
            raise ValueError(f"XOR key must be non-negative, got {self.key}")


@dataclass(frozen=True)
class SwapPermutation:
    """An involutive channel permutation fixing the lower half of the range.

    perm[i] == i for every i < floor(c/2).  In the upper half, even indices
    are paired with their XOR partner when that partner also lies in the
    upper half; everything left unpaired maps to itself.  Degenerate keys
    (e.g. 0) therefore yield the identity.
    """

    perm: np.ndarray
    parameter_count: int = field(default=0, init=False)

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        object.__setattr__(self, "perm", perm)
        c = len(perm)
        if sorted(perm.tolist()) != list(range(c)):
            raise ValueError("perm is not a bijection on the channel range")
        if not np.array_equal(perm[perm], np.arange(c)):
            raise ValueError("perm is not an involution")

    def __len__(self) -> int:
        return len(self.perm)

    def to_json(self) -> str:
        return json.dumps(self.perm.tolist())


def build_swap_permutation(cfg: SwapConfig) -> SwapPermutation:
    """Construct the swap permutation for a channel count and XOR key."""
    c, k = cfg.channels, cfg.key
    half = c // 2
    perm = np.arange(c, dtype=np.intp)
    paired = np.zeros(c, dtype=bool)
    for i in range(half, c):
        if i % 2 or paired[i]:
            continue
        j = i ^ k
        if j != i and half <= j < c and not paired[j]:
            perm[i], perm[j] = j, i
            paired[i] = paired[j] = True
    return SwapPermutation(perm)


def swap_forward(x: np.ndarray, perm: SwapPermutation) -> np.ndarray:
    """Permute channels: output channel i is input channel perm[i]."""
    x = require_tensor4(x, "swap input")
    if x.shape[1] != len(perm):
        raise ValueError(f"swap expects {len(perm)} channels, got {x.shape[1]}")
    return x[:, perm.perm]


def swap_backward(grad_out: np.ndarray, perm: SwapPermutation) -> np.ndarray:
    """Backward of a channel permutation.

    The Jacobian of a permutation is the inverse permutation, and a swap
    permutation is its own inverse, so this is swap_forward again.
    """
    return swap_forward(grad_out, perm)


@dataclass
class SwapNNParams:
    """Per-group scalar weights for the grouped swap variant.

    Channel i belongs to group i // group_size; each group shares one
    trainable scalar, so the parameter count is ceil(c / group_size).
    """

    group_size: int
    weights: np.ndarray

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError(f"group size must be >= 1, got {self.group_size}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("group weights must be a flat vector")

    @property
    def parameter_count(self) -> int:
        return self.weights.size

    @classmethod
    def init(cls, channels: int, group_size: int | None = None) -> "SwapNNParams":
        """Unit-weight init; default group size c/4 (minimum 1)."""
        if group_size is None:
            group_size = max(channels // 4, 1)
        n_groups = -(-channels // group_size)
        return cls(group_size, np.ones(n_groups))

    def group_of(self, channel: int) -> int:
        return channel // self.group_size

    def check_cover(self, channels: int) -> None:
        if self.group_of(channels - 1) >= self.weights.size:
            raise ValueError(
                f"{self.weights.size} group weights of size {self.group_size} "
                f"do not cover {channels} channels"
            )

    def channel_weights(self, channels: int) -> np.ndarray:
        """Per-channel scale vector expanded from the group scalars."""
        self.check_cover(channels)
        groups = np.arange(channels) // self.group_size
        return self.weights[groups]


def swapnn_forward(x: np.ndarray, perm: SwapPermutation, p: SwapNNParams) -> np.ndarray:
    """Grouped swap: output channel i = input channel perm[i], scaled by its
    group weight.  Unswapped (lower-half) channels are scaled too."""
    x = require_tensor4(x, "swapnn input")
    c = x.shape[1]
    if c != len(perm):
        raise ValueError(f"swapnn expects {len(perm)} channels, got {c}")
    scale = p.channel_weights(c)
    return x[:, perm.perm] * scale[None, :, None, None]


def swapnn_backward(x: np.ndarray, perm: SwapPermutation, p: SwapNNParams,
                    grad_out: np.ndarray):
    """Gradients of swapnn_forward w.r.t. the input and the group weights."""
    x = require_tensor4(x, "swapnn input")
    grad_out = require_tensor4(grad_out, "swapnn grad_out")
    if grad_out.shape != x.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != input {x.shape}")
    c = x.shape[1]
    scale = p.channel_weights(c)

    scaled = grad_out * scale[None, :, None, None]
    grad_x = np.zeros_like(x)
    grad_x[:, perm.perm] = scaled

    per_channel = (x[:, perm.perm] * grad_out).sum(axis=(0, 2, 3))
    groups = np.arange(c) // p.group_size
    grad_w = np.zeros_like(p.weights)
    np.add.at(grad_w, groups, per_channel)
    return grad_x, grad_w


def swap_block(x: np.ndarray, perm: SwapPermutation, mix: ConvParams,
               nn_params: SwapNNParams | None = None) -> np.ndarray:
    """Swap (or grouped swap) followed by a 1x1 channel-mixing convolution.

    In plain swap mode the 1x1 conv preserves the channel count; in the
    grouped mode it conventionally halves it (the caller sets mix.c_out).
    """
    if mix.kh != 1 or mix.kw != 1:
        raise ValueError(f"mixing conv must be 1x1, got {mix.kh}x{mix.kw}")
    if mix.c_in != x.shape[1]:
        raise ValueError(f"mixing conv expects {mix.c_in} channels, got {x.shape[1]}")
    if nn_params is None:
        swapped = swap_forward(x, perm)
    else:
        swapped = swapnn_forward(x, perm, nn_params)
    return conv2d_forward(swapped, mix, padding=0)
