"""U-shaped multi-scale segmentation backbone with channel swap after each
encoder block.

The encoder applies conv3x3 -> relu -> swap at every level and halves the
spatial side between levels with 2x2 max pooling.  The decoder mirrors it
with bilinear 2x upsampling, conv3x3, and additive skip connections from
the encoder.  Every decoder scale carries a 1x1 side head producing an
edge-probability logit map; the full-resolution head's sigmoid is the
probability map consumed by the edge scorer.

With the default configuration the decoder features have spatial sides
(64, 32, 16, 8) and channel counts (16, 32, 64, 128), so side * channels
is 1024 at every scale and along-edge feature vectors have constant
length across scales.

Training is deterministic given a seed: mini-batch Adam with a
multiplicative per-epoch learning-rate decay (or classic weight decay,
flag-switchable).  No normalization layers are used; probabilities are
clamped inside the loss instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam
from .swap import (
    SwapConfig,
    SwapNNParams,
    build_swap_permutation,
    swap_backward,
    swap_forward,
    swapnn_backward,
    swapnn_forward,
)
from .tensor import (
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    downsample2_backward,
    downsample2_forward,
    relu_backward,
    relu_forward,
    require_tensor4,
    sigmoid_backward,
    sigmoid_forward,
    upsample2_backward,
    upsample2_forward,
)

MODES = ("swap", "noswap", "swapnn")

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class SegNetConfig:
    """Architecture and swap-mode knobs of the backbone."""

    side: int = 64
    levels: int = 4
    base_channels: int = 16
    swap_key: int = 5
    mode: str = "swap"
    group_divisor: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.side % (2 ** (self.levels - 1)):
            raise ValueError(
                f"side {self.side} not divisible across {self.levels} levels"
            )

    @property
    def channels(self) -> tuple:
        return tuple(self.base_channels * 2 ** level for level in range(self.levels))

    @property
    def sides(self) -> tuple:
        return tuple(self.side // 2 ** level for level in range(self.levels))


@dataclass
class SideOutputs:
    """One forward pass: probability map, per-scale features, side logits."""

    prob_map: np.ndarray
    features: list
    logits: list


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 8
    decay: float = 1e-4
    decay_mode: str = "lr"  # "lr": per-epoch multiplicative; "weight": L2
    seed: int = 0
    log_every: int = 0
    progress: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.decay_mode not in ("lr", "weight"):
            raise ValueError(f"decay_mode must be 'lr' or 'weight', got {self.decay_mode!r}")


class SegNet:
    """Backbone parameters plus forward/backward/training machinery."""

    def __init__(self, config: SegNetConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        ch = config.channels
        levels = config.levels

        self.enc = [
            ConvParams.init(rng, 1 if level == 0 else ch[level - 1], ch[level], 3)
            for level in range(levels)
        ]
        # dec[levels-1] refines the deepest encoder output; dec[l] maps the
        # upsampled deeper feature down to this level's channel count
        self.dec = [
            ConvParams.init(rng, ch[level + 1] if level < levels - 1 else ch[level],
                            ch[level], 3)
            for level in range(levels)
        ]
        self.side_heads = [
            ConvParams.init(rng, ch[level], 1, 1) for level in range(levels)
        ]
        self.perms = [
            build_swap_permutation(SwapConfig(key=config.swap_key, channels=c))
            for c in ch
        ]
        if config.mode == "swapnn":
            self.swapnn = [
                SwapNNParams.init(c, max(c // config.group_divisor, 1)) for c in ch
            ]
        else:
            self.swapnn = None

    # -- parameter bookkeeping -------------------------------------------

    def parameter_arrays(self) -> list:
        """All trainable arrays in a fixed order (views, not copies)."""
        arrays = []
        for conv in self.enc + self.dec + self.side_heads:
            arrays.append(conv.weights)
            if conv.bias is not None:
                arrays.append(conv.bias)
        if self.swapnn is not None:
            for p in self.swapnn:
                arrays.append(p.weights)
        return arrays

    @property
    def parameter_count(self) -> int:
        return int(sum(a.size for a in self.parameter_arrays()))

    # -- forward / backward ----------------------------------------------

    def _apply_swap(self, x, level):
        mode = self.config.mode
        if mode == "noswap":
            return x
        if mode == "swap":
            return swap_forward(x, self.perms[level])
        return swapnn_forward(x, self.perms[level], self.swapnn[level])

    def _swap_grad(self, x, level, grad, grad_swapnn):
        mode = self.config.mode
        if mode == "noswap":
            return grad
        if mode == "swap":
            return swap_backward(grad, self.perms[level])
        gx, gw = swapnn_backward(x, self.perms[level], self.swapnn[level], grad)
        grad_swapnn[level] += gw
        return gx

    def forward(self, x: np.ndarray, _cache: dict | None = None) -> SideOutputs:
        """Run the backbone; input is (n, 1, side, side) grayscale in [0, 1]."""
        x = require_tensor4(x, "backbone input")
        cfg = self.config
        if x.shape[1] != 1 or x.shape[2] != cfg.side or x.shape[3] != cfg.side:
            raise ValueError(
                f"expected (n, 1, {cfg.side}, {cfg.side}) input, got {x.shape}"
            )
        levels = cfg.levels
        cache = _cache if _cache is not None else {}
        cache["enc_in"] = []
        cache["pre_relu_enc"] = []
        cache["relu_enc"] = []
        cache["enc_out"] = []
        cache["conv_cols"] = {}

        caching = _cache is not None

        def conv(tag, params, inp, padding=None):
            slot = {} if caching else None
            out = conv2d_forward(inp, params, padding=padding, cache=slot)
            if caching:
                cache["conv_cols"][tag] = slot
            return out

        cur = x
        for level in range(levels):
            cache["enc_in"].append(cur)
            pre = conv(("enc", level), self.enc[level], cur)
            act = relu_forward(pre)
            out = self._apply_swap(act, level)
            cache["pre_relu_enc"].append(pre)
            cache["relu_enc"].append(act)
            cache["enc_out"].append(out)
            if level < levels - 1:
                cur = downsample2_forward(out)

        deepest = levels - 1
        pre_deep = conv(("dec", deepest), self.dec[deepest], cache["enc_out"][deepest])
        decoded = [None] * levels
        decoded[deepest] = relu_forward(pre_deep)
        cache["dec_up"] = [None] * levels
        cache["dec_pre"] = [None] * levels
        cache["dec_pre"][deepest] = pre_deep
        for level in range(levels - 2, -1, -1):
            up = upsample2_forward(decoded[level + 1])
            pre = conv(("dec", level), self.dec[level], up) + cache["enc_out"][level]
            decoded[level] = relu_forward(pre)
            cache["dec_up"][level] = up
            cache["dec_pre"][level] = pre

        logits = [
            conv(("side", level), self.side_heads[level], decoded[level], padding=0)
            for level in range(levels)
        ]
        cache["decoded"] = decoded
        cache["logits"] = logits
        return SideOutputs(sigmoid_forward(logits[0]), decoded, logits)

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray):
        """Deep-supervision BCE loss and gradients for every parameter.

        The loss is the mean, over the decoder scales, of the per-pixel
        binary cross-entropy between the target mask and each side
        output's sigmoid upsampled to full resolution; the level-0 side
        output is the probability map itself.  Returns (loss, grads)
        with grads ordered like parameter_arrays().
        """
        target = require_tensor4(target, "target mask")
        bad = ~((target == 0.0) | (target == 1.0))
        if bad.any():
            raise ValueError("target mask must be binary (0/1 values only)")

        cache = {}
        self.forward(x, _cache=cache)
        cfg = self.config
        levels = cfg.levels
        n = x.shape[0]

        grads_enc = [
            (np.zeros_like(c.weights), np.zeros_like(c.bias)) for c in self.enc
        ]
        grads_dec = [
            (np.zeros_like(c.weights), np.zeros_like(c.bias)) for c in self.dec
        ]
        grads_side = [
            (np.zeros_like(c.weights), np.zeros_like(c.bias)) for c in self.side_heads
        ]
        grad_swapnn = (
            [np.zeros_like(p.weights) for p in self.swapnn]
            if self.swapnn is not None
            else None
        )

        total_loss = 0.0
        grad_decoded = [np.zeros_like(d) for d in cache["decoded"]]
        pixels = n * cfg.side * cfg.side
        for level in range(levels):
            prob = sigmoid_forward(cache["logits"][level])
            chain = [prob]
            for _ in range(level):
                chain.append(upsample2_forward(chain[-1]))
            full = chain[-1]
            clamped = np.clip(full, PROB_CLAMP, 1.0 - PROB_CLAMP)
            total_loss += float(
                -(target * np.log(clamped) + (1.0 - target) * np.log1p(-clamped)).sum()
            ) / pixels
            grad_full = (clamped - target) / (clamped * (1.0 - clamped)) / pixels
            grad_full = np.where((full > PROB_CLAMP) & (full < 1.0 - PROB_CLAMP),
                                 grad_full, 0.0)
            for step in range(level, 0, -1):
                grad_full = upsample2_backward(chain[step - 1], grad_full)
            grad_logits = sigmoid_backward(prob, grad_full)
            g_dec, gw, gb = conv2d_backward(
                cache["decoded"][level], self.side_heads[level], grad_logits,
                padding=0, cache=cache["conv_cols"][("side", level)],
            )
            grads_side[level][0][:] += gw
            grads_side[level][1][:] += gb
            grad_decoded[level] += g_dec
        total_loss /= levels
        for level in range(levels):
            grad_decoded[level] /= levels
        for pair in grads_side:
            pair[0][:] /= levels
            pair[1][:] /= levels

        if not np.isfinite(total_loss):
            raise RuntimeError(
                f"non-finite training loss {total_loss}; last logit range "
                f"[{cache['logits'][0].min():.3g}, {cache['logits'][0].max():.3g}]"
            )

        # decoder backward, shallow to deep; additive skips feed enc grads
        grad_enc_out = [np.zeros_like(e) for e in cache["enc_out"]]
        for level in range(levels - 1):
            g_pre = relu_backward(cache["dec_pre"][level], grad_decoded[level])
            grad_enc_out[level] += g_pre
            g_up, gw, gb = conv2d_backward(
                cache["dec_up"][level], self.dec[level], g_pre,
                cache=cache["conv_cols"][("dec", level)],
            )
            grads_dec[level][0][:] = gw
            grads_dec[level][1][:] = gb
            grad_decoded[level + 1] += upsample2_backward(cache["decoded"][level + 1], g_up)
        deepest = levels - 1
        g_pre = relu_backward(cache["dec_pre"][deepest], grad_decoded[deepest])
        g_in, gw, gb = conv2d_backward(
            cache["enc_out"][deepest], self.dec[deepest], g_pre,
            cache=cache["conv_cols"][("dec", deepest)],
        )
        grads_dec[deepest][0][:] = gw
        grads_dec[deepest][1][:] = gb
        grad_enc_out[deepest] += g_in

        # encoder backward, deep to shallow
        for level in range(levels - 1, -1, -1):
            g_act = self._swap_grad(
                cache["relu_enc"][level], level, grad_enc_out[level], grad_swapnn
            )
            g_pre = relu_backward(cache["pre_relu_enc"][level], g_act)
            g_in, gw, gb = conv2d_backward(
                cache["enc_in"][level], self.enc[level], g_pre,
                cache=cache["conv_cols"][("enc", level)],
            )
            grads_enc[level][0][:] = gw
            grads_enc[level][1][:] = gb
            if level > 0:
                grad_enc_out[level - 1] += downsample2_backward(
                    cache["enc_out"][level - 1], g_in
                )

        grads = []
        for pair in grads_enc + grads_dec + grads_side:
            grads.extend(pair)
        if grad_swapnn is not None:
            grads.extend(grad_swapnn)
        return total_loss, grads

    # -- training -----------------------------------------------------------

    def train(self, pairs: list, tcfg: TrainConfig) -> list:
        """Mini-batch Adam over (image, mask) pairs; returns per-epoch loss.

        Deterministic for a fixed TrainConfig.seed.  Raises on an empty
        dataset or a non-finite loss.
        """
        if not pairs:
            raise ValueError("training dataset is empty")
        rng = np.random.default_rng(tcfg.seed)
        params = self.parameter_arrays()
        weight_decay = tcfg.decay if tcfg.decay_mode == "weight" else 0.0
        opt = Adam([p.shape for p in params], lr=tcfg.lr, weight_decay=weight_decay)
        images = np.concatenate([img for img, _ in pairs])
        masks = np.concatenate([mask for _, mask in pairs])
        count = len(pairs)
        curve = []
        for epoch in range(tcfg.epochs):
            order = rng.permutation(count)
            epoch_loss = 0.0
            batches = 0
            for start in range(0, count, tcfg.batch_size):
                idx = order[start:start + tcfg.batch_size]
                loss, grads = self.loss_and_grads(images[idx], masks[idx])
                opt.step(params, grads)
                epoch_loss += loss
                batches += 1
            if tcfg.decay_mode == "lr":
                opt.lr *= 1.0 - tcfg.decay
            curve.append(epoch_loss / batches)
            if tcfg.log_every and (epoch + 1) % tcfg.log_every == 0:
                print(f"epoch {epoch + 1}/{tcfg.epochs}: loss {curve[-1]:.5f}")
            if tcfg.progress is not None:
                tcfg.progress(epoch, curve[-1])
        return curve


def seg_loss_value(outputs: SideOutputs, target: np.ndarray) -> float:
    """Deep-supervision BCE of an already-computed forward pass."""
    target = require_tensor4(target, "target mask")
    if not ((target == 0.0) | (target == 1.0)).all():
        raise ValueError("target mask must be binary (0/1 values only)")
    total = 0.0
    for level, logits in enumerate(outputs.logits):
        prob = sigmoid_forward(logits)
        for _ in range(level):
            prob = upsample2_forward(prob)
        clamped = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
        total += float(
            -(target * np.log(clamped) + (1.0 - target) * np.log1p(-clamped)).mean()
        )
    return total / len(outputs.logits)
