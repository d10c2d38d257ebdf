"""Network assembly: dilated-convolution cells, pooled blocks and the dense head.

A cell runs four 3x3x3 convolutions with time dilations 1, 2, 4 and 8 over the
same input, concatenates them along channels and applies one ReLU. A block
stacks ``cells_per_block`` cells and finishes with a 1x2x2 spatial max pool.
The head flattens each frame's features row-major [H,W,C], applies a shared
Dense(D)+ReLU and Dense(2), and emits per-frame softmax rows
[P(no boundary), P(boundary)].

Weights live in a flat name->array mapping; see :func:`parameter_shapes` for
the canonical name set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .ops import ConvKernel

BRANCH_DILATIONS = (1, 2, 4, 8)

WeightStore = dict[str, np.ndarray]


def _halved(extent: int, times: int) -> int:
    for _ in range(times):
        extent //= 2
    return extent


@dataclass(frozen=True)
class ModelConfig:
    """Meta-parameters of the detector.

    cells_per_block and num_blocks set the depth, base_filters the per-branch
    channel count of block 1 (doubled each block), dense_units the head width,
    window the number of frames per forward pass.
    """

    cells_per_block: int = 2
    num_blocks: int = 3
    base_filters: int = 16
    dense_units: int = 256
    window: int = 100
    width: int = 48
    height: int = 27
    in_channels: int = 3

    def __post_init__(self):
        for field in (
            "cells_per_block",
            "num_blocks",
            "base_filters",
            "dense_units",
            "window",
            "width",
            "height",
            "in_channels",
        ):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1, got {getattr(self, field)}")
        if min(self.pooled_height(), self.pooled_width()) < 1:
            raise ValueError(
                f"frames {self.width}x{self.height} cannot be pooled "
                f"{self.num_blocks} times"
            )

    def branch_channels(self, block: int) -> int:
        """Per-branch output channels of cells in 1-based ``block``."""
        return 2 ** (block - 1) * self.base_filters

    def cell_channels(self, block: int) -> int:
        """Concatenated output channels of a cell in ``block`` (4 branches)."""
        return 4 * self.branch_channels(block)

    def cell_in_channels(self, block: int, cell: int) -> int:
        if cell > 1:
            return self.cell_channels(block)
        return self.in_channels if block == 1 else self.cell_channels(block - 1)

    def pooled_height(self, blocks: int | None = None) -> int:
        return _halved(self.height, self.num_blocks if blocks is None else blocks)

    def pooled_width(self, blocks: int | None = None) -> int:
        return _halved(self.width, self.num_blocks if blocks is None else blocks)

    def flattened_features(self) -> int:
        """Per-frame feature width entering the dense head."""
        return self.pooled_height() * self.pooled_width() * self.cell_channels(self.num_blocks)


#: Grid-search winner; window/width/height are the training defaults.
BEST_CONFIG = ModelConfig()


def conv_param_names(block: int, cell: int, dilation: int) -> tuple[str, str]:
    base = f"block{block}/cell{cell}/branch_d{dilation}"
    return f"{base}/weights", f"{base}/bias"


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter name -> shape mapping implied by ``config``.

    Order is depth-first: blocks outermost, then cells, then branches in dilation
    order 1,2,4,8, then the two head layers. Serialization relies on it.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    for block in range(1, config.num_blocks + 1):
        out_ch = config.branch_channels(block)
        for cell in range(1, config.cells_per_block + 1):
            in_ch = config.cell_in_channels(block, cell)
            for dilation in BRANCH_DILATIONS:
                w_name, b_name = conv_param_names(block, cell, dilation)
                shapes[w_name] = (3, 3, 3, in_ch, out_ch)
                shapes[b_name] = (out_ch,)
    flat = config.flattened_features()
    shapes["head/dense1/weights"] = (flat, config.dense_units)
    shapes["head/dense1/bias"] = (config.dense_units,)
    shapes["head/dense2/weights"] = (config.dense_units, 2)
    shapes["head/dense2/bias"] = (2,)
    return shapes


def param_count(config: ModelConfig) -> int:
    """Total trainable scalars, biases included."""
    return sum(int(np.prod(shape)) for shape in parameter_shapes(config).values())


def receptive_field_temporal(config: ModelConfig) -> int:
    """Frames of input that can influence one output frame.

    Each cell's widest branch (dilation 8) reaches 8 frames to each side, so
    every cell adds 16 frames; pooling is spatial only.
    """
    return 1 + 16 * config.cells_per_block * config.num_blocks


def init_weights(config: ModelConfig, seed: int) -> WeightStore:
    """He-normal conv/dense weights (std = sqrt(2/fan_in)), zero biases.

    Deterministic for a fixed seed; tensors are float32.
    """
    rng = np.random.default_rng(seed)
    store: WeightStore = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith("/bias"):
            store[name] = np.zeros(shape, dtype=np.float32)
            continue
        if len(shape) == 5:  # conv: fan_in = 27 * Cin
            fan_in = 27 * shape[3]
        else:  # dense: fan_in = K
            fan_in = shape[0]
        std = np.sqrt(2.0 / fan_in)
        store[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
    return store


def store_param_total(store: WeightStore) -> int:
    return sum(int(a.size) for a in store.values())


def normalize_frames(frames: np.ndarray) -> np.ndarray:
    """Map raw 8-bit RGB to float32 in [0,1]."""
    if frames.dtype == np.uint8:
        return frames.astype(np.float32) / np.float32(255.0)
    return frames


def cell_kernels(
    store: WeightStore, block: int, cell: int, config: ModelConfig
) -> list[ConvKernel]:
    """The four branch kernels of one cell, in dilation order 1,2,4,8."""
    kernels = []
    for dilation in BRANCH_DILATIONS:
        w_name, b_name = conv_param_names(block, cell, dilation)
        if w_name not in store or b_name not in store:
            raise ValueError(f"weight store is missing branch parameters {w_name!r}")
        kernels.append(ConvKernel(store[w_name], store[b_name], dilation))
    _ = config  # store layout already encodes the config
    return kernels


def ddcnn_cell_forward(x: np.ndarray, kernels: list[ConvKernel], block: int) -> np.ndarray:
    """One cell: four dilated convolutions, channel concat, then ReLU."""
    dilations = tuple(k.temporal_dilation for k in kernels)
    if dilations != BRANCH_DILATIONS:
        raise ValueError(f"cell needs branch dilations {BRANCH_DILATIONS}, got {dilations}")
    _ = block
    branches = [ops.conv3d_forward(x, k) for k in kernels]
    return ops.relu(np.concatenate(branches, axis=3))


def sddcnn_block_forward(
    x: np.ndarray, cells: list[list[ConvKernel]], block: int
) -> np.ndarray:
    """S cells applied sequentially, then the 1x2x2 max pool."""
    for kernels in cells:
        x = ddcnn_cell_forward(x, kernels, block)
    return ops.maxpool3d_forward(x)


@dataclass
class ForwardCache:
    """Activations retained by transnet_forward for the backward pass."""

    config: ModelConfig
    store: WeightStore
    cell_inputs: dict[tuple[int, int], np.ndarray]
    cell_outputs: dict[tuple[int, int], np.ndarray]
    features: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def transnet_forward(
    config: ModelConfig, store: WeightStore, frames: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Full forward pass over one window of frames.

    ``frames`` is [window, height, width, in_channels]; raw uint8 input is
    scaled to [0,1]. Returns per-frame probability rows [window, 2] plus the
    cache needed by :func:`transnet_backward`.
    """
    expected = (config.window, config.height, config.width, config.in_channels)
    if frames.shape != expected:
        raise ValueError(
            f"frame tensor shape {frames.shape} does not match configured {expected}; "
            "long videos go through detect.predict_video"
        )
    x = normalize_frames(frames)
    cell_inputs: dict[tuple[int, int], np.ndarray] = {}
    cell_outputs: dict[tuple[int, int], np.ndarray] = {}
    for block in range(1, config.num_blocks + 1):
        for cell in range(1, config.cells_per_block + 1):
            kernels = cell_kernels(store, block, cell, config)
            cell_inputs[(block, cell)] = x
            x = ddcnn_cell_forward(x, kernels, block)
            cell_outputs[(block, cell)] = x
        x = ops.maxpool3d_forward(x)
    features = x.reshape(config.window, -1)
    hidden = ops.relu(
        ops.dense_forward(features, store["head/dense1/weights"], store["head/dense1/bias"])
    )
    logits = ops.dense_forward(hidden, store["head/dense2/weights"], store["head/dense2/bias"])
    probs = ops.softmax_rows(logits)
    cache = ForwardCache(
        config=config,
        store=store,
        cell_inputs=cell_inputs,
        cell_outputs=cell_outputs,
        features=features,
        hidden=hidden,
        logits=logits,
        probs=probs,
    )
    return probs, cache


def transnet_backward(
    cache: ForwardCache,
    labels: np.ndarray | None = None,
    grad_probs: np.ndarray | None = None,
) -> WeightStore:
    """Gradients of all parameters from a cached forward pass.

    Exactly one of ``labels`` (boolean per frame; drives the cross-entropy
    gradient) or ``grad_probs`` (upstream gradient on the probability rows)
    must be given. The result has the same key set and shapes as the weights.
    """
    if (labels is None) == (grad_probs is None):
        raise ValueError("pass exactly one of labels or grad_probs")
    config, store = cache.config, cache.store
    if labels is not None:
        _, grad_logits = ops.cross_entropy_from_logits(cache.logits, labels)
    else:
        if grad_probs.shape != cache.probs.shape:
            raise ValueError(
                f"grad_probs shape {grad_probs.shape} does not match probs {cache.probs.shape}"
            )
        grad_logits = ops.softmax_rows_backward(cache.probs, grad_probs)

    grads: WeightStore = {}
    grad_hidden, grads["head/dense2/weights"], grads["head/dense2/bias"] = ops.dense_backward(
        cache.hidden, store["head/dense2/weights"], grad_logits
    )
    grad_hidden = ops.relu_backward(cache.hidden, grad_hidden)
    grad_feat, grads["head/dense1/weights"], grads["head/dense1/bias"] = ops.dense_backward(
        cache.features, store["head/dense1/weights"], grad_hidden
    )
    ch = config.cell_channels(config.num_blocks)
    g = grad_feat.reshape(
        config.window, config.pooled_height(), config.pooled_width(), ch
    )
    for block in range(config.num_blocks, 0, -1):
        g = ops.maxpool3d_backward(cache.cell_outputs[(block, config.cells_per_block)], g)
        for cell in range(config.cells_per_block, 0, -1):
            out = cache.cell_outputs[(block, cell)]
            g = ops.relu_backward(out, g)
            x_in = cache.cell_inputs[(block, cell)]
            grad_x = None
            width = config.branch_channels(block)
            for i, dilation in enumerate(BRANCH_DILATIONS):
                w_name, b_name = conv_param_names(block, cell, dilation)
                kernel = ConvKernel(store[w_name], store[b_name], dilation)
                g_branch = g[..., i * width : (i + 1) * width]
                gx, grads[w_name], grads[b_name] = ops.conv3d_backward(x_in, kernel, g_branch)
                grad_x = gx if grad_x is None else grad_x + gx
            g = grad_x
    return grads


def layer_output_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Layer-by-layer output shapes, for introspection output."""
    rows: list[tuple[str, tuple[int, ...]]] = [
        ("input", (config.window, config.height, config.width, config.in_channels))
    ]
    h, w = config.height, config.width
    for block in range(1, config.num_blocks + 1):
        ch = config.cell_channels(block)
        for cell in range(1, config.cells_per_block + 1):
            rows.append((f"block{block}/cell{cell}", (config.window, h, w, ch)))
        h, w = h // 2, w // 2
        rows.append((f"block{block}/pool", (config.window, h, w, ch)))
    rows.append(("flatten", (config.window, config.flattened_features())))
    rows.append(("head/dense1", (config.window, config.dense_units)))
    rows.append(("head/dense2", (config.window, 2)))
    rows.append(("softmax", (config.window, 2)))
    return rows


def with_window(config: ModelConfig, window: int) -> ModelConfig:
    """Same architecture applied to a different window length."""
    return replace(config, window=window)
