"""Alternating-attention stack: each layer runs a frame-attention block and
then a global block, either the dense reference or the descriptor variant.

Descriptor bundles are rebuilt from each global block's own input, so every
layer compresses the tokens it actually sees; key-frame indices, by contrast,
are selected once from the stack input and reused by all layers.  Weights are
seeded Gaussians (nothing here is trained): the stack exists to exercise
structural and numeric contracts, not to learn.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import (AttentionMask, BlockWeights, dense_global_attention,
                        descriptor_attention, frame_attention, init_block_weights)
from .compression import CompressionMethod, KeyframeSelector, build_bundle, select_keyframes
from .kernels import matmul, rng
from .tokens import FrameLayout, TokenTensor

GLOBAL_MODES = ("dense", "descriptor")


@dataclass(frozen=True)
class AggregatorConfig:
    layout: FrameLayout = FrameLayout()
    layers: int = 4
    heads: int = 4
    global_mode: str = "descriptor"
    method: CompressionMethod = CompressionMethod()
    include_aux: bool = True
    selector: KeyframeSelector = KeyframeSelector()
    mask: AttentionMask = AttentionMask.none()
    seed: int = 0
    dtype: type = np.float32

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layer count must be >= 1, got {self.layers}")
        if self.global_mode not in GLOBAL_MODES:
            raise ValueError(f"global_mode must be one of {GLOBAL_MODES}, "
                             f"got {self.global_mode!r}")
        if self.layout.channels % self.heads != 0:
            raise ValueError(f"channels {self.layout.channels} not divisible "
                             f"by heads {self.heads}")
        if self.method.ratio > min(self.layout.h, self.layout.w):
            raise ValueError(f"compression ratio {self.method.ratio} exceeds "
                             f"grid side min({self.layout.h}, {self.layout.w})")

    @property
    def channels(self) -> int:
        return self.layout.channels

    def with_mode(self, global_mode: str) -> "AggregatorConfig":
        return replace(self, global_mode=global_mode)


@dataclass(frozen=True)
class LayerWeights:
    frame: BlockWeights
    global_: BlockWeights


def init_weights(cfg: AggregatorConfig) -> list[LayerWeights]:
    """Per-layer weights, two blocks each, derived deterministically from the seed.

    Both global modes consume the same global-block weights, which is what
    makes the dense reference a valid oracle for the descriptor variant.
    """
    seeds = rng(cfg.seed).integers(0, 2 ** 63 - 1, size=2 * cfg.layers)
    out = []
    for layer in range(cfg.layers):
        out.append(LayerWeights(
            frame=init_block_weights(int(seeds[2 * layer]), cfg.channels,
                                     cfg.heads, cfg.dtype),
            global_=init_block_weights(int(seeds[2 * layer + 1]), cfg.channels,
                                       cfg.heads, cfg.dtype)))
    return out


def forward_offline(t: TokenTensor, cfg: AggregatorConfig,
                    weights: list[LayerWeights] | None = None,
                    layer_outputs: list[TokenTensor] | None = None) -> TokenTensor:
    """Single-pass forward over the whole sequence.

    Deterministic per (t, cfg); pass ``layer_outputs`` to capture the tokens
    after every layer (used for per-layer error reporting).
    """
    if t.layout != cfg.layout:
        raise ValueError(f"token layout {t.layout} does not match config {cfg.layout}")
    if weights is None:
        weights = init_weights(cfg)
    keyframes = None
    if cfg.global_mode == "descriptor" and cfg.include_aux:
        keyframes = select_keyframes(t, cfg.selector)

    x = t
    for lw in weights:
        x = frame_attention(x, lw.frame)
        if cfg.global_mode == "dense":
            x = dense_global_attention(x, lw.global_, cfg.mask)
        else:
            bundle = build_bundle(x, cfg.method, cfg.selector, cfg.include_aux,
                                  keyframes=keyframes)
            x = descriptor_attention(x, bundle, lw.global_, cfg.mask)
        if layer_outputs is not None:
            layer_outputs.append(x)
    return x


@dataclass(frozen=True)
class StubHeads:
    """Shape-level stand-ins for the downstream prediction heads.

    One linear map reads the camera token into a fixed-width camera vector,
    another maps every patch token to a (value, uncertainty) pair.  Both are
    plain affine maps, so doubling the input doubles (output - bias).
    """

    w_camera: np.ndarray = field(repr=False)
    b_camera: np.ndarray = field(repr=False)
    w_map: np.ndarray = field(repr=False)
    b_map: np.ndarray = field(repr=False)

    @property
    def camera_dim(self) -> int:
        return self.w_camera.shape[1]


def init_stub_heads(layout: FrameLayout, seed: int, camera_dim: int = 9,
                    dtype=np.float32) -> StubHeads:
    gen = rng(seed)
    c = layout.channels
    scale = 1.0 / np.sqrt(c)
    return StubHeads(
        w_camera=(gen.standard_normal((c, camera_dim)) * scale).astype(dtype),
        b_camera=gen.standard_normal(camera_dim).astype(dtype),
        w_map=(gen.standard_normal((c, 2)) * scale).astype(dtype),
        b_map=gen.standard_normal(2).astype(dtype))


def run_heads(t_out: TokenTensor, heads: StubHeads) -> tuple[np.ndarray, np.ndarray]:
    """Apply the stub heads; returns (S, camera_dim) vectors and (S, H, W, 2) maps."""
    lay = t_out.layout
    if lay.n_camera < 1:
        raise ValueError("camera head needs at least one camera token per frame")
    cam_tokens = t_out.values[:, 0, :]
    cameras = matmul(cam_tokens, heads.w_camera) + heads.b_camera
    patches = t_out.values[:, lay.n_special:, :].reshape(-1, lay.channels)
    maps = (matmul(patches, heads.w_map) + heads.b_map).reshape(
        t_out.frames, lay.h, lay.w, 2)
    return cameras, maps
