"""Attention kernels: per-frame self-attention, dense global self-attention,
and cross-attention from full-resolution tokens to a descriptor bundle.

All three share one pre-norm block shape: ``x + MHA(LN1(x))`` followed by
``y + MLP(LN2(y))`` with an MLP hidden width of 4C and scaled dot-product
scores (1 / sqrt(C / heads)).  The dense global kernel is the exact reference
the descriptor kernel approximates: with an uncompressed bundle and no
auxiliaries the two are the same computation.

Masks are additive: disallowed logits become -inf before the softmax.  A row
with no allowed key degenerates to a residual passthrough of the attention
sub-block and raises MaskedRowWarning; valid configurations never produce one
because a query's own frame is always visible to it.

No positional encoding is applied anywhere: frame identity flows only through
token content and masks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .compression import DescriptorBundle
from .kernels import layer_norm, matmul, mlp, rng, stable_softmax_rows
from .tokens import TokenTensor

MASK_MODES = ("none", "block_causal")
HISTOGRAM_BINS = 64


class MaskedRowWarning(RuntimeWarning):
    """A query row had every key masked out; residual passthrough applied."""


@dataclass(frozen=True)
class BlockWeights:
    """Projection, MLP, and layer-norm parameters of one attention block."""

    heads: int
    wq: np.ndarray = field(repr=False)
    wk: np.ndarray = field(repr=False)
    wv: np.ndarray = field(repr=False)
    wo: np.ndarray = field(repr=False)
    w1: np.ndarray = field(repr=False)
    b1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)
    ln1_gamma: np.ndarray = field(repr=False)
    ln1_beta: np.ndarray = field(repr=False)
    ln2_gamma: np.ndarray = field(repr=False)
    ln2_beta: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = self.wq.shape[0]
        if c % self.heads != 0:
            raise ValueError(f"channels {c} not divisible by heads {self.heads}")
        for name in ("wq", "wk", "wv", "wo"):
            m = getattr(self, name)
            if m.shape != (c, c):
                raise ValueError(f"{name} must be {c}x{c}, got {m.shape}")

    @property
    def channels(self) -> int:
        return self.wq.shape[0]


def init_block_weights(seed: int, channels: int, heads: int, dtype=np.float32) -> BlockWeights:
    """Seeded Gaussian weights at 1/sqrt(C) scale; norms start as identity maps."""
    gen = rng(seed)
    scale = 1.0 / np.sqrt(channels)

    def draw(*shape):
        return (gen.standard_normal(shape) * scale).astype(dtype)

    c = channels
    return BlockWeights(
        heads=heads,
        wq=draw(c, c), wk=draw(c, c), wv=draw(c, c), wo=draw(c, c),
        w1=draw(c, 4 * c), b1=np.zeros(4 * c, dtype=dtype),
        w2=draw(4 * c, c), b2=np.zeros(c, dtype=dtype),
        ln1_gamma=np.ones(c, dtype=dtype), ln1_beta=np.zeros(c, dtype=dtype),
        ln2_gamma=np.ones(c, dtype=dtype), ln2_beta=np.zeros(c, dtype=dtype))


@dataclass(frozen=True)
class AttentionMask:
    """Block-causal visibility over frames.

    ``cuts`` are the frame indices where a new block starts (strictly
    increasing, all > 0); frame f belongs to the block whose range contains
    it, and a query in frame f may attend only to keys whose provenance frame
    is <= the last frame of f's block.  The final block is unbounded, so one
    mask works for any sequence at least as long as its last cut.
    """

    mode: str = "none"
    cuts: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mode!r}; choose from {MASK_MODES}")
        cuts = tuple(int(c) for c in self.cuts)
        if any(c <= 0 for c in cuts) or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cuts must be strictly increasing and positive, got {cuts}")
        object.__setattr__(self, "cuts", cuts)

    @classmethod
    def none(cls) -> "AttentionMask":
        return cls("none")

    @classmethod
    def frame_causal(cls, frames: int) -> "AttentionMask":
        """Every frame is its own block."""
        return cls("block_causal", tuple(range(1, frames)))

    @classmethod
    def chunked(cls, chunk_size: int, frames: int) -> "AttentionMask":
        return cls("block_causal", tuple(range(chunk_size, frames, chunk_size)))

    def block_end(self, frames: np.ndarray) -> np.ndarray:
        """Last key frame visible to a query in each given frame."""
        cuts = np.asarray(self.cuts, dtype=np.int64)
        idx = np.searchsorted(cuts, np.asarray(frames, dtype=np.int64), side="right")
        ends = np.append(cuts - 1, np.iinfo(np.int64).max)
        return ends[idx]

    def bias(self, query_frames: np.ndarray, key_frames: np.ndarray) -> np.ndarray | None:
        """Additive (Q, K) mask: 0 where allowed, -inf where not."""
        if self.mode == "none":
            return None
        key_frames = np.asarray(key_frames, dtype=np.int64)
        if key_frames.size and key_frames.min() < 0:
            raise ValueError("mask boundaries inconsistent with provenance: "
                             "negative key frame index")
        allowed = key_frames[None, :] <= self.block_end(query_frames)[:, None]
        bias = np.zeros(allowed.shape, dtype=np.float64)
        bias[~allowed] = -np.inf
        return bias


def _head_slices(channels: int, heads: int):
    d = channels // heads
    return [(i * d, (i + 1) * d) for i in range(heads)], d


def _attention_block(x_q: np.ndarray, kv: np.ndarray, w: BlockWeights,
                     bias: np.ndarray | None) -> np.ndarray:
    """One full pre-norm block; queries from x_q, keys/values from kv."""
    q_in = layer_norm(x_q, w.ln1_gamma, w.ln1_beta)
    kv_in = q_in if kv is x_q else layer_norm(kv, w.ln1_gamma, w.ln1_beta)
    q = matmul(q_in, w.wq)
    k = matmul(kv_in, w.wk)
    v = matmul(kv_in, w.wv)

    if bias is not None:
        dead = ~np.any(np.isfinite(bias), axis=1)
        if dead.any():
            warnings.warn(f"{int(dead.sum())} fully masked query rows; "
                          "attention contributes nothing for them", MaskedRowWarning)

    slices, d = _head_slices(w.channels, w.heads)
    inv_sqrt_d = 1.0 / np.sqrt(d)
    ctx = np.empty((x_q.shape[0], w.channels), dtype=np.float64)
    for lo, hi in slices:
        scores = (q[:, lo:hi].astype(np.float64)
                  @ k[:, lo:hi].astype(np.float64).T) * inv_sqrt_d
        if bias is not None:
            scores = scores + bias
        probs = stable_softmax_rows(scores)
        ctx[:, lo:hi] = probs @ v[:, lo:hi].astype(np.float64)

    attn = matmul(ctx.astype(x_q.dtype), w.wo)
    y = x_q + attn
    return y + mlp(layer_norm(y, w.ln2_gamma, w.ln2_beta), w.w1, w.b1, w.w2, w.b2)


def attention_probabilities(x_q: np.ndarray, kv: np.ndarray, w: BlockWeights,
                            bias: np.ndarray | None = None) -> np.ndarray:
    """Post-softmax probabilities, shape (heads, queries, keys).

    Diagnostic path: materializes every head, so keep inputs desk-scale.
    """
    q_in = layer_norm(x_q, w.ln1_gamma, w.ln1_beta)
    kv_in = q_in if kv is x_q else layer_norm(kv, w.ln1_gamma, w.ln1_beta)
    q = matmul(q_in, w.wq)
    k = matmul(kv_in, w.wk)
    slices, d = _head_slices(w.channels, w.heads)
    out = np.empty((w.heads, x_q.shape[0], kv.shape[0]), dtype=np.float64)
    for h, (lo, hi) in enumerate(slices):
        scores = (q[:, lo:hi].astype(np.float64)
                  @ k[:, lo:hi].astype(np.float64).T) / np.sqrt(d)
        if bias is not None:
            scores = scores + bias
        out[h] = stable_softmax_rows(scores)
    return out


def frame_attention(t: TokenTensor, w: BlockWeights) -> TokenTensor:
    """Self-attention within each frame independently; frames never interact."""
    if w.channels != t.channels:
        raise ValueError(f"weight channels {w.channels} != token channels {t.channels}")
    out = np.empty_like(t.values)
    for f in range(t.frames):
        out[f] = _attention_block(t.values[f], t.values[f], w, None)
    return t.with_values(out)


def dense_global_attention(t: TokenTensor, w: BlockWeights,
                           mask: AttentionMask | None = None) -> TokenTensor:
    """Self-attention over the concatenated K = S * N token sequence.

    This is the exact reference that descriptor attention approximates.
    """
    if w.channels != t.channels:
        raise ValueError(f"weight channels {w.channels} != token channels {t.channels}")
    flat = t.flat()
    bias = None
    if mask is not None and mask.mode != "none":
        frames = t.token_frames()
        bias = mask.bias(frames, frames)
    out = _attention_block(flat, flat, w, bias)
    return t.with_values(out.reshape(t.values.shape))


def descriptor_attention(t: TokenTensor, bundle: DescriptorBundle, w: BlockWeights,
                         mask: AttentionMask | None = None) -> TokenTensor:
    """Cross-attention: every full-resolution token queries the descriptor set.

    Masks apply through descriptor provenance frames, so anchors copied from
    frame f are hidden from queries that may not see frame f yet.
    """
    if bundle.channels != t.channels:
        raise ValueError(f"bundle channels {bundle.channels} != token channels {t.channels}")
    if w.channels != t.channels:
        raise ValueError(f"weight channels {w.channels} != token channels {t.channels}")
    bias = None
    if mask is not None and mask.mode != "none":
        bias = mask.bias(t.token_frames(), bundle.frames)
    out = _attention_block(t.flat(), bundle.descriptors, w, bias)
    return t.with_values(out.reshape(t.values.shape))


def attention_score_histogram(t: TokenTensor, w: BlockWeights, mode: str
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of post-softmax attention probabilities.

    64 fixed-width bins on [0, 1], aggregated over heads and query rows.
    ``mode`` is "frame" (per-frame self-attention scores) or "global" (dense
    global scores).  Returns (counts, bin edges); counts sum to the number of
    probability entries.
    """
    if mode not in ("frame", "global"):
        raise ValueError(f"histogram mode must be 'frame' or 'global', got {mode!r}")
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    counts = np.zeros(HISTOGRAM_BINS, dtype=np.int64)
    if mode == "frame":
        for f in range(t.frames):
            probs = attention_probabilities(t.values[f], t.values[f], w)
            counts += np.histogram(probs, bins=edges)[0]
    else:
        flat = t.flat()
        probs = attention_probabilities(flat, flat, w)
        counts += np.histogram(probs, bins=edges)[0]
    return counts, edges
