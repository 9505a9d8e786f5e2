"""Chunk-recursive inference: process a long sequence in consecutive chunks
while every chunk keeps a global receptive field through cached descriptors.

Each global block keeps its own memory of retained descriptors.  For chunk t
the keys and values are the concatenation of that memory with the chunk's own
bundle; queries are only the chunk's full-resolution tokens, so cached tokens
are never updated.  After the chunk, the memory grows by the chunk's
compressed descriptors from frames whose *global* index is a multiple of the
retain rate p (frame 0 of the stream is therefore always kept, regardless of
chunk size), plus, once, the verbatim first-frame tokens when auxiliaries and
first-frame persistence are enabled.  Camera/register and key-frame anchors
are chunk-local and are never retained.

Memory grows sublinearly: per layer, compressed tokens number exactly
ceil(frames_seen / p) * floor(H/r) * floor(W/r).  With p = 1 the retained key
set matches what a block-causal offline pass over the same chunk boundaries
would expose, which is what makes the offline stack an oracle for this module.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .aggregator import AggregatorConfig, LayerWeights, init_weights
from .attention import descriptor_attention, frame_attention
from .compression import (DescriptorBundle, DescriptorKind, build_bundle,
                          select_keyframes)
from .tokens import FrameLayout, TokenTensor

CACHE_CSV_COLUMNS = ("layer", "total_tokens", "compressed_tokens", "aux_tokens",
                     "bytes", "ratio_vs_full_token_cache")


@dataclass(frozen=True)
class StreamConfig:
    base: AggregatorConfig
    chunk_size: int = 10
    retain_rate: int = 5
    persist_first_frame: bool = True

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError(f"chunk size must be >= 1, got {self.chunk_size}")
        if self.retain_rate < 1:
            raise ValueError(f"retain rate must be >= 1, got {self.retain_rate}")
        if self.base.global_mode != "descriptor":
            raise ValueError("streaming runs the descriptor global mode only")
        if self.base.mask.mode != "none":
            raise ValueError("streaming enforces causality by construction; "
                             "configure the base without a mask")


@dataclass(frozen=True)
class MemoryCache:
    """Per-global-block retained descriptors plus the running frame counter."""

    layout: FrameLayout
    layers: tuple[DescriptorBundle, ...]
    frames_seen: int = 0
    first_frame_persisted: bool = False

    @classmethod
    def empty(cls, cfg: StreamConfig) -> "MemoryCache":
        base = cfg.base
        stores = tuple(DescriptorBundle.empty(base.channels, base.dtype)
                       for _ in range(base.layers))
        return cls(layout=base.layout, layers=stores)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def token_counts(self) -> list[tuple[int, int, int]]:
        """Per layer: (total, compressed, auxiliary) token counts."""
        out = []
        for store in self.layers:
            comp = int(np.count_nonzero(store.kinds == int(DescriptorKind.COMPRESSED)))
            out.append((store.count, comp, store.count - comp))
        return out


def _retained_subset(bundle: DescriptorBundle, retain_rate: int,
                     persist_first: bool) -> DescriptorBundle:
    keep = (bundle.kinds == int(DescriptorKind.COMPRESSED)) \
        & (bundle.frames % retain_rate == 0)
    if persist_first:
        keep = keep | (bundle.kinds == int(DescriptorKind.FIRST_FRAME_PATCH))
    subset = bundle.select(keep)
    order = np.argsort(subset.frames, kind="stable")
    return subset.select(order)


def step(chunk: TokenTensor, cache: MemoryCache, cfg: StreamConfig,
         weights: list[LayerWeights] | None = None
         ) -> tuple[TokenTensor, MemoryCache]:
    """Process one chunk against the cache; returns (chunk output, new cache).

    The cache is not mutated; the returned cache shares the retained arrays.
    """
    base = cfg.base
    if chunk.frames > cfg.chunk_size:
        raise ValueError(f"chunk has {chunk.frames} frames, limit is {cfg.chunk_size}")
    if chunk.layout != cache.layout or cache.depth != base.layers:
        raise ValueError("cache layout/depth inconsistent with the stream config")
    if weights is None:
        weights = init_weights(base)

    offset = cache.frames_seen
    first_chunk = offset == 0
    keyframes = None
    if base.include_aux:
        keyframes = select_keyframes(chunk, base.selector)
    persist_now = (cfg.persist_first_frame and base.include_aux
                   and first_chunk and not cache.first_frame_persisted)

    x = chunk
    new_stores = []
    for lw, store in zip(weights, cache.layers):
        x = frame_attention(x, lw.frame)
        bundle = build_bundle(x, base.method, base.selector, base.include_aux,
                              keyframes=keyframes,
                              include_first_frame=first_chunk,
                              frame_offset=offset)
        keys = store.concat(bundle)
        x = descriptor_attention(x, keys, lw.global_)
        new_stores.append(store.concat(
            _retained_subset(bundle, cfg.retain_rate, persist_now)))

    new_cache = MemoryCache(layout=cache.layout, layers=tuple(new_stores),
                            frames_seen=offset + chunk.frames,
                            first_frame_persisted=cache.first_frame_persisted or persist_now)
    return x, new_cache


def run_stream(t: TokenTensor, cfg: StreamConfig,
               weights: list[LayerWeights] | None = None, *,
               return_cache: bool = False):
    """Stream the whole sequence chunk by chunk; outputs keep frame order.

    A single chunk covering the full sequence reproduces the offline
    descriptor forward bit for bit.
    """
    if t.layout != cfg.base.layout:
        raise ValueError(f"token layout {t.layout} does not match config {cfg.base.layout}")
    if weights is None:
        weights = init_weights(cfg.base)
    cache = MemoryCache.empty(cfg)
    outputs = []
    c = cfg.chunk_size
    for start in range(0, t.frames, c):
        chunk = TokenTensor(t.layout, t.values[start:start + c])
        out, cache = step(chunk, cache, cfg, weights)
        outputs.append(out.values)
    result = TokenTensor(t.layout, np.concatenate(outputs, axis=0))
    if return_cache:
        return result, cache
    return result


@dataclass(frozen=True)
class LayerCacheStats:
    layer: int
    total_tokens: int
    compressed_tokens: int
    aux_tokens: int
    bytes: int
    ratio_vs_full: float


@dataclass(frozen=True)
class CacheReport:
    """Cache occupancy vs. the full-token baseline that caches all K tokens
    at every global block (K * L tokens overall)."""

    layers: tuple[LayerCacheStats, ...]
    frames_seen: int
    full_token_baseline: int
    total_tokens: int
    total_bytes: int
    ratio_vs_full: float

    def csv_rows(self) -> list[list]:
        rows = [list(CACHE_CSV_COLUMNS)]
        for s in self.layers:
            rows.append([s.layer, s.total_tokens, s.compressed_tokens,
                         s.aux_tokens, s.bytes, f"{s.ratio_vs_full:.8f}"])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf).writerows(self.csv_rows())
        return buf.getvalue()


def cache_report(cache: MemoryCache) -> CacheReport:
    """Summarize per-layer token counts, a byte estimate, and the reduction
    ratio against caching every full-resolution token at every layer."""
    n = cache.layout.tokens_per_frame
    k_total = cache.frames_seen * n
    width = cache.layers[0].descriptors.dtype.itemsize if cache.depth else 4
    channels = cache.layout.channels
    stats = []
    total = 0
    total_bytes = 0
    for i, (tok, comp, aux) in enumerate(cache.token_counts()):
        nbytes_ = tok * channels * width
        ratio = tok / k_total if k_total else 0.0
        stats.append(LayerCacheStats(i, tok, comp, aux, nbytes_, ratio))
        total += tok
        total_bytes += nbytes_
    baseline = k_total * cache.depth
    return CacheReport(layers=tuple(stats), frames_seen=cache.frames_seen,
                       full_token_baseline=baseline, total_tokens=total,
                       total_bytes=total_bytes,
                       ratio_vs_full=total / baseline if baseline else 0.0)
