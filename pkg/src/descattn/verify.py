"""Named runtime checks, one per library invariant.

Each check is a small self-contained function that raises AssertionError on
violation.  ``run_all`` executes every check and reports one PASS/FAIL line
per name; the CLI ``verify`` subcommand exits nonzero if anything fails.
The suite is intentionally desk-scale so a full pass stays well under the
two-minute budget on an ordinary machine.
"""

from __future__ import annotations

import numpy as np

from . import analysis, streaming
from .aggregator import AggregatorConfig, forward_offline, init_weights
from .attention import (AttentionMask, attention_probabilities,
                        dense_global_attention, descriptor_attention,
                        frame_attention, init_block_weights)
from .compression import (CompressionMethod, DescriptorBundle, KeyframeSelector,
                          build_bundle, compress_frame, lloyd)
from .kernels import matmul, resample_bilinear, rng, stable_softmax_rows
from .tokens import FrameLayout, TokenTensor, generate_synthetic

_PATCH_ONLY = FrameLayout(h=8, w=8, n_camera=0, n_register=0, channels=32)
_DESK = FrameLayout(h=8, w=8, n_camera=1, n_register=4, channels=32)


def _desc_cfg(layout=_DESK, seed=0, **kw) -> AggregatorConfig:
    kw.setdefault("layers", 2)
    kw.setdefault("method", CompressionMethod("bilinear", 2))
    kw.setdefault("selector", KeyframeSelector(interval=200))
    return AggregatorConfig(layout=layout, global_mode="descriptor", seed=seed, **kw)


def check_matmul_identity(seed: int) -> None:
    a = rng(seed).standard_normal((5, 5)).astype(np.float32)
    eye = np.eye(5, dtype=np.float32)
    assert np.array_equal(matmul(eye, a), a)
    assert np.array_equal(matmul(a, eye), a)


def check_softmax_rows_sum_to_one(seed: int) -> None:
    x = rng(seed).standard_normal((40, 17)).astype(np.float32) * 50
    p = stable_softmax_rows(x)
    sums = p.sum(axis=-1, dtype=np.float64)
    assert np.all(np.abs(sums - 1.0) <= 1e-6)
    shifted = stable_softmax_rows(x + 13.25)
    assert np.max(np.abs(shifted - p)) <= 1e-6


def check_bilinear_exact_on_affine(seed: int) -> None:
    gen = rng(seed)
    h, w = 9, 7
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    a, b, c0 = gen.standard_normal(3)
    grid = (a * yy + b * xx + c0)[:, :, None].astype(np.float64)
    out = resample_bilinear(grid, 3, 2)
    from .kernels import half_pixel_centers
    ys = half_pixel_centers(h, 3)
    xs = half_pixel_centers(w, 2)
    expect = a * ys[:, None] + b * xs[None, :] + c0
    assert np.max(np.abs(out[:, :, 0] - expect)) <= 1e-6


def check_kernels_pure(seed: int) -> None:
    x = rng(seed).standard_normal((6, 8)).astype(np.float32)
    assert np.array_equal(stable_softmax_rows(x), stable_softmax_rows(x))
    g = rng(seed + 1).standard_normal((6, 6, 3)).astype(np.float32)
    assert np.array_equal(resample_bilinear(g, 3, 3), resample_bilinear(g, 3, 3))


def check_k_definition(seed: int) -> None:
    t = generate_synthetic(5, _DESK, seed)
    assert t.total_tokens == t.frames * t.layout.tokens_per_frame
    assert t.flat().shape == (t.total_tokens, t.channels)


def check_flatten_roundtrip(seed: int) -> None:
    t = generate_synthetic(3, _DESK, seed)
    back = TokenTensor.from_flat(t.flat(), t.layout, t.frames)
    assert np.array_equal(back.values, t.values)


def check_matched_budget(seed: int) -> None:
    gen = rng(seed)
    grid = gen.standard_normal((8, 8, 16)).astype(np.float32)
    for kind in ("bilinear", "nearest", "avgpool", "topk_norm", "learned_conv"):
        tokens, coords = compress_frame(grid, CompressionMethod(kind, 4))
        assert tokens.shape == (4, 16), (kind, tokens.shape)
        assert coords.shape == (4, 2)


def check_lloyd_objective(seed: int) -> None:
    pts = rng(seed).standard_normal((40, 6))
    _, _, history = lloyd(pts, 5)
    diffs = np.diff(np.asarray(history))
    assert np.all(diffs <= 1e-9), history


def check_topk_order(seed: int) -> None:
    gen = rng(seed)
    grid = gen.standard_normal((4, 4, 8)).astype(np.float32)
    tokens, coords = compress_frame(grid, CompressionMethod("topk_norm", 2))
    flat_idx = coords[:, 0] * 4 + coords[:, 1]
    assert np.all(np.diff(flat_idx) > 0), "top-k output must keep row-major order"
    norms = np.linalg.norm(grid.reshape(-1, 8), axis=1)
    cutoff = np.sort(norms)[-4]
    assert np.all(np.linalg.norm(tokens, axis=1) >= cutoff - 1e-6)


def check_provenance_partition(seed: int) -> None:
    t = generate_synthetic(4, _DESK, seed)
    b = build_bundle(t, CompressionMethod("bilinear", 4), KeyframeSelector(interval=2), True)
    assert b.frames.shape[0] == b.count
    assert b.kinds.shape[0] == b.count
    assert b.coords.shape[0] == b.count


def check_oracle_equivalence(seed: int) -> None:
    for dtype, tol in ((np.float32, 1e-5), (np.float64, 1e-10)):
        t = generate_synthetic(4, _PATCH_ONLY, seed, dtype=dtype)
        w = init_block_weights(seed + 7, 32, 4, dtype)
        dense = dense_global_attention(t, w)
        bundle = build_bundle(t, CompressionMethod("bilinear", 1), include_aux=False)
        desc = descriptor_attention(t, bundle, w)
        assert np.max(np.abs(dense.values - desc.values)) <= tol


def check_key_duplication(seed: int) -> None:
    t = generate_synthetic(3, _DESK, seed)
    w = init_block_weights(seed + 1, 32, 4)
    bundle = build_bundle(t, CompressionMethod("bilinear", 2), KeyframeSelector(), True)
    doubled = bundle.concat(bundle)
    a = descriptor_attention(t, bundle, w)
    b = descriptor_attention(t, doubled, w)
    assert np.max(np.abs(a.values - b.values)) <= 1e-6


def check_masked_independence(seed: int) -> None:
    t = generate_synthetic(4, _DESK, seed)
    w = init_block_weights(seed + 2, 32, 4)
    mask = AttentionMask.frame_causal(t.frames)
    base = dense_global_attention(t, w, mask)
    bumped = t.values.copy()
    bumped[1:] += 3.0
    out = dense_global_attention(TokenTensor(t.layout, bumped), w, mask)
    assert np.max(np.abs(out.values[0] - base.values[0])) <= 1e-6


def check_probability_rows(seed: int) -> None:
    t = generate_synthetic(2, _DESK, seed)
    w = init_block_weights(seed + 3, 32, 4)
    flat = t.flat()
    probs = attention_probabilities(flat, flat, w)
    sums = probs.sum(axis=-1)
    assert np.max(np.abs(sums - 1.0)) <= 1e-6


def check_mode_equivalence_layers(seed: int) -> None:
    cfg = _desc_cfg(layout=_PATCH_ONLY, seed=seed, include_aux=False,
                    method=CompressionMethod("bilinear", 1))
    t = generate_synthetic(3, _PATCH_ONLY, seed)
    report = analysis.compare_modes(t, cfg)
    assert all(m <= 1e-5 for m in report.per_layer_max), report


def check_bundles_differ_across_layers(seed: int) -> None:
    cfg = _desc_cfg(seed=seed)
    t = generate_synthetic(3, _DESK, seed)
    weights = init_weights(cfg)
    x1 = frame_attention(t, weights[0].frame)
    b1 = build_bundle(x1, cfg.method, cfg.selector, True)
    x2 = frame_attention(descriptor_attention(x1, b1, weights[0].global_),
                         weights[1].frame)
    b2 = build_bundle(x2, cfg.method, cfg.selector, True)
    assert not np.array_equal(b1.descriptors, b2.descriptors)


def check_aggregator_determinism(seed: int) -> None:
    cfg = _desc_cfg(seed=seed)
    t = generate_synthetic(3, _DESK, seed)
    a = forward_offline(t, cfg)
    b = forward_offline(t, cfg)
    assert np.array_equal(a.values, b.values)


def check_streaming_causality(seed: int) -> None:
    cfg = streaming.StreamConfig(base=_desc_cfg(seed=seed), chunk_size=2, retain_rate=2)
    t = generate_synthetic(6, _DESK, seed)
    out = streaming.run_stream(t, cfg)
    bumped = t.values.copy()
    bumped[4:] -= 2.5
    out2 = streaming.run_stream(TokenTensor(t.layout, bumped), cfg)
    assert np.max(np.abs(out.values[:4] - out2.values[:4])) <= 1e-6


def check_memory_law(seed: int) -> None:
    cfg = streaming.StreamConfig(base=_desc_cfg(seed=seed, include_aux=False,
                                                method=CompressionMethod("bilinear", 4)),
                                 chunk_size=3, retain_rate=2)
    t = generate_synthetic(7, _DESK, seed)
    _, cache = streaming.run_stream(t, cfg, return_cache=True)
    per_frame = cfg.base.method.tokens_per_frame(_DESK)
    expect = ((t.frames - 1) // cfg.retain_rate + 1) * per_frame
    for total, comp, aux in cache.token_counts():
        assert comp == expect and aux == 0 and total == expect


def check_sublinear_growth(seed: int) -> None:
    cfg = streaming.StreamConfig(base=_desc_cfg(seed=seed), chunk_size=4, retain_rate=3)
    t = generate_synthetic(10, _DESK, seed)
    _, cache = streaming.run_stream(t, cfg, return_cache=True)
    per_frame = cfg.base.method.tokens_per_frame(_DESK)
    bound = (t.frames / cfg.retain_rate + 1) * per_frame + _DESK.tokens_per_frame
    for total, _, _ in cache.token_counts():
        assert total <= bound


def check_full_chunk_matches_offline(seed: int) -> None:
    base = _desc_cfg(seed=seed)
    t = generate_synthetic(5, _DESK, seed)
    cfg = streaming.StreamConfig(base=base, chunk_size=t.frames, retain_rate=1)
    streamed = streaming.run_stream(t, cfg)
    offline = forward_offline(t, base)
    assert np.array_equal(streamed.values, offline.values)


def check_core_ratio(seed: int) -> None:
    cfg = _desc_cfg(seed=seed, method=CompressionMethod("bilinear", 4))
    dense = analysis.flops_attention(cfg.with_mode("dense"), 6)
    desc = analysis.flops_attention(cfg, 6)
    assert dense.attention_core * desc.kd_tokens == desc.attention_core * desc.k_tokens


def check_memory_model_matches_live(seed: int) -> None:
    cfg = streaming.StreamConfig(base=_desc_cfg(seed=seed, include_aux=False,
                                                method=CompressionMethod("bilinear", 2)),
                                 chunk_size=5, retain_rate=5)
    t = generate_synthetic(20, _DESK, seed)
    _, cache = streaming.run_stream(t, cfg, return_cache=True)
    model = analysis.memory_model(cfg, t.frames)
    report = streaming.cache_report(cache)
    for layer in report.layers:
        assert layer.total_tokens == model.per_layer_cache_tokens
    assert report.total_tokens == model.cache_total_tokens


def check_flops_chunk_invariant(seed: int) -> None:
    cfg = _desc_cfg(seed=seed)
    a = analysis.flops_attention(cfg, 12)
    b = analysis.flops_attention(cfg, 12)  # chunking never enters the analytic model
    assert a.components == b.components and a.total == b.total


def check_bench_rows_reproducible(seed: int) -> None:
    from . import cli  # deferred: cli imports this module for `verify`
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as tmp:
        spec = cli.BenchSpec(runs=[cli.RunSpec(frames=2, seed=seed, repeats=1,
                                               layers=1, grid=(4, 4), channels=16,
                                               heads=2, ratio=2)],
                             out_dir=Path(tmp))
        rows = cli.sweep(spec)
        for row in rows:
            rerun = cli.run_from_row(row)
            assert rerun == row["checksum"], (row, rerun)


CHECKS = [
    ("kernels.matmul_identity", check_matmul_identity),
    ("kernels.softmax_rows_sum_to_one", check_softmax_rows_sum_to_one),
    ("kernels.bilinear_exact_on_affine_fields", check_bilinear_exact_on_affine),
    ("kernels.pure_determinism", check_kernels_pure),
    ("tokens.k_equals_frames_times_tokens_per_frame", check_k_definition),
    ("tokens.flatten_unflatten_roundtrip", check_flatten_roundtrip),
    ("compression.matched_budget_counts", check_matched_budget),
    ("compression.lloyd_objective_nonincreasing", check_lloyd_objective),
    ("compression.topk_row_major_stable", check_topk_order),
    ("compression.provenance_partition", check_provenance_partition),
    ("attention.oracle_equivalence", check_oracle_equivalence),
    ("attention.key_duplication_invariance", check_key_duplication),
    ("attention.masked_independence", check_masked_independence),
    ("attention.probability_rows_sum_to_one", check_probability_rows),
    ("aggregator.mode_equivalence_per_layer", check_mode_equivalence_layers),
    ("aggregator.bundles_differ_across_layers", check_bundles_differ_across_layers),
    ("aggregator.bitwise_determinism", check_aggregator_determinism),
    ("streaming.causality", check_streaming_causality),
    ("streaming.memory_law", check_memory_law),
    ("streaming.sublinear_growth", check_sublinear_growth),
    ("streaming.full_chunk_matches_offline", check_full_chunk_matches_offline),
    ("analysis.core_ratio_equals_k_over_kd", check_core_ratio),
    ("analysis.memory_model_matches_live_cache", check_memory_model_matches_live),
    ("analysis.flops_chunk_invariant", check_flops_chunk_invariant),
    ("bench.csv_rows_reproducible", check_bench_rows_reproducible),
]


def run_all(seed: int = 0, report=print) -> bool:
    """Run every named check; returns True only if all pass."""
    ok = True
    for name, fn in CHECKS:
        try:
            fn(seed)
        except Exception as exc:  # noqa: BLE001 - report and keep going
            ok = False
            report(f"FAIL {name}: {exc}")
        else:
            report(f"PASS {name}")
    return ok
