"""Benchmark and verification command line.

Subcommands: ``bench`` (timed runs over dense / descriptor / streaming modes,
CSV + optional markdown), ``verify`` (named invariant suite, nonzero exit on
failure), ``flops`` (analytic cost report), ``stream`` (cache occupancy
report), ``histogram`` (attention-score histograms).

Exit codes: 0 success, 2 usage error, 3 verification failure, 4 I/O error.

Flags may also come from a flat ``key=value`` config file (``--config``);
explicit command-line flags override file values.  ``--frames``, ``--ratio``,
``--retain`` and ``--chunk`` accept comma-separated lists; ``bench`` runs the
cartesian product.  Every sweep CSV row carries the complete configuration
needed to reproduce it, plus a checksum of the output tokens.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, verify
from .aggregator import AggregatorConfig, forward_offline, init_weights
from .attention import attention_score_histogram, init_block_weights
from .compression import COMPRESSION_KINDS, CompressionMethod, KEYFRAME_METHODS, KeyframeSelector
from .streaming import StreamConfig, cache_report, run_stream
from .tokens import FrameLayout, generate_synthetic

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_IO = 4

BENCH_COLUMNS = ("mode", "S", "r", "p", "c", "method", "wall_ms_median",
                 "wall_ms_p90", "tokens", "cache_tokens",
                 "selector", "interval", "aux", "layers", "channels", "heads",
                 "grid", "camera", "register", "seed", "precision", "repeats")
SWEEP_COLUMNS = ("run_id", "repeat", "mode", "S", "r", "p", "c", "method",
                 "selector", "interval", "aux", "layers", "channels", "heads",
                 "grid", "camera", "register", "seed", "precision",
                 "wall_ms", "tokens", "cache_tokens", "checksum")
HISTOGRAM_COLUMNS = ("bin_lo", "bin_hi", "count")


@dataclass(frozen=True)
class RunSpec:
    """One reproducible benchmark run (modes share this configuration)."""

    frames: int = 8
    ratio: int = 4
    retain: int = 5
    chunk: int = 10
    method: str = "bilinear"
    selector: str = "cluster"
    interval: int = 200
    aux: bool = True
    seed: int = 0
    layers: int = 2
    channels: int = 32
    heads: int = 4
    grid: tuple[int, int] = (8, 8)
    camera: int = 1
    register: int = 4
    precision: str = "f32"
    repeats: int = 3

    def layout(self) -> FrameLayout:
        return FrameLayout(h=self.grid[0], w=self.grid[1], n_camera=self.camera,
                           n_register=self.register, channels=self.channels)

    def aggregator_config(self, mode: str) -> AggregatorConfig:
        return AggregatorConfig(
            layout=self.layout(), layers=self.layers, heads=self.heads,
            global_mode="dense" if mode == "dense" else "descriptor",
            method=CompressionMethod(self.method, self.ratio),
            include_aux=self.aux,
            selector=KeyframeSelector(self.selector, self.interval, self.seed),
            seed=self.seed,
            dtype=np.float32 if self.precision == "f32" else np.float64)

    def stream_config(self) -> StreamConfig:
        return StreamConfig(base=self.aggregator_config("descriptor"),
                            chunk_size=self.chunk, retain_rate=self.retain)


@dataclass(frozen=True)
class BenchSpec:
    runs: list[RunSpec] = field(default_factory=list)
    out_dir: Path = Path(".")
    modes: tuple[str, ...] = ("dense", "descriptor", "stream")
    parallel: bool = False


def _checksum(values: np.ndarray) -> str:
    return hashlib.sha256(values.tobytes()).hexdigest()[:16]


def _execute(run: RunSpec, mode: str):
    """One forward in the given mode; returns (output values, cache tokens)."""
    tokens = generate_synthetic(run.frames, run.layout(), run.seed,
                                dtype=np.float32 if run.precision == "f32" else np.float64)
    if mode == "stream":
        cfg = run.stream_config()
        out, cache = run_stream(tokens, cfg, return_cache=True)
        return out.values, cache_report(cache).total_tokens
    cfg = run.aggregator_config(mode)
    return forward_offline(tokens, cfg).values, 0


def _timed_rows(run_id: int, run: RunSpec, modes: tuple[str, ...]):
    """Per-(mode, repeat) sweep rows plus per-mode aggregated bench rows."""
    sweep_rows, bench_rows = [], []
    for mode in modes:
        _execute(run, mode)  # warmup
        times = []
        for rep in range(max(1, run.repeats)):
            t0 = time.perf_counter()
            values, cache_tokens = _execute(run, mode)
            wall_ms = (time.perf_counter() - t0) * 1e3
            times.append(wall_ms)
            sweep_rows.append({
                "run_id": run_id, "repeat": rep, "mode": mode,
                "S": run.frames, "r": run.ratio, "p": run.retain, "c": run.chunk,
                "method": run.method, "selector": run.selector,
                "interval": run.interval, "aux": run.aux, "layers": run.layers,
                "channels": run.channels, "heads": run.heads,
                "grid": f"{run.grid[0]}x{run.grid[1]}", "camera": run.camera,
                "register": run.register, "seed": run.seed,
                "precision": run.precision, "wall_ms": f"{wall_ms:.3f}",
                "tokens": run.frames * run.layout().tokens_per_frame,
                "cache_tokens": cache_tokens, "checksum": _checksum(values)})
        bench_rows.append({
            "mode": mode, "S": run.frames, "r": run.ratio, "p": run.retain,
            "c": run.chunk, "method": run.method,
            "wall_ms_median": f"{statistics.median(times):.3f}",
            "wall_ms_p90": f"{float(np.percentile(times, 90)):.3f}",
            "tokens": run.frames * run.layout().tokens_per_frame,
            "cache_tokens": cache_tokens,
            "selector": run.selector, "interval": run.interval, "aux": run.aux,
            "layers": run.layers, "channels": run.channels, "heads": run.heads,
            "grid": f"{run.grid[0]}x{run.grid[1]}", "camera": run.camera,
            "register": run.register, "seed": run.seed,
            "precision": run.precision, "repeats": run.repeats})
    return sweep_rows, bench_rows


def sweep(spec: BenchSpec) -> list[dict]:
    """Run every configuration, write sweep/bench CSVs, return sweep rows.

    Failed runs are recorded in ``failures.csv`` and do not abort the rest.
    Runs execute sequentially unless ``spec.parallel``; repeats of one run
    never run concurrently.
    """
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[int, tuple[list[dict], list[dict]]] = {}
    failures: list[tuple[int, str]] = []

    def job(i_run):
        i, run = i_run
        return i, _timed_rows(i, run, spec.modes)

    items = list(enumerate(spec.runs))
    if spec.parallel and len(items) > 1:
        with ThreadPoolExecutor() as pool:
            futures = {pool.submit(job, it): it[0] for it in items}
            for fut, i in futures.items():
                try:
                    idx, rows = fut.result()
                    results[idx] = rows
                except Exception as exc:  # noqa: BLE001 - manifest, keep going
                    failures.append((i, repr(exc)))
    else:
        for it in items:
            try:
                idx, rows = job(it)
                results[idx] = rows
            except Exception as exc:  # noqa: BLE001
                failures.append((it[0], repr(exc)))

    sweep_rows = [r for i in sorted(results) for r in results[i][0]]
    bench_rows = [r for i in sorted(results) for r in results[i][1]]
    _write_csv(spec.out_dir / "sweep.csv", SWEEP_COLUMNS, sweep_rows)
    _write_csv(spec.out_dir / "bench.csv", BENCH_COLUMNS, bench_rows)
    (spec.out_dir / "summary.md").write_text(_markdown_summary(bench_rows))
    if failures:
        _write_csv(spec.out_dir / "failures.csv", ("run_id", "error"),
                   [{"run_id": i, "error": e} for i, e in failures])
    return sweep_rows


def run_from_row(row: dict) -> str:
    """Re-execute the configuration recorded in a sweep row; returns the checksum."""
    h, w = str(row["grid"]).split("x")
    run = RunSpec(frames=int(row["S"]), ratio=int(row["r"]), retain=int(row["p"]),
                  chunk=int(row["c"]), method=str(row["method"]),
                  selector=str(row["selector"]), interval=int(row["interval"]),
                  aux=str(row["aux"]).lower() in ("true", "1"),
                  seed=int(row["seed"]), layers=int(row["layers"]),
                  channels=int(row["channels"]), heads=int(row["heads"]),
                  grid=(int(h), int(w)), camera=int(row["camera"]),
                  register=int(row["register"]), precision=str(row["precision"]))
    values, _ = _execute(run, str(row["mode"]))
    return _checksum(values)


def _write_csv(path: Path, columns, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _markdown_summary(bench_rows: list[dict]) -> str:
    lines = ["| mode | S | r | p | c | method | wall_ms_median |", "|---|---|---|---|---|---|---|"]
    for row in bench_rows:
        lines.append(f"| {row['mode']} | {row['S']} | {row['r']} | {row['p']} "
                     f"| {row['c']} | {row['method']} | {row['wall_ms_median']} |")
    return "\n".join(lines) + "\n"


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x != ""]


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        h, w = str(text).lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 8x8, got {text!r}") from exc


def _build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="descattn",
        description="Descriptor-compressed attention benchmarks and checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: list[argparse.ArgumentParser] = []

    def add_common(p, lists=False):
        p.add_argument("--frames", default="8" if lists else 8,
                       type=str if lists else int)
        p.add_argument("--ratio", default="4" if lists else 4,
                       type=str if lists else int)
        p.add_argument("--retain", default="5" if lists else 5,
                       type=str if lists else int)
        p.add_argument("--chunk", default="10" if lists else 10,
                       type=str if lists else int)
        p.add_argument("--method", default="bilinear", choices=COMPRESSION_KINDS)
        p.add_argument("--selector", default="cluster", choices=KEYFRAME_METHODS)
        p.add_argument("--interval", default=200, type=int)
        p.add_argument("--aux", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--seed", default=0, type=int)
        p.add_argument("--layers", default=2, type=int)
        p.add_argument("--channels", default=32, type=int)
        p.add_argument("--heads", default=4, type=int)
        p.add_argument("--grid", default="8x8", type=_parse_grid)
        p.add_argument("--camera", default=1, type=int)
        p.add_argument("--register", default=4, type=int)
        p.add_argument("--out", default=".", type=Path)
        p.add_argument("--format", default="csv", choices=("csv", "md"))
        p.add_argument("--precision", default="f32", choices=("f32", "f64"))
        p.add_argument("--config", default=None, type=Path)

    p_bench = sub.add_parser("bench", help="timed dense/descriptor/stream runs")
    add_common(p_bench, lists=True)
    p_bench.add_argument("--repeats", default=3, type=int)
    p_bench.add_argument("--parallel", action="store_true",
                         help="run distinct configurations concurrently")
    subparsers.append(p_bench)

    p_verify = sub.add_parser("verify", help="run the named invariant suite")
    p_verify.add_argument("--seed", default=0, type=int)
    p_verify.add_argument("--config", default=None, type=Path)
    subparsers.append(p_verify)

    for name in ("flops", "stream", "histogram"):
        p = sub.add_parser(name)
        add_common(p)
        subparsers.append(p)
    return parser, subparsers


def _config_path(argv: list[str]) -> Path | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if token.startswith("--config="):
            return Path(token.split("=", 1)[1])
    return None


def _apply_config_file(subparsers: list[argparse.ArgumentParser],
                       argv: list[str]) -> None:
    """Load key=value defaults from --config; explicit flags still win.

    Defaults land on every subparser (subparser defaults shadow the parent's),
    and string values run through each flag's normal type conversion.
    """
    path = _config_path(argv)
    if path is None:
        return
    defaults = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in ("aux", "parallel"):
            defaults[key] = value.lower() in ("true", "1", "yes")
        elif key == "grid":
            defaults[key] = _parse_grid(value)
        elif key == "out":
            defaults[key] = Path(value)
        else:
            defaults[key] = value
    for sp in subparsers:
        known = {k: v for k, v in defaults.items()
                 if any(a.dest == k for a in sp._actions)}
        sp.set_defaults(**known)


def _runs_from_args(args) -> list[RunSpec]:
    runs = []
    for frames in _int_list(args.frames):
        for ratio in _int_list(args.ratio):
            for retain in _int_list(args.retain):
                for chunk in _int_list(args.chunk):
                    runs.append(RunSpec(
                        frames=frames, ratio=ratio, retain=retain, chunk=chunk,
                        method=args.method, selector=args.selector,
                        interval=args.interval, aux=args.aux, seed=args.seed,
                        layers=args.layers, channels=args.channels,
                        heads=args.heads, grid=args.grid, camera=args.camera,
                        register=args.register, precision=args.precision,
                        repeats=getattr(args, "repeats", 3)))
    return runs


def _single_run(args) -> RunSpec:
    runs = _runs_from_args(args)
    if len(runs) != 1:
        raise ValueError("this subcommand takes single values, not sweeps")
    return runs[0]


def _cmd_bench(args) -> int:
    spec = BenchSpec(runs=_runs_from_args(args), out_dir=args.out,
                     parallel=getattr(args, "parallel", False))
    rows = sweep(spec)
    print(f"wrote {len(rows)} sweep rows to {spec.out_dir / 'sweep.csv'}")
    return EXIT_OK


def _cmd_flops(args) -> int:
    run = _single_run(args)
    dense_cfg = run.aggregator_config("dense")
    desc_cfg = run.aggregator_config("descriptor")
    dense = analysis.flops_attention(dense_cfg, run.frames)
    desc = analysis.flops_attention(desc_cfg, run.frames)
    reduction, k, kd = analysis.attention_core_reduction(desc_cfg, run.frames)

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "flops.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        rows = dense.csv_rows()
        writer.writerows(rows)
        writer.writerows(desc.csv_rows()[1:])
    print(f"K={k} K_d={kd} attention-core reduction K/K_d = {reduction:.2f}x")
    if run.frames in analysis.REFERENCE_RESOURCES["pflops"]["dense"]:
        ref = analysis.reference_end_to_end_reduction(run.frames)
        print(f"published end-to-end reduction at S={run.frames}: {ref:.2f}x "
              "(different counting convention; reported, not reconciled)")
    if args.format == "md":
        metrics = dict(analysis.REFERENCE_RESOURCES)
        metrics = {"Time (s)": metrics["time_s"], "PFLOPs": metrics["pflops"],
                   "Mem (GB)": metrics["memory_gb"],
                   "analytic FLOPs (this config)": {
                       "dense": {run.frames: float(dense.total)},
                       "descriptor": {run.frames: float(desc.total)}}}
        (args.out / "flops.md").write_text(analysis.markdown_resource_table(metrics))
    return EXIT_OK


def _cmd_stream(args) -> int:
    run = _single_run(args)
    tokens = generate_synthetic(run.frames, run.layout(), run.seed,
                                dtype=np.float32 if run.precision == "f32" else np.float64)
    _, cache = run_stream(tokens, run.stream_config(), return_cache=True)
    report = cache_report(cache)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "cache_report.csv").write_text(report.to_csv())
    print(f"frames={report.frames_seen} cache_tokens={report.total_tokens} "
          f"ratio_vs_full={report.ratio_vs_full:.6f}")
    return EXIT_OK


def _cmd_histogram(args) -> int:
    run = _single_run(args)
    tokens = generate_synthetic(run.frames, run.layout(), run.seed,
                                dtype=np.float32 if run.precision == "f32" else np.float64)
    w = init_block_weights(run.seed, run.channels, run.heads,
                           np.float32 if run.precision == "f32" else np.float64)
    args.out.mkdir(parents=True, exist_ok=True)
    for mode in ("frame", "global"):
        counts, edges = attention_score_histogram(tokens, w, mode)
        rows = [{"bin_lo": f"{edges[i]:.6f}", "bin_hi": f"{edges[i + 1]:.6f}",
                 "count": int(counts[i])} for i in range(len(counts))]
        _write_csv(args.out / f"histogram_{mode}.csv", HISTOGRAM_COLUMNS, rows)
    print(f"wrote histograms to {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = _build_parser()
    try:
        _apply_config_file(subparsers, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "verify":
            return EXIT_OK if verify.run_all(args.seed) else EXIT_VERIFY
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "flops":
            return _cmd_flops(args)
        if args.command == "stream":
            return _cmd_stream(args)
        if args.command == "histogram":
            return _cmd_histogram(args)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
