"""Command-line front end: run scenarios, sweep parameters, validate the
delay model against simulation, and compare the allocator with brute force.

Exit codes: 0 success, 1 configuration error, 2 runtime error.  All emitted
CSVs carry a header row; floats use 9 significant digits and infinities are
written as ``inf``.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .capacity import build_capacity_samples
from .config import ConfigError, _SCALAR_FIELDS, _convert, load_config
from .martingale import delay_bound
from .near_rt import allocate, brute_force_allocate
from .sim import measure_fifo_delays, run, synthesize_window
from .traces import ArrivalTrace, ChannelTrace, SyntheticModel, extend_cyclically, sample_many


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return "%.9g" % v
    return str(v)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _prepare_out(out_dir: str, files: list[str], overwrite: bool) -> None:
    os.makedirs(out_dir, exist_ok=True)
    if not overwrite:
        clashes = [f for f in files if os.path.exists(os.path.join(out_dir, f))]
        if clashes:
            raise ConfigError(
                f"refusing to overwrite {', '.join(clashes)} in {out_dir} (use --overwrite)"
            )


def _write_metrics(metrics, out_dir: str) -> None:
    _write_csv(
        os.path.join(out_dir, "summary.csv"),
        [
            "service_id", "packets", "completed", "pending_violations", "violation_prob",
            "mean_ms", "p50_ms", "p95_ms", "p99_ms", "p999_ms", "max_ms", "rb_utilization",
        ],
        [
            (
                s.service_id, s.packets, s.completed, s.pending_violations, s.violation_prob,
                s.mean_ms, s.p50_ms, s.p95_ms, s.p99_ms, s.p999_ms, s.max_ms, metrics.rb_utilization,
            )
            for s in metrics.services
        ],
    )
    ccdf_rows = []
    for s in metrics.services:
        for x, p in s.ccdf:
            ccdf_rows.append((s.service_id, x, p))
    _write_csv(os.path.join(out_dir, "ccdf.csv"), ["service_id", "x", "ccdf"], ccdf_rows)
    _write_csv(
        os.path.join(out_dir, "alloc.csv"),
        ["period", "service_id", "n_min", "w_est_ms", "objective"],
        metrics.alloc_rows,
    )
    if metrics.debug_rows is not None:
        _write_csv(
            os.path.join(out_dir, "debug.csv"),
            ["tti", "service_id", "state", "n_req", "n_min_i", "rbs_used", "queue_bits", "head_wait_ttis"],
            metrics.debug_rows,
        )


def _apply_overrides(cfg, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "controller", None) is not None:
        cfg.controller = args.controller
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    files = ["summary.csv", "ccdf.csv", "alloc.csv"] + (["debug.csv"] if cfg.debug_log else [])
    _prepare_out(args.out, files, args.overwrite)
    metrics = run(cfg)
    _write_metrics(metrics, args.out)
    return 0


def _sweep_one(task) -> tuple:
    config_path, overrides, out_dir, overwrite = task
    cfg = load_config(config_path)
    for name, value in overrides.items():
        setattr(cfg, name, value)
    cfg.validate()
    files = ["summary.csv", "ccdf.csv", "alloc.csv"] + (["debug.csv"] if cfg.debug_log else [])
    _prepare_out(out_dir, files, overwrite)
    metrics = run(cfg)
    _write_metrics(metrics, out_dir)
    return (out_dir, "ok")


def cmd_sweep(args) -> int:
    load_config(args.config)  # fail fast on a broken base config
    axes: list[tuple[str, list]] = []
    for spec in args.axis or []:
        if "=" not in spec:
            raise ConfigError(f"bad --axis {spec!r}, expected name=v1,v2,...")
        name, raw = spec.split("=", 1)
        name = name.strip()
        if name not in _SCALAR_FIELDS:
            raise ConfigError(f"--axis {name!r} is not a sweepable scenario field")
        typ = _SCALAR_FIELDS[name]
        axes.append((name, [_convert(name, tok, typ) for tok in raw.split(",") if tok]))
    if not axes:
        raise ConfigError("sweep needs at least one --axis")

    names = [a[0] for a in axes]
    combos = list(itertools.product(*(a[1] for a in axes)))
    os.makedirs(args.out, exist_ok=True)
    index_path = os.path.join(args.out, "index.csv")
    if os.path.exists(index_path) and not args.overwrite:
        raise ConfigError(f"refusing to overwrite {index_path} (use --overwrite)")

    tasks = []
    for i, combo in enumerate(combos):
        run_dir = os.path.join(args.out, f"run_{i:03d}")
        tasks.append((args.config, dict(zip(names, combo)), run_dir, args.overwrite))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    rows = []
    for i, (combo, (run_dir, status)) in enumerate(zip(combos, results)):
        rows.append((i, *combo, run_dir, status))
    _write_csv(index_path, ["run_id", *names, "out_dir", "status"], rows)
    return 0


def _parse_grid(raw: str, name: str) -> list[int]:
    try:
        vals = [int(tok) for tok in raw.split(",") if tok]
    except ValueError:
        raise ConfigError(f"bad {name} grid {raw!r}") from None
    if not vals:
        raise ConfigError(f"{name} grid is empty")
    return vals


def _arrival_window(spec, t_obs: int, rng) -> np.ndarray:
    if isinstance(spec.arrival, SyntheticModel):
        return sample_many(spec.arrival, rng, t_obs)
    return extend_cyclically(spec.arrival.bits_per_tti, t_obs)


def _channel_window(spec, length: int, rng) -> np.ndarray:
    if isinstance(spec.channel, SyntheticModel):
        return sample_many(spec.channel, rng, length)
    return extend_cyclically(spec.channel.bits_per_rb, length)


def cmd_validate_model(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if len(cfg.services) != 1:
        raise ConfigError("validate-model needs a single-service config")
    spec = cfg.services[0]
    n_min_grid = _parse_grid(args.n_min_grid, "n-min")
    t_obs_grid = _parse_grid(args.t_obs_grid, "t-obs")
    _prepare_out(args.out, ["validate.csv"], args.overwrite)

    from .capacity import ConcatPerRbVector

    rows = []
    for n_min in n_min_grid:
        for t_obs in t_obs_grid:
            ss = np.random.SeedSequence([cfg.seed, 10, n_min, t_obs])
            r_arr, r_ch, r_meas = (np.random.default_rng(s) for s in ss.spawn(3))
            arr_win = _arrival_window(spec, t_obs, r_arr)
            rb_stream = _channel_window(spec, t_obs * n_min, r_ch)
            ones = np.ones(len(rb_stream), dtype=np.int64)
            x_s = build_capacity_samples(ConcatPerRbVector(rb_stream, ones, ones), n_min, n_min)
            from .martingale import ArrivalSampleSet

            res = delay_bound(ArrivalSampleSet(arr_win), x_s, [1.0], spec.epsilon, cfg.t_slot_ms)
            # measured delays count the transmitting slot, so compare against
            # the queueing bound plus one slot
            w_model = res.w_ms + cfg.t_slot_ms if math.isfinite(res.w_ms) else math.inf

            delays = []
            for r in range(args.runs):
                rr = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11, n_min, t_obs, r]))
                a = _arrival_window(spec, args.run_ttis, rr)
                c = _channel_window(spec, args.run_ttis, rr)
                d, _pending = measure_fifo_delays(a, n_min * c, cfg.t_slot_ms)
                delays.append(d)
            pooled = np.concatenate(delays) if delays else np.empty(0)
            if pooled.size:
                w_meas = float(np.quantile(pooled, 1.0 - spec.epsilon, method="inverted_cdf"))
            else:
                w_meas = math.nan
            rel = abs(w_model - w_meas) / w_meas if (w_meas and math.isfinite(w_model)) else math.inf
            rows.append((n_min, t_obs, w_model, w_meas, rel))
    _write_csv(
        os.path.join(args.out, "validate.csv"),
        ["n_min", "t_obs", "W_model_ms", "W_measured_ms", "rel_err"],
        rows,
    )
    return 0


def cmd_table1(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    grid = _parse_grid(args.n_cell_grid, "n-cell")
    if min(grid) < len(cfg.services):
        raise ConfigError("n_cell grid entries must be at least the number of services")
    _prepare_out(args.out, ["table1.csv"], args.overwrite)

    from .near_rt import AllocatorConfig

    acfg = AllocatorConfig(t_slot_ms=cfg.t_slot_ms, estimator=cfg.estimator,
                           gmm_components=cfg.gmm_components)
    rows = []
    for n_cell in grid:
        windows = []
        for m, spec in enumerate(cfg.services):
            ss = np.random.SeedSequence([cfg.seed, 20, m])
            r_a, r_c = (np.random.default_rng(s) for s in ss.spawn(2))
            if not isinstance(spec.arrival, SyntheticModel) or not isinstance(spec.channel, SyntheticModel):
                raise ConfigError("table1 expects synthetic sources")
            windows.append(
                synthesize_window(spec.arrival, spec.channel, cfg.t_obs, args.rbs_per_tti, r_a, r_c)
            )
        heur = allocate(cfg.services, windows, n_cell, acfg)
        brute, iters = brute_force_allocate(cfg.services, windows, n_cell, acfg)
        rel = (heur.objective - brute.objective) / brute.objective if brute.objective > 0 else 0.0
        rows.append((n_cell, heur.objective, brute.objective, rel, heur.evaluations, iters))
    _write_csv(
        os.path.join(args.out, "table1.csv"),
        ["n_cell", "heuristic_objective", "brute_objective", "rel_err", "heuristic_iterations", "brute_iterations"],
        rows,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rborch", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario config file (INI)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--overwrite", action="store_true", help="replace existing output files")

    sp = sub.add_parser("run", help="simulate one scenario and emit CSV metrics")
    common(sp)
    sp.add_argument("--controller", default=None, help="override the config controller")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the cross product of one or more axes")
    common(sp)
    sp.add_argument("--axis", action="append", help="name=v1,v2,... (repeatable)")
    sp.add_argument("--jobs", type=int, default=1, help="parallel runs")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate-model", help="compare model bounds with measured delay quantiles")
    common(sp)
    sp.add_argument("--n-min-grid", default="4,6,8", help="comma-separated guaranteed-RB grid")
    sp.add_argument("--t-obs-grid", default="1000,4000", help="comma-separated window sizes")
    sp.add_argument("--runs", type=int, default=5, help="measurement repetitions per grid point")
    sp.add_argument("--run-ttis", type=int, default=200_000, help="TTIs per measurement run")
    sp.set_defaults(func=cmd_validate_model)

    sp = sub.add_parser("table1", help="heuristic vs brute-force allocation comparison")
    common(sp)
    sp.add_argument("--n-cell-grid", default="60,70,80,90,100", help="cell sizes to compare")
    sp.add_argument("--rbs-per-tti", type=int, default=8, help="capacity stream density per TTI")
    sp.set_defaults(func=cmd_table1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
