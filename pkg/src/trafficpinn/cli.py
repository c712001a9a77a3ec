"""Command-line front end: simulate, estimate, compare, sweep-iterations.

Every run takes a scenario file, an output directory, and a seed; everything
else is in the file.  Replay runs are deterministic: re-running with the
same manifest reproduces byte-identical CSVs, which is why the per-window
wall-clock timings go to their own file instead of the metrics trace.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_config, default_config, write_manifest
from .domain import DensityField, cee
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    TrainingError,
)
from .observer import run_observer
from .online import (
    MetricsRow,
    evaluate,
    fit_cost_model,
    run_online,
    save_snapshots,
    write_metrics_csv,
)
from .probes import read_probes_csv, run_fleet, write_probes_csv
from .solver import read_field_csv, simulate, write_field_csv
from .errors import EstimateUnavailableError


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="trafficpinn",
        description="Online physics-informed traffic density estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="scenario file (defaults bundled)")
        p.add_argument("--out", help="output directory (default from scenario)")
        p.add_argument("--seed", type=int, help="override the scenario seed")

    p_sim = sub.add_parser("simulate", help="ground-truth field and probe data")
    add_common(p_sim)

    p_est = sub.add_parser("estimate", help="online estimation over a probe file")
    add_common(p_est)
    p_est.add_argument("--probes", required=True, help="probe measurement CSV")
    p_est.add_argument("--truth", help="ground-truth field CSV for scoring")
    timing = p_est.add_mutually_exclusive_group()
    timing.add_argument("--replay", dest="mode", action="store_const",
                        const="replay", help="run as fast as possible (default)")
    timing.add_argument("--realtime", dest="mode", action="store_const",
                        const="realtime", help="pace training by the wall clock")
    p_est.set_defaults(mode="replay")

    p_cmp = sub.add_parser("compare", help="truth, estimator, and baseline in one run")
    add_common(p_cmp)

    p_swp = sub.add_parser("sweep-iterations", help="epoch-count tradeoff sweep")
    add_common(p_swp)
    return parser


def _load_scenario(args):
    config = load_config(args.config) if args.config else default_config()
    seed = args.seed if args.seed is not None else config.get("run", "seed")
    out_dir = Path(args.out if args.out else config.get("run", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    return config, int(seed), out_dir


def _simulate_world(config, seed):
    domain = config.domain()
    boundary = config.boundary(seed)
    freeflow = config.freeflow()
    truth = simulate(domain, config.solver(), boundary, freeflow)
    probes = run_fleet(truth, freeflow, config.fleet(seed))
    return domain, truth, freeflow, probes


def _require_greenshield(config, command):
    if config.get("run", "mode") != "greenshield":
        raise ConfigError(f"{command} needs run.mode = greenshield, "
                          f"got {config.get('run', 'mode')!r}")


def _write_timings(result, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_index", "n_colloc", "n_data", "epochs", "duration_s"])
        for snap, (nc, nd, e, d) in zip(result.snapshots, result.cost_records):
            writer.writerow([snap.index, nc, nd, e, repr(float(d))])


def _deterministic_metrics(result, realtime):
    """Replay metrics must not embed wall-clock time; blank the column."""
    if realtime:
        return result.metrics
    return [
        MetricsRow(r.t_min, r.cee_pinn, r.cee_observer, r.vf_true_kmh,
                   r.vf_learned_kmh, r.window_index, 0.0)
        for r in result.metrics
    ]


def cmd_simulate(args):
    config, seed, out = _load_scenario(args)
    _require_greenshield(config, "simulate")
    domain, truth, freeflow, probes = _simulate_world(config, seed)
    write_field_csv(truth, out / "field.csv")
    write_probes_csv(probes, out / "probes.csv")
    write_manifest(out / "manifest.json", config, seed, "simulate")
    mass = float(np.trapezoid(truth.values[-1], truth.positions))
    print(f"wrote {out / 'field.csv'} ({truth.times.size} x {truth.positions.size} grid)")
    print(f"wrote {out / 'probes.csv'} ({len(probes.trajectories)} probes, "
          f"{probes.n_samples} samples)")
    print(f"final road mass: {mass:.4f} vehicle-km equivalent")
    return 0


def _mean_cee(rows, t_lo, t_hi, column="cee_pinn"):
    vals = [getattr(r, column) for r in rows
            if t_lo - 1e-12 <= r.t_min <= t_hi + 1e-12 and np.isfinite(getattr(r, column))]
    return float(np.mean(vals)) if vals else float("nan")


def cmd_estimate(args):
    config, seed, out = _load_scenario(args)
    probes = read_probes_csv(args.probes)
    domain = config.domain()
    truth = read_field_csv(args.truth) if args.truth else None
    horizon = truth.t_span[1] if truth is not None else domain.horizon_min
    freeflow = config.freeflow() if config.get("run", "mode") == "greenshield" else None
    online_cfg = config.online(seed, mode=args.mode)
    result = run_online(probes, online_cfg, domain.length_km, horizon,
                        domain.viscosity, truth=truth, freeflow=freeflow)
    save_snapshots(result, out / "snapshots.npz")
    _write_timings(result, out / "timings.csv")
    if truth is not None:
        rows = _deterministic_metrics(result, args.mode == "realtime")
        write_metrics_csv(rows, out / "metrics.csv")
        print(f"wrote {out / 'metrics.csv'} ({len(rows)} rows)")
        finite = [r.cee_pinn for r in rows if np.isfinite(r.cee_pinn)]
        if finite:
            print(f"mean CEE over scored times: {np.mean(finite):.6f}")
    else:
        est_field = _stitched_field(result, domain, config)
        write_field_csv(est_field, out / "estimate.csv")
        print(f"wrote {out / 'estimate.csv'}")
    write_manifest(out / "manifest.json", config, seed, f"estimate --{args.mode}",
                   extra={"probes": str(args.probes),
                          "truth": str(args.truth) if args.truth else None})
    if result.overruns:
        print(f"realtime overruns: {result.overruns}")
    print(f"wrote {out / 'snapshots.npz'} ({len(result.snapshots)} snapshots)")
    return 0


def _stitched_field(result, domain, config):
    """Evaluate the stitched estimate on a regular output grid."""
    dt_out = config.get("solver", "output_dt_min")
    nx = config.get("solver", "nx")
    start = (min(result.by_index) + 1) * result.dt_window if result.snapshots else 0.0
    n_t = max(1, int(np.floor((domain.horizon_min - start) / dt_out)))
    times = start + np.arange(n_t + 1) * dt_out
    times = times[times <= domain.horizon_min + 1e-12]
    positions = np.linspace(0.0, domain.length_km, nx + 1)
    values = np.empty((times.size, positions.size))
    by_index = result.by_index
    for i, t in enumerate(times):
        try:
            values[i] = evaluate(by_index, float(t), positions)
        except EstimateUnavailableError:
            values[i] = np.nan
    keep = np.all(np.isfinite(values), axis=1)
    return DensityField(times[keep], positions, np.clip(values[keep], 0.0, 1.0))


def cmd_compare(args):
    config, seed, out = _load_scenario(args)
    _require_greenshield(config, "compare")
    domain, truth, freeflow, probes = _simulate_world(config, seed)
    online_cfg = config.online(seed)
    result = run_online(probes, online_cfg, domain.length_km, domain.horizon_min,
                        domain.viscosity, truth=truth, freeflow=freeflow)
    obs_cfg = config.observer()
    obs = run_observer(truth, probes, obs_cfg.assumed_vf_kmh, domain.viscosity, obs_cfg)
    obs_by_t = dict(obs.cee)
    merged = []
    for row in result.metrics:
        row.cee_observer = obs_by_t.get(row.t_min, float("nan"))
        merged.append(row)
    rows = _deterministic_metrics(result, realtime=False)
    write_probes_csv(probes, out / "probes.csv")
    write_metrics_csv(rows, out / "metrics.csv")
    save_snapshots(result, out / "snapshots.npz")
    _write_timings(result, out / "timings.csv")
    summary = _compare_summary(config, seed, rows, result, freeflow, domain)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    write_manifest(out / "manifest.json", config, seed, "compare")
    print(summary)
    print(f"wrote {out / 'metrics.csv'}, {out / 'summary.txt'}")
    return 0


def _compare_summary(config, seed, rows, result, freeflow, domain):
    lines = [
        "comparison summary",
        f"scenario: {config.path}",
        f"seed: {seed}",
        f"windows trained: {len(result.snapshots)}",
        "",
        "interval mean CEE (scored from the first served estimate)",
        f"{'interval_min':>18} {'pinn':>12} {'observer':>12} {'vf_true_kmh':>12}",
    ]
    starts = [t for t, _ in freeflow.segments]
    ends = starts[1:] + [domain.horizon_min]
    for (t0, vf), t1 in zip(freeflow.segments, ends):
        pinn = _mean_cee(rows, t0, t1)
        obs = _mean_cee(rows, t0, t1, "cee_observer")
        lines.append(f"[{t0:7.2f},{t1:7.2f}) {pinn:>12.6f} {obs:>12.6f} {vf:>12.4f}")
    lines.append("")
    lines.append("learned free-flow speed trace (window, served from t_min, vf_kmh)")
    for snap in result.snapshots:
        flags = ""
        if snap.data_starved:
            flags += " starved"
        if snap.vf_stale:
            flags += " stale"
        lines.append(f"  {snap.index:4d} {snap.valid_from:8.3f} {snap.vf_kmh:9.4f}{flags}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args):
    config, seed, out = _load_scenario(args)
    _require_greenshield(config, "sweep-iterations")
    epochs_list = config.get("sweep", "epochs_list")
    anchor_e = config.get("sweep", "anchor_epochs")
    anchor_dt = config.get("sweep", "anchor_dt_min")
    horizon = config.get("sweep", "horizon_min") or config.get("domain", "horizon_min")
    domain = config.domain()
    if horizon != domain.horizon_min:
        domain = replace(domain, horizon_min=horizon)
    boundary = config.boundary(seed)
    freeflow = config.freeflow()
    truth = simulate(domain, config.solver(), boundary, freeflow)
    probes = run_fleet(truth, freeflow, config.fleet(seed))

    records = []
    offline_results = {}
    for e in epochs_list:
        cfg = config.online(seed, epochs=e, dt_window=anchor_dt)
        res = run_online(probes, cfg, domain.length_km, horizon, domain.viscosity,
                         truth=truth, freeflow=freeflow)
        offline_results[e] = res
        records.extend(res.cost_records)
        print(f"offline e_t={e}: {len(res.snapshots)} windows")
    cost = fit_cost_model(records)
    print(f"fitted cost model: alpha={cost.alpha:.3e} s/colloc-epoch, "
          f"beta={cost.beta:.3e} s/data-epoch")
    sizes = np.array([(nc, nd) for nc, nd, _, _ in records], dtype=float)
    nc_ref, nd_ref = float(np.median(sizes[:, 0])), float(np.median(sizes[:, 1]))
    base_s = cost.predict_seconds(anchor_e, nc_ref, nd_ref)

    sweep_rows = []
    t_lo = 2.0 * anchor_dt * max(epochs_list) / anchor_e
    for e in epochs_list:
        res = offline_results[e]
        sweep_rows.append((e, "offline", anchor_dt, _mean_cee(res.metrics, t_lo, horizon)))
    for e in epochs_list:
        # window step scaled by predicted training time, anchored at the
        # reference operating point (anchor_epochs <-> anchor_dt)
        dt_e = anchor_dt * cost.predict_seconds(e, nc_ref, nd_ref) / base_s
        cfg = config.online(seed, epochs=e, dt_window=dt_e)
        res = run_online(probes, cfg, domain.length_km, horizon, domain.viscosity,
                         truth=truth, freeflow=freeflow)
        sweep_rows.append((e, "online", dt_e, _mean_cee(res.metrics, t_lo, horizon)))
        print(f"online e_t={e}: dt={dt_e:.4f} min, {len(res.snapshots)} windows")

    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["e_t", "mode", "delta_t_min", "mean_cee"])
        for e, mode, dt_e, mean in sweep_rows:
            writer.writerow([e, mode, repr(float(dt_e)), repr(float(mean))])
    write_manifest(out / "manifest.json", config, seed, "sweep-iterations",
                   extra={"cost_alpha": cost.alpha, "cost_beta": cost.beta,
                          "scored_from_min": t_lo})
    print(f"wrote {out / 'sweep.csv'}")
    for e, mode, dt_e, mean in sweep_rows:
        print(f"  e_t={e:4d} {mode:8s} dt={dt_e:.4f} mean_cee={mean:.6f}")
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "estimate": cmd_estimate,
        "compare": cmd_compare,
        "sweep-iterations": cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (TrainingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
