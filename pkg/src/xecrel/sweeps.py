"""Named end-to-end runs that regenerate the data behind each figure.

Every sweep returns ``(tables, summary)``: ``tables`` maps a file stem to an
ordered column dict, ``summary`` is a small JSON-able dict.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from xecrel.errors import ConfigError
from xecrel.estimation import ObservationTrace, OnlineState, fit_truncnorm_mle, online_update
from xecrel.mcoracle import band_halfwidth, mc_single_reliability
from xecrel.probkernel import Bounds, TruncNormModel, UniformModel
from xecrel.reliability import DeviceModel, reliability, reliability_mi
from xecrel.scenarios import THETA_GRID_1_4, Scenario, preset_scenario
from xecrel.simharness import (
    SimResult,
    empirical_reliability_curve,
    run_series_deployment,
    run_stream_sim,
    split_by_demand,
)
from xecrel.system import (
    parallel_worst_case_bound,
    select_parallel,
    select_series,
    series_closed_form,
    uniform_reliabilities,
)

MC_TRIALS = 100_000
FIG6_SIZES = (2, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130)
EPSILONS = tuple(round(0.5 + 0.01 * k, 2) for k in range(50))


def child_seeds(seed: int, k: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(k)]


def _mc_column(device: DeviceModel, thetas, seed: int, n: int = MC_TRIALS):
    ests = [mc_single_reliability(device, t, n, s) for t, s in zip(thetas, child_seeds(seed, len(thetas)))]
    return [e.estimate for e in ests], [e.ci_lo for e in ests], [e.ci_hi for e in ests]


def _scenario(name: str, seed: int) -> Scenario:
    return preset_scenario(name).with_seed(seed)


def _uniform_device(sc: Scenario) -> DeviceModel:
    t = sc.trace
    return DeviceModel.uniform(t.capacity_bounds(sc.profile), t.demand_bounds(sc.cost_model), sc.name)


def fig2a(seed: int, n_mc: int = MC_TRIALS):
    sc = _scenario("fig2a", seed)
    dev = _uniform_device(sc)
    grid = sc.grid
    sim = run_stream_sim(sc.trace, sc.cost_model, sc.profile, grid[0])
    mc, lo, hi = _mc_column(dev, grid, seed, n_mc)
    table = {
        "theta": grid,
        "analytical": [reliability_mi(dev.capacity.bounds, dev.demand.bounds, t) for t in grid],
        "mc": mc,
        "mc_lo": lo,
        "mc_hi": hi,
        "empirical": [r for _, r in empirical_reliability_curve(sim, grid)],
    }
    summary = {
        "scenario": "fig2a",
        "seed": seed,
        "capacity_bounds": [dev.capacity.bounds.lo, dev.capacity.bounds.hi],
        "demand_bounds": [dev.demand.bounds.lo, dev.demand.bounds.hi],
        "n_frames": sim.n_frames,
        "n_blocks": sim.n_blocks,
        "mc_trials": n_mc,
    }
    return {"fig2a": table}, summary


def fig2b(seed: int):
    names = ("fig2b-2-6", "fig2b-4-8", "fig2b-6-12")
    table = {"theta": list(THETA_GRID_1_4)}
    fps = {}
    for name in names:
        sc = _scenario(name, seed)
        dev = _uniform_device(sc)
        sim = run_stream_sim(sc.trace, sc.cost_model, sc.profile, 1.0)
        tag = name.removeprefix("fig2b-").replace("-", "_")
        table[f"analytical_{tag}"] = [reliability_mi(dev.capacity.bounds, dev.demand.bounds, t) for t in table["theta"]]
        table[f"empirical_{tag}"] = [r for _, r in empirical_reliability_curve(sim, table["theta"])]
        fps[tag] = sim.mean_fps
    return {"fig2b": table}, {"scenario": "fig2b", "seed": seed, "mean_fps": fps}


def fig2c(seed: int):
    """Empirical and analytical curves within low/mid/high demand thirds."""
    sc = _scenario("fig2a", seed)
    dev = _uniform_device(sc)
    cb, db = dev.capacity.bounds, dev.demand.bounds
    edges = [db.lo + db.width / 3, db.lo + 2 * db.width / 3]
    parts = split_by_demand(run_stream_sim(sc.trace, sc.cost_model, sc.profile, 1.0), edges)
    cuts = [db.lo, *edges, db.hi]
    grid = sc.grid
    table = {"theta": grid}
    counts = {}
    for tag, part, a, b in zip(("low", "mid", "high"), parts, cuts, cuts[1:]):
        table[f"analytical_{tag}"] = [reliability_mi(cb, Bounds(a, b), t) for t in grid]
        table[f"empirical_{tag}"] = (
            [r for _, r in empirical_reliability_curve(part, grid)] if part.n_frames else [math.nan] * len(grid)
        )
        counts[tag] = part.n_frames
    return {"fig2c": table}, {"scenario": "fig2c", "seed": seed, "demand_edges": edges, "frames": counts}


def fit_device(sim: SimResult, cap_bounds: Bounds, dem_bounds: Bounds, n: int | None = None) -> DeviceModel:
    """MLE fit on the first ``n`` resampling blocks (one sample per block)."""
    blocks = sim.block_starts()
    k = blocks.n_frames if n is None else n
    cap = fit_truncnorm_mle(ObservationTrace(tuple(blocks.capacity[:k]), cap_bounds))
    dem = fit_truncnorm_mle(ObservationTrace(tuple(blocks.demand[:k]), dem_bounds))
    return DeviceModel(cap.model, dem.model, "fitted")


def fig4a(seed: int, n_mc: int = MC_TRIALS):
    sc = _scenario("fig4a", seed)
    true_dev = sc.device()
    cb, db = true_dev.capacity.bounds, true_dev.demand.bounds
    sim = run_stream_sim(sc.trace, sc.cost_model, sc.profile, sc.theta)
    fitted = fit_device(sim, cb, db)
    grid = sc.grid
    mc, lo, hi = _mc_column(fitted, grid, seed, n_mc)
    table = {
        "theta": grid,
        "mi": [reliability_mi(cb, db, t) for t in grid],
        "historical": [reliability(fitted, t) for t in grid],
        "true": [reliability(true_dev, t) for t in grid],
        "mc": mc,
        "mc_lo": lo,
        "mc_hi": hi,
        "empirical": [r for _, r in empirical_reliability_curve(sim, grid)],
    }
    summary = {
        "scenario": "fig4a",
        "seed": seed,
        "theta": sc.theta,
        "mi": reliability_mi(cb, db, sc.theta),
        "historical": reliability(fitted, sc.theta),
        "true": reliability(true_dev, sc.theta),
        "fitted": {
            "capacity": [fitted.capacity.mu, fitted.capacity.sigma],
            "demand": [fitted.demand.mu, fitted.demand.sigma],
        },
    }
    return {"fig4a": table}, summary


def convergence_run(seed: int, sizes=FIG6_SIZES):
    """Online MLE over the block samples of one ``fig6`` trace."""
    sc = _scenario("fig6", seed)
    true_dev = sc.device()
    cb, db = true_dev.capacity.bounds, true_dev.demand.bounds
    blocks = run_stream_sim(sc.trace, sc.cost_model, sc.profile, sc.theta).block_starts()
    if max(sizes) > blocks.n_frames:
        raise ConfigError(f"only {blocks.n_frames} blocks available", path="sizes")
    cs, ds = OnlineState.empty(cb), OnlineState.empty(db)
    rows = []
    want = set(sizes)
    for k in range(max(sizes)):
        cs = online_update(cs, blocks.capacity[k])
        ds = online_update(ds, blocks.demand[k])
        if k + 1 in want:
            est = DeviceModel(cs.model, ds.model, "online")
            rows.append((k + 1, reliability(est, sc.theta), *cs.params, *ds.params))
    return rows, reliability(true_dev, sc.theta), reliability_mi(cb, db, sc.theta)


def fig6(seed: int):
    rows, r_true, r_mi = convergence_run(seed)
    cols = ("n", "reliability", "mu_c", "sigma_c", "mu_d", "sigma_d")
    table = {c: [row[i] for row in rows] for i, c in enumerate(cols)}
    table["abs_error"] = [abs(r - r_true) for r in table["reliability"]]
    summary = {"scenario": "fig6", "seed": seed, "true": r_true, "mi": r_mi, "final": table["reliability"][-1]}
    return {"fig6": table}, summary


def fig7(seed: int):
    sc = _scenario("fig7", seed)
    dep = sc.deployment
    rep = run_series_deployment(dep, sc.trace, sc.cost_model, sc.profile)
    grid = sc.grid
    curve = rep.series_curve(grid)
    table = {"theta": grid}
    for k in range(dep.n_workers):
        table[f"worker{k + 1}"] = [row[1][k] for row in curve]
    table["system"] = [row[2] for row in curve]
    # analytical: worker i must sustain alpha_i * theta on the full-frame demand
    d = sc.cost_model.demand(sc.trace.scale_range[0])
    an = []
    for t in grid:
        prod = 1.0
        for r, a in zip(dep.worker_thread_ranges, dep.partition.fractions):
            c = [sc.profile.capacity(x) for x in r]
            prod *= UniformModel(Bounds(*c)).sf(a * t * d) if c[0] < c[1] else float(c[0] >= a * t * d)
        an.append(prod)
    table["system_analytical"] = an
    summary = {"scenario": "fig7", "seed": seed, **rep.to_dict()}
    return {"fig7": table}, summary


def _heterogeneous(lo: float, hi: float, m: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {f"dev{i:02d}": float(r) for i, r in enumerate(rng.uniform(lo, hi, m))}


def fig8a(seed: int, pool_size: int = 20):
    het = _heterogeneous(0.75, 0.95, pool_size, seed)
    table = {"epsilon": list(EPSILONS)}
    for r in (0.90, 0.95, 0.99):
        pool = uniform_reliabilities(r, pool_size)
        table[f"n_series_r{r:.2f}"] = [select_series(pool, e).n_star for e in EPSILONS]
        table[f"closed_form_r{r:.2f}"] = [min(series_closed_form(r, e), pool_size) for e in EPSILONS]
    table["n_series_heterogeneous"] = [select_series(het, e).n_star for e in EPSILONS]
    return {"fig8a": table}, {"scenario": "fig8a", "seed": seed, "heterogeneous": het}


def fig8b(seed: int, pool_size: int = 20):
    het = _heterogeneous(0.4, 0.8, pool_size, seed)
    table = {"epsilon": list(EPSILONS)}
    for r in (0.5, 0.7, 0.9):
        pool = uniform_reliabilities(r, pool_size)
        table[f"n_parallel_r{r:.2f}"] = [select_parallel(pool, e).n_star for e in EPSILONS]
    table["n_parallel_heterogeneous"] = [select_parallel(het, e).n_star for e in EPSILONS]
    r_min = min(het.values())
    table["worst_case_bound"] = [parallel_worst_case_bound(r_min, e) for e in EPSILONS]
    return {"fig8b": table}, {"scenario": "fig8b", "seed": seed, "heterogeneous": het, "r_min": r_min}


SWEEPS = {
    "fig2a": fig2a,
    "fig2b": fig2b,
    "fig2c": fig2c,
    "fig4a": fig4a,
    "fig6": fig6,
    "fig7": fig7,
    "fig8a": fig8a,
    "fig8b": fig8b,
}


def run_sweep(name: str, seed: int):
    if name not in SWEEPS:
        raise ConfigError(f"unknown sweep {name!r}; choose from {sorted(SWEEPS)}", path="name")
    return SWEEPS[name](seed)


def run_sweeps(names, seed: int, workers: int = 1):
    """Run several sweeps; results come back in the order of ``names``."""
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        return list(ex.map(lambda nm: (nm, run_sweep(nm, seed)), names))
