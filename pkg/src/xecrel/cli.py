"""Command-line entry point.

Exit codes: 0 success (including an infeasible selection, reported in the
output), 2 bad arguments or input files, 3 numerical non-convergence,
4 an output could not be written.  Failures print one JSON object on stderr.

Outputs go to ``--out`` (or ``--out-dir`` for ``sweep``).  Without it they go
under ``$XECREL_OUT_DIR`` when set, else to stdout.  Every file output gets a
manifest next to it; ``xecrel replay MANIFEST`` reruns the recorded command.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from xecrel import artifacts
from xecrel.errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleError,
    OutputError,
    QuadratureError,
    XecrelError,
)

OUT_DIR_ENV = "XECREL_OUT_DIR"
OUTPUT_FLAGS = ("--out", "--out-dir")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", path="argv")


@dataclass
class Outcome:
    files: dict  # name -> text, in write order
    params: dict
    seed: object = None
    inputs: list = field(default_factory=list)
    exit_code: int = 0
    error: Exception | None = None


# -- argument helpers ---------------------------------------------------------


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    return lo, hi


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_output(p, fmt=True):
    p.add_argument("--out", help="output file (default: $%s/<command>.<ext> or stdout)" % OUT_DIR_ENV)
    if fmt:
        p.add_argument("--format", choices=("csv", "json"), default=None)


def _add_device(p, need_bounds=True):
    g = p.add_argument_group("device model")
    g.add_argument("--ctype", choices=("uniform", "truncnorm"), default="uniform")
    g.add_argument("--dtype", choices=("uniform", "truncnorm"), default=None, help="defaults to --ctype")
    g.add_argument("--cbounds", type=_pair, required=need_bounds, metavar="LO,HI")
    g.add_argument("--dbounds", type=_pair, required=need_bounds, metavar="LO,HI")
    g.add_argument("--cmu", type=float)
    g.add_argument("--csigma", type=float)
    g.add_argument("--dmu", type=float)
    g.add_argument("--dsigma", type=float)


def _model(kind, bounds, mu, sigma, side):
    from xecrel.probkernel import Bounds, TruncNormModel, UniformModel

    b = Bounds.of(bounds)
    if kind == "uniform":
        return UniformModel(b)
    if mu is None or sigma is None:
        raise UsageError(f"truncnorm {side} needs --{side[0]}mu and --{side[0]}sigma", path=f"{side[0]}mu")
    return TruncNormModel(mu, sigma, b)


def _device(ns):
    from xecrel.reliability import DeviceModel

    cap = _model(ns.ctype, ns.cbounds, ns.cmu, ns.csigma, "capacity")
    dem = _model(ns.dtype or ns.ctype, ns.dbounds, ns.dmu, ns.dsigma, "demand")
    return DeviceModel(cap, dem, "device")


def _device_params(ns) -> dict:
    keys = ("ctype", "dtype", "cbounds", "dbounds", "cmu", "csigma", "dmu", "dsigma")
    return {k: getattr(ns, k) for k in keys if getattr(ns, k, None) is not None}


def _table_text(columns, fmt):
    return artifacts.table_json(columns) if fmt == "json" else artifacts.table_csv(columns)


# -- subcommands --------------------------------------------------------------


def cmd_reliability(ns) -> Outcome:
    from xecrel.reliability import parse_grid, reliability_curve

    dev = _device(ns)
    curve = reliability_curve(dev, parse_grid(ns.thetas))
    cols = {"theta": [t for t, _ in curve], "reliability": [r for _, r in curve]}
    fmt = ns.format or "csv"
    regime = "mi" if dev.is_mi else "historical"
    return Outcome({f"reliability.{fmt}": _table_text(cols, fmt)}, {**_device_params(ns), "thetas": ns.thetas, "regime": regime})


def cmd_fit(ns) -> Outcome:
    from xecrel.estimation import fit_truncnorm_mle, load_trace

    trace = load_trace(ns.trace, sidecar=ns.sidecar, bounds=ns.bounds, column=ns.column)
    if ns.decimate > 1:
        trace = trace.decimated(ns.decimate)
    if ns.head is not None:
        trace = trace.head(ns.head)
    res = fit_truncnorm_mle(trace)
    inputs = [ns.trace]
    side = ns.sidecar or (None if ns.bounds else str(Path(ns.trace).with_suffix(".json")))
    if side:
        inputs.append(side)
    params = {"column": ns.column, "decimate": ns.decimate, "head": ns.head, "bounds": ns.bounds}
    out = Outcome({"fit.json": artifacts.dumps(res.to_dict())}, params, inputs=inputs)
    if not res.converged:
        out.exit_code = 3
        out.error = ConvergenceError(f"MLE did not converge (projected gradient {res.grad_norm:.3g})")
    return out


def cmd_partition(ns) -> Outcome:
    from xecrel.scenarios import load_pool
    from xecrel.system import optimize_partition

    pool = load_pool(ns.pool)
    params = {"theta": ns.theta, "starts": ns.starts}
    try:
        res = optimize_partition(pool, ns.theta, n_starts=ns.starts, seed=ns.seed)
        doc = {"feasible": True, **res.to_dict(pool.labels)}
    except InfeasibleError as exc:
        doc = {"feasible": False, "reason": str(exc), "labels": pool.labels}
    return Outcome({"partition.json": artifacts.dumps(doc)}, params, seed=ns.seed, inputs=[ns.pool])


def cmd_select(ns) -> Outcome:
    from xecrel.system import (
        parallel_worst_case_bound,
        select_parallel,
        select_series,
        series_closed_form,
        uniform_reliabilities,
    )

    inputs = []
    extra = {}
    if ns.uniform_r is not None:
        if ns.pool_size is None:
            raise UsageError("--uniform-r needs --pool-size", path="pool_size")
        rels = uniform_reliabilities(ns.uniform_r, ns.pool_size)
        if 0 < ns.uniform_r < 1 and 0 < ns.epsilon < 1:
            if ns.mode == "series":
                extra["closed_form"] = series_closed_form(ns.uniform_r, ns.epsilon)
            else:
                extra["worst_case_bound"] = parallel_worst_case_bound(ns.uniform_r, ns.epsilon)
    elif ns.reliabilities is not None:
        rels = {f"dev{i}": r for i, r in enumerate(ns.reliabilities)}
    elif ns.pool is not None:
        from xecrel.scenarios import load_pool

        if ns.theta is None:
            raise UsageError("--pool needs --theta", path="theta")
        rels = load_pool(ns.pool).reliabilities(ns.theta)
        inputs.append(ns.pool)
    else:
        raise UsageError("give one of --uniform-r/--pool-size, --reliabilities or --pool", path="argv")
    res = (select_series if ns.mode == "series" else select_parallel)(rels, ns.epsilon)
    doc = {**res.to_dict(), "epsilon": ns.epsilon, **extra}
    params = {
        "mode": ns.mode,
        "epsilon": ns.epsilon,
        "uniform_r": ns.uniform_r,
        "pool_size": ns.pool_size,
        "reliabilities": ns.reliabilities,
        "theta": ns.theta,
    }
    return Outcome({"select.json": artifacts.dumps(doc)}, params, inputs=inputs)


def cmd_simulate(ns) -> Outcome:
    from xecrel.scenarios import load_scenario
    from xecrel.simharness import run_stream_sim

    sc = load_scenario(ns.scenario).with_seed(ns.seed)
    theta = sc.theta if ns.theta is None else ns.theta
    res = run_stream_sim(sc.trace, sc.cost_model, sc.profile, theta)
    files = {"simulate.csv": res.to_csv(), "simulate.summary.json": artifacts.dumps(res.summary())}
    return Outcome(files, {"theta": theta}, seed=ns.seed, inputs=[ns.scenario])


def cmd_mc(ns) -> Outcome:
    from xecrel.mcoracle import mc_single_reliability, mc_system_reliability
    from xecrel.system import Allocation, parallel_reliability, partitioned_reliability, series_reliability

    inputs = []
    params = {"theta": ns.theta, "n": ns.n, "config": ns.config}
    if ns.pool is not None:
        from xecrel.scenarios import load_pool

        pool = load_pool(ns.pool)
        inputs.append(ns.pool)
        if ns.config == "series":
            conf, analytic = "series", series_reliability(pool, ns.theta)
        elif ns.config == "parallel":
            conf, analytic = "parallel", parallel_reliability(pool, ns.theta)
        else:
            alloc = Allocation.equal(len(pool)) if ns.alloc is None else Allocation(tuple(ns.alloc))
            conf, analytic = alloc, partitioned_reliability(pool, alloc, ns.theta)
            params["alloc"] = list(alloc.fractions)
        est = mc_system_reliability(pool, conf, ns.theta, ns.n, ns.seed, workers=ns.workers)
    else:
        if ns.cbounds is None or ns.dbounds is None:
            raise UsageError("mc needs --pool or --cbounds/--dbounds", path="argv")
        from xecrel.reliability import reliability

        dev = _device(ns)
        params.update(_device_params(ns))
        est = mc_single_reliability(dev, ns.theta, ns.n, ns.seed, workers=ns.workers)
        analytic = reliability(dev, ns.theta)
    doc = {**est.to_dict(), "analytical": analytic, "covers_analytical": est.covers(analytic)}
    return Outcome({"mc.json": artifacts.dumps(doc)}, params, seed=ns.seed, inputs=inputs)


def cmd_sweep(ns) -> Outcome:
    from xecrel.sweeps import SWEEPS, run_sweeps

    names = sorted(SWEEPS) if ns.name == "all" else [ns.name]
    fmt = ns.format or "csv"
    files = {}
    for name, (tables, summary) in run_sweeps(names, ns.seed, workers=ns.workers):
        for stem, cols in tables.items():
            files[f"{stem}.{fmt}"] = _table_text(cols, fmt)
        files[f"{name}.summary.json"] = artifacts.dumps(summary)
    return Outcome(files, {"name": ns.name, "format": fmt}, seed=ns.seed)


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="xecrel", description="Computational reliability of volatile edge devices.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reliability", help="reliability curve over a threshold grid")
    _add_device(p)
    p.add_argument("--thetas", required=True, help="'start:stop:step' (inclusive) or 'a,b,c'")
    _add_output(p)

    p = sub.add_parser("fit", help="truncated-normal MLE from a frame,value trace")
    p.add_argument("trace")
    p.add_argument("--sidecar", help="JSON with {'bounds': [lo, hi]} (default: trace stem + .json)")
    p.add_argument("--bounds", type=_pair, metavar="LO,HI", help="declared bounds; overrides the sidecar")
    p.add_argument("--column", default="value")
    p.add_argument("--decimate", type=int, default=1, help="keep one sample per K frames")
    p.add_argument("--head", type=int, help="use only the first N samples")
    _add_output(p, fmt=False)

    p = sub.add_parser("partition", help="reliability-maximising work split for a device pool")
    p.add_argument("pool")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--starts", type=int, default=4, help="random multi-starts for non-log-concave pools")
    p.add_argument("--seed", type=int, default=0, help="seed for the random multi-starts")
    _add_output(p, fmt=False)

    p = sub.add_parser("select", help="device count for a target system reliability")
    p.add_argument("--mode", choices=("series", "parallel"), required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--uniform-r", type=float)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--reliabilities", type=_floats)
    p.add_argument("--pool")
    p.add_argument("--theta", type=float)
    _add_output(p, fmt=False)

    p = sub.add_parser("simulate", help="run a trace scenario, emit per-frame CSV and a summary")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--theta", type=float, help="override the scenario threshold")
    _add_output(p, fmt=False)

    p = sub.add_parser("mc", help="Monte Carlo estimate with a 3-sigma band")
    _add_device(p, need_bounds=False)
    p.add_argument("--pool")
    p.add_argument("--config", choices=("series", "parallel", "partitioned"), default="series")
    p.add_argument("--alloc", type=_floats, help="fractions for --config partitioned (default: equal)")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_output(p, fmt=False)

    from xecrel.sweeps import SWEEPS

    p = sub.add_parser("sweep", help="regenerate a named figure dataset")
    p.add_argument("name", choices=[*sorted(SWEEPS), "all"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", help="directory for the tables (default: $%s or stdout)" % OUT_DIR_ENV)
    p.add_argument("--format", choices=("csv", "json"), default=None)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="new output file")
    p.add_argument("--out-dir", help="new output directory (sweep manifests)")
    return ap


HANDLERS = {
    "reliability": cmd_reliability,
    "fit": cmd_fit,
    "partition": cmd_partition,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "sweep": cmd_sweep,
}


# -- output -------------------------------------------------------------------


def strip_outputs(argv) -> list[str]:
    """``argv`` without output-location flags, as recorded in manifests."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in OUTPUT_FLAGS:
            skip = True
            continue
        if any(a.startswith(f + "=") for f in OUTPUT_FLAGS):
            continue
        out.append(a)
    return out


def _targets(ns, outcome: Outcome, stdout) -> dict | None:
    """Map artifact names to paths, or ``None`` to print to stdout."""
    names = list(outcome.files)
    env_dir = os.environ.get(OUT_DIR_ENV)
    if ns.command == "sweep":
        d = ns.out_dir or env_dir
        return None if d is None else {n: Path(d) / n for n in names}
    if ns.out:
        first = Path(ns.out)
        stem = first.name[: -len(first.suffix)] if first.suffix else first.name
        paths = {names[0]: first}
        for n in names[1:]:
            paths[n] = first.with_name(stem + n[n.index(".") :])
        return paths
    if env_dir:
        return {n: Path(env_dir) / n for n in names}
    return None


def _emit(ns, argv, outcome: Outcome, stdout):
    targets = _targets(ns, outcome, stdout)
    if targets is None:
        for text in outcome.files.values():
            stdout.write(text)
        return
    for name, text in outcome.files.items():
        artifacts.write_text(targets[name], text)
    first = targets[next(iter(outcome.files))]
    mpath = first.parent / "manifest.json" if ns.command == "sweep" else artifacts.manifest_path_for(first)
    man = artifacts.manifest(
        ns.command, strip_outputs(argv), outcome.params, outcome.seed, outcome.inputs, list(targets.values())
    )
    artifacts.write_text(mpath, artifacts.dumps(man))


def _error_doc(exc: BaseException, code: int) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "path", None) is not None:
        doc["path"] = exc.path
    return doc


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, OutputError):
        return 4
    if isinstance(exc, (ConvergenceError, QuadratureError)):
        return 3
    if isinstance(exc, (ConfigError, XecrelError, ValueError)):
        return 2
    return 1


def _replay(ns, stdout, stderr) -> int:
    from xecrel.artifacts import sha256

    path = Path(ns.manifest)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}", path=str(path))
    try:
        man = json.loads(path.read_text())
        argv = list(man["argv"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path} is not a manifest: {exc}", path=str(path)) from exc
    for inp, digest in man.get("inputs", {}).items():
        if not Path(inp).exists():
            raise ConfigError(f"recorded input missing: {inp}", path=inp)
        if sha256(inp) != digest:
            raise ConfigError(f"recorded input changed since the manifest was written: {inp}", path=inp)
    if man.get("versions") != artifacts.versions():
        stderr.write(json.dumps({"warning": "versions differ from manifest", "recorded": man.get("versions")}) + "\n")
    if argv and argv[0] == "sweep":
        argv += ["--out-dir", ns.out_dir] if ns.out_dir else []
    elif ns.out:
        argv += ["--out", ns.out]
    return main(argv, stdout=stdout, stderr=stderr)


def main(argv=None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "replay":
            return _replay(ns, stdout, stderr)
        outcome = HANDLERS[ns.command](ns)
        _emit(ns, argv, outcome, stdout)
        if outcome.error is not None:
            stderr.write(json.dumps(_error_doc(outcome.error, outcome.exit_code)) + "\n")
        return outcome.exit_code
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code plus JSON
        code = exit_code_for(exc)
        if code == 1:
            raise
        stderr.write(json.dumps(_error_doc(exc, code)) + "\n")
        return code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
