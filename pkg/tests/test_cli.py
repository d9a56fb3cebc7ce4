import io
import json
from pathlib import Path

import pytest

from xecrel import cli
from xecrel.estimation import ObservationTrace, fit_truncnorm_mle, load_trace
from xecrel.mcoracle import mc_single_reliability, mc_system_reliability
from xecrel.reliability import DeviceModel, parse_grid, reliability_mi
from xecrel.scenarios import load_pool, load_scenario
from xecrel.simharness import run_stream_sim
from xecrel.system import Allocation, optimize_partition, select_parallel, uniform_reliabilities

ROOT = Path(__file__).resolve().parents[1]
POOL = str(ROOT / "scenarios" / "pool-two-device.json")
FIG2A = str(ROOT / "scenarios" / "fig2a.json")


def run(argv, monkeypatch=None):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(autouse=True)
def no_env_outdir(monkeypatch):
    monkeypatch.delenv(cli.OUT_DIR_ENV, raising=False)


def test_reliability_curve_matches_library():
    code, out, _ = run(["reliability", "--ctype", "uniform", "--cbounds", "55,152", "--dbounds", "55,278", "--thetas", "1:4:0.25"])
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    grid = parse_grid("1:4:0.25")
    assert [float(t) for t, _ in rows] == grid
    rs = [float(r) for _, r in rows]
    assert all(a >= b for a, b in zip(rs, rs[1:]))
    for t, r in zip(grid, rs):
        assert r == pytest.approx(reliability_mi((55, 152), (55, 278), t), rel=1e-8, abs=1e-12)


def test_reliability_truncnorm_needs_params():
    code, _, err = run(["reliability", "--ctype", "truncnorm", "--cbounds", "55,152", "--dbounds", "55,278", "--thetas", "1"])
    assert code == 2 and json.loads(err)["path"] == "cmu"


def test_select_parallel_example():
    code, out, _ = run(["select", "--mode", "parallel", "--epsilon", "0.99", "--uniform-r", "0.9", "--pool-size", "20"])
    doc = json.loads(out)
    assert code == 0 and doc["n_star"] == 2
    assert doc == {**doc, **select_parallel(uniform_reliabilities(0.9, 20), 0.99).to_dict()}


def test_select_infeasible_is_not_an_error():
    code, out, _ = run(["select", "--mode", "series", "--epsilon", "0.99", "--reliabilities", "0.9,0.8"])
    assert code == 0 and json.loads(out)["feasible"] is False


def test_missing_scenario_names_path():
    code, out, err = run(["simulate", "missing-file.json", "--seed", "1"])
    doc = json.loads(err)
    assert code == 2 and out == ""
    assert doc["path"] == "missing-file.json" and doc["exit_code"] == 2


def test_seed_is_mandatory():
    for argv in (["simulate", FIG2A], ["mc", "--cbounds", "1,2", "--dbounds", "1,2", "--theta", "1"], ["sweep", "fig2a"]):
        code, _, err = run(argv)
        assert code == 2 and "--seed" in json.loads(err)["message"]


def test_schema_violation_path(tmp_path):
    doc = json.loads(Path(FIG2A).read_text())
    doc["trace"]["n_frames"] = -3
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    code, _, err = run(["simulate", str(p), "--seed", "1"])
    assert code == 2 and json.loads(err)["path"] == "trace.n_frames"


def test_unwritable_output_exit_4(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    code, _, err = run(["reliability", "--cbounds", "1,2", "--dbounds", "1,2", "--thetas", "1", "--out", str(blocker / "x.csv")])
    assert code == 4 and json.loads(err)["exit_code"] == 4


def test_partition_matches_library():
    code, out, _ = run(["partition", POOL, "--theta", "5"])
    res = optimize_partition(load_pool(POOL), 5.0)
    doc = json.loads(out)
    assert code == 0 and doc["feasible"]
    assert doc["fractions"] == pytest.approx(list(res.allocation.fractions), abs=1e-9)
    assert doc["labels"] == ["A", "B"]


def test_partition_infeasible_reported():
    code, out, _ = run(["partition", POOL, "--theta", "1000"])
    assert code == 0 and json.loads(out)["feasible"] is False


def test_mc_matches_library():
    code, out, _ = run(["mc", "--cbounds", "55,152", "--dbounds", "55,278", "--theta", "2", "--n", "50000", "--seed", "4"])
    lib = mc_single_reliability(DeviceModel.uniform((55, 152), (55, 278)), 2.0, 50_000, 4)
    doc = json.loads(out)
    assert code == 0 and doc["estimate"] == pytest.approx(lib.estimate, rel=1e-9)
    assert doc["covers_analytical"]


def test_mc_partitioned_pool():
    code, out, _ = run(["mc", "--pool", POOL, "--config", "partitioned", "--alloc", "0.4,0.6", "--theta", "5", "--n", "20000", "--seed", "1"])
    lib = mc_system_reliability(load_pool(POOL), Allocation((0.4, 0.6)), 5.0, 20_000, 1)
    assert code == 0 and json.loads(out)["estimate"] == pytest.approx(lib.estimate, rel=1e-9)


def test_simulate_matches_library(tmp_path):
    code, _, _ = run(["simulate", FIG2A, "--seed", "7", "--out", str(tmp_path / "sim.csv")])
    sc = load_scenario(FIG2A).with_seed(7)
    lib = run_stream_sim(sc.trace, sc.cost_model, sc.profile, sc.theta)
    assert code == 0
    assert (tmp_path / "sim.csv").read_text() == lib.to_csv()
    assert json.loads((tmp_path / "sim.summary.json").read_text())["n_blocks"] == 130
    assert (tmp_path / "sim.csv.manifest.json").exists()


def test_fit_from_simulation_column(tmp_path):
    run(["simulate", FIG2A, "--seed", "7", "--out", str(tmp_path / "sim.csv")])
    code, out, _ = run(["fit", str(tmp_path / "sim.csv"), "--column", "capacity_gflops", "--bounds", "55,152", "--decimate", "20"])
    trace = load_trace(tmp_path / "sim.csv", bounds=(55, 152), column="capacity_gflops").decimated(20)
    lib = fit_truncnorm_mle(trace)
    doc = json.loads(out)
    assert code == 0 and doc["n_samples"] == 130
    assert doc["mu"] == pytest.approx(lib.mu, rel=1e-8)


def test_fit_missing_sidecar(tmp_path):
    (tmp_path / "t.csv").write_text("frame,value\n0,60\n1,70\n")
    code, _, err = run(["fit", str(tmp_path / "t.csv")])
    assert code == 2 and json.loads(err)["path"].endswith("t.json")


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
    code, out, _ = run(["select", "--mode", "series", "--epsilon", "0.9", "--uniform-r", "0.99", "--pool-size", "20"])
    assert code == 0 and out == ""
    assert json.loads((tmp_path / "select.json").read_text())["n_star"] == 10
    assert (tmp_path / "select.json.manifest.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", FIG2A, "--seed", "3"],
        ["mc", "--cbounds", "55,152", "--dbounds", "55,278", "--theta", "1.5", "--n", "20000", "--seed", "8"],
        ["mc", "--pool", POOL, "--config", "parallel", "--theta", "5", "--n", "20000", "--seed", "8"],
        ["partition", POOL, "--theta", "5", "--seed", "2"],
    ],
)
def test_replay_byte_identical(tmp_path, argv):
    first = tmp_path / "a" / "out.dat"
    code, _, _ = run(argv + ["--out", str(first)])
    assert code == 0
    manifest = first.with_name("out.dat.manifest.json")
    second = tmp_path / "b" / "out.dat"
    code, _, _ = run(["replay", str(manifest), "--out", str(second)])
    assert code == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()


def test_sweep_and_replay(tmp_path):
    code, _, _ = run(["sweep", "fig2a", "--seed", "2590", "--out-dir", str(tmp_path / "a")])
    assert code == 0
    header = (tmp_path / "a" / "fig2a.csv").read_text().splitlines()[0]
    assert header == "theta,analytical,mc,mc_lo,mc_hi,empirical"
    code, _, _ = run(["replay", str(tmp_path / "a" / "manifest.json"), "--out-dir", str(tmp_path / "b")])
    assert code == 0
    for f in (tmp_path / "a").iterdir():
        assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()


def test_replay_detects_changed_input(tmp_path):
    pool = tmp_path / "pool.json"
    pool.write_text(Path(POOL).read_text())
    run(["partition", str(pool), "--theta", "5", "--out", str(tmp_path / "p.json")])
    pool.write_text(pool.read_text().replace("152", "150"))
    code, _, err = run(["replay", str(tmp_path / "p.json.manifest.json")])
    assert code == 2 and "changed" in json.loads(err)["message"]


def test_sweep_json_format(tmp_path):
    code, _, _ = run(["sweep", "fig8a", "--seed", "1", "--format", "json", "--out-dir", str(tmp_path)])
    doc = json.loads((tmp_path / "fig8a.json").read_text())
    assert code == 0 and doc["columns"][0] == "epsilon"


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "xecrel", "select", "--mode", "parallel", "--epsilon", "0.99", "--uniform-r", "0.5", "--pool-size", "20"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["n_star"] == 7
