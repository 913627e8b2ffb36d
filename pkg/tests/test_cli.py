import json
import os

import numpy as np
import pytest

from ssmr import cli, models, simulate as sim
from ssmr.models import PolynomialSystem, PolyTerm, RnnModel

from systems import make_fastslow_quadratic


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


@pytest.fixture
def decay_model_file(tmp_path):
    m = RnnModel(n_units=2, n_inputs=1, n_outputs=1, tau=1.0,
                 W=np.zeros((2, 2)), B=np.zeros((2, 1)), Y=np.ones((1, 2)))
    path = tmp_path / "decay.json"
    models.save_model(m, path)
    return str(path)


@pytest.fixture
def quadratic_model_file(tmp_path):
    system, info = make_fastslow_quadratic(N=6, seed=7)
    path = tmp_path / "quad.json"
    models.save_model(system, path)
    return str(path), info


def run(args):
    return cli.main(args)


def test_simulate_decay_endpoint(tmp_path, decay_model_file):
    cfg = write_json(tmp_path / "cfg.json", {
        "model": decay_model_file,
        "output_dir": str(tmp_path / "out"),
        "simulation": {"dt": 1e-3, "t_end": 2.0, "x0": [1.0, -0.5]},
    })
    assert run(["simulate", cfg]) == 0
    rows = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()
    last = [float(v) for v in rows[-1].split(",")]
    expect = np.exp(-2.0) * np.array([1.0, -0.5])
    assert np.max(np.abs(np.array(last[1:]) - expect)) < 1e-8
    assert (tmp_path / "out" / "run.json").exists()
    assert (tmp_path / "out" / "trajectory.png").exists()


def test_rerun_from_provenance_is_byte_identical(tmp_path, decay_model_file):
    cfg = write_json(tmp_path / "cfg.json", {
        "model": decay_model_file,
        "output_dir": str(tmp_path / "out1"),
        "simulation": {"dt": 1e-2, "t_end": 1.0, "x0": [0.3, 0.7],
                       "noise": {"amplitude": 0.05, "bound": 3.0, "seed": 4}},
    })
    assert run(["simulate", cfg, "--no-plot"]) == 0
    run_json = str(tmp_path / "out1" / "run.json")
    assert run(["simulate", run_json, "--out-dir", str(tmp_path / "out2"),
                "--no-plot"]) == 0
    a = (tmp_path / "out1" / "trajectory.csv").read_bytes()
    b = (tmp_path / "out2" / "trajectory.csv").read_bytes()
    assert a == b


def test_missing_model_exit_2(tmp_path, capsys):
    cfg = write_json(tmp_path / "cfg.json", {
        "model": str(tmp_path / "nope.json"),
        "simulation": {"dt": 1e-2, "t_end": 1.0},
    })
    assert run(["simulate", cfg]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_divergence_exit_3(tmp_path):
    blow = PolynomialSystem(A=[[0.0]], terms=[PolyTerm([1.0], [([1.0], 2)])])
    mpath = tmp_path / "blow.json"
    models.save_model(blow, mpath)
    cfg = write_json(tmp_path / "cfg.json", {
        "model": str(mpath),
        "output_dir": str(tmp_path / "out"),
        "simulation": {"dt": 1e-3, "t_end": 2.0, "x0": [2.0]},
    })
    assert run(["simulate", cfg]) == 3


def test_override_and_seed_flags(tmp_path, decay_model_file):
    cfg = write_json(tmp_path / "cfg.json", {
        "model": decay_model_file,
        "output_dir": str(tmp_path / "out"),
        "simulation": {"dt": 1e-2, "t_end": 1.0, "x0": [1.0, 1.0]},
    })
    assert run(["simulate", cfg, "--set", "simulation.t_end=0.5",
                "--seed", "9", "--no-plot"]) == 0
    doc = json.loads((tmp_path / "out" / "run.json").read_text())
    assert doc["config"]["simulation"]["t_end"] == 0.5
    assert doc["config"]["seed"] == 9
    assert doc["config"]["plot"] is False


def test_fixed_points_command(tmp_path, quadratic_model_file):
    mpath, info = quadratic_model_file
    cfg = write_json(tmp_path / "cfg.json", {
        "model": mpath,
        "output_dir": str(tmp_path / "out"),
        "fixed_points": {"n_random_seeds": 10, "seed_radius": 0.5,
                         "newton_tol": 1e-10},
    })
    assert run(["fixed-points", cfg]) == 0
    doc = json.loads((tmp_path / "out" / "fixed_points.json").read_text())
    assert len(doc["points"]) >= 1
    x0 = np.asarray(doc["points"][0]["x0"])
    assert np.linalg.norm(x0) < 1e-8


def test_fit_ssm_recovers_quadratic_chart(tmp_path, quadratic_model_file):
    mpath, info = quadratic_model_file
    cfg = write_json(tmp_path / "cfg.json", {
        "model": mpath,
        "output_dir": str(tmp_path / "out"),
        "seed": 12,
        "ssm": {"order": 2, "dimension": 1},
        "ensemble": {"n_traj": 24, "split_fraction": 0.8, "dt": 0.01,
                     "t_end": 6.0,
                     "sampler": {"type": "ball", "center": "fixed_point",
                                 "radius": 0.5},
                     "trim": {"rate": info["slowest_ignored"], "factor": 8.0}},
    })
    assert run(["fit-ssm", cfg, "--no-plot"]) == 0
    doc = json.loads((tmp_path / "out" / "chart.json").read_text())
    H = np.asarray(doc["H"])
    coeff = info["fast_driven"] @ H[:, 0]
    assert coeff == pytest.approx(0.125, abs=1e-3)
    assert (tmp_path / "out" / "traj_manifest.json").exists()


def test_fit_reduced_and_portrait(tmp_path, quadratic_model_file):
    mpath, info = quadratic_model_file
    out = str(tmp_path / "out")
    cfg = write_json(tmp_path / "cfg.json", {
        "model": mpath,
        "output_dir": out,
        "seed": 12,
        "ssm": {"order": 2, "dimension": 1},
        "reduced": {"order": 2, "scheme": "central-4th-order"},
        "ensemble": {"n_traj": 24, "split_fraction": 0.8, "dt": 0.01,
                     "t_end": 6.0,
                     "sampler": {"type": "ball", "center": "fixed_point",
                                 "radius": 0.5},
                     "trim": {"rate": info["slowest_ignored"], "factor": 8.0}},
    })
    assert run(["fit-reduced", cfg, "--no-plot"]) == 0
    red = json.loads((tmp_path / "out" / "reduced.json").read_text())
    W = np.asarray(red["W_r"])
    assert W[0, 0] == pytest.approx(-1.0, abs=1e-2)
    diag = json.loads((tmp_path / "out" / "reduced_diagnostics.json").read_text())
    assert diag["nmte_test"] < 1e-2

    cfg2 = write_json(tmp_path / "cfg2.json", {
        "model": mpath,
        "output_dir": str(tmp_path / "out2"),
        "portrait": {"reduced_model": os.path.join(out, "reduced.json"),
                     "chart": os.path.join(out, "chart.json"),
                     "domain": [[-1.0, 1.0]]},
    })
    assert run(["portrait", cfg2, "--no-plot"]) == 0
    rep = json.loads((tmp_path / "out2" / "portrait.json").read_text())
    assert len(rep["fixed_points_reduced"]) == 1
    assert rep["fixed_points_reduced"][0]["stability"] == "stable"
    assert rep["type_numbers"], "type numbers should be reported with a chart"


def test_export_surface_shapes(tmp_path, quadratic_model_file):
    mpath, info = quadratic_model_file
    out = str(tmp_path / "out")
    cfg = write_json(tmp_path / "cfg.json", {
        "model": mpath,
        "output_dir": out,
        "seed": 12,
        "ssm": {"order": 2, "dimension": 1},
        "ensemble": {"n_traj": 16, "split_fraction": 0.8, "dt": 0.01,
                     "t_end": 6.0,
                     "sampler": {"type": "ball", "center": "fixed_point",
                                 "radius": 0.5},
                     "trim": {"rate": info["slowest_ignored"], "factor": 8.0}},
    })
    assert run(["fit-ssm", cfg, "--no-plot"]) == 0
    cfg2 = write_json(tmp_path / "cfg2.json", {
        "model": mpath,
        "output_dir": str(tmp_path / "exp"),
        "export": {"source": os.path.join(out, "chart.json"),
                   "grid": [40, 40], "extent": [[-1, 1], [-1, 1]]},
    })
    assert run(["export-surface", cfg2, "--no-plot"]) == 0
    lines = (tmp_path / "exp" / "surface.csv").read_text().splitlines()
    assert len(lines) == 41  # header + 40 grid points for a 1D chart

    # reduced-field export: arrows at the origin are zero vectors
    cfg3 = write_json(tmp_path / "cfg3.json", {
        "model": mpath,
        "output_dir": str(tmp_path / "exp2"),
        "export": {"source": os.path.join(out, "..", "red", "reduced.json"),
                   "grid": [11, 11], "extent": [[-1, 1], [-1, 1]]},
    })
    # build a reduced model file first
    from ssmr import reduced_dynamics as rd
    from ssmr.poly import MonomialBasis

    basis = MonomialBasis(1, 1, 1)
    model = rd.ReducedModel(basis=basis, W_r=np.array([[-1.0]]))
    os.makedirs(tmp_path / "red", exist_ok=True)
    rd.save_reduced_model(model, tmp_path / "red" / "reduced.json")
    assert run(["export-surface", cfg3, "--no-plot"]) == 0
    rows = (tmp_path / "exp2" / "field.csv").read_text().splitlines()
    header = rows[0].split(",")
    assert header == ["eta1", "deta1"]
    mid = rows[1 + 5].split(",")  # eta grid midpoint is the origin
    assert float(mid[0]) == pytest.approx(0.0, abs=1e-12)
    assert float(mid[1]) == pytest.approx(0.0, abs=1e-12)


def test_continuation_command(tmp_path):
    system = PolynomialSystem(A=np.diag([0.0, -1.0]),
                              terms=[PolyTerm([1.0, 0.0], [([1.0, 0.0], 2)])],
                              B=np.array([[1.0], [0.0]]),
                              readout_vector=np.array([1.0, 0.0]))
    mpath = tmp_path / "sn.json"
    models.save_model(system, mpath)
    cfg = write_json(tmp_path / "cfg.json", {
        "model": str(mpath),
        "output_dir": str(tmp_path / "out"),
        "continuation": {"direction": [1.0], "mu_range": [-0.2, 0.2],
                         "n_steps": 11},
        "fixed_points": {"n_random_seeds": 20, "seed_radius": 0.8,
                         "newton_tol": 1e-10},
    })
    assert run(["continuation", cfg, "--no-plot"]) == 0
    events = json.loads((tmp_path / "out" / "events.json").read_text())
    assert len(events) == 1
    assert events[0]["type"] == "saddle-node"
    lines = (tmp_path / "out" / "bifurcation.csv").read_text().splitlines()
    assert lines[0] == "mu,branch_id,readout_z0,re_lambda_max,stability"


def test_anchor_command(tmp_path):
    from systems import make_tanh_network

    m = make_tanh_network(N=8, seed=6, scale=0.3)
    mpath = tmp_path / "net.json"
    models.save_model(m, mpath)
    cfg = write_json(tmp_path / "cfg.json", {
        "model": str(mpath),
        "output_dir": str(tmp_path / "out"),
        "anchor": {"order": 2, "dt": 0.01, "t_end": 80.0,
                   "noise": {"amplitude": 0.02, "bound": 3.0, "seed": 3}},
        "fixed_points": {"n_random_seeds": 5, "seed_radius": 0.3,
                         "newton_tol": 1e-10},
    })
    assert run(["anchor", cfg, "--no-plot"]) == 0
    summary = json.loads((tmp_path / "out" / "anchor_summary.json").read_text())
    assert summary["sup_error_vs_direct"] < 5 * 0.02 ** 2
    assert (tmp_path / "out" / "anchor.csv").exists()


def test_ftle_command(tmp_path):
    saddle = PolynomialSystem(A=np.diag([1.0, -1.0]))
    mpath = tmp_path / "saddle.json"
    models.save_model(saddle, mpath)
    cfg = write_json(tmp_path / "cfg.json", {
        "model": str(mpath),
        "output_dir": str(tmp_path / "out"),
        "ftle": {"plane": {"center": [0.0, 0.0], "basis": [[1.0, 0.0], [0.0, 1.0]],
                           "n1": 7, "n2": 7, "extent1": [-1, 1],
                           "extent2": [-1, 1]},
                 "horizon": 3.0, "dt": 0.01},
    })
    assert run(["ftle", cfg, "--no-plot"]) == 0
    lines = (tmp_path / "out" / "ftle.csv").read_text().splitlines()
    assert lines[0] == "i,j,eta1,eta2,ftle,masked"
    vals = [float(row.split(",")[4]) for row in lines[1:]]
    assert np.max(np.abs(np.array(vals) - 1.0)) < 1e-2
    assert (tmp_path / "out" / "plane.json").exists()


def test_plots_rendered_by_default(tmp_path, decay_model_file):
    cfg = write_json(tmp_path / "cfg.json", {
        "model": decay_model_file,
        "output_dir": str(tmp_path / "out"),
        "simulation": {"dt": 1e-2, "t_end": 1.0, "x0": [1.0, 0.0]},
    })
    assert run(["simulate", cfg]) == 0
    assert (tmp_path / "out" / "trajectory.png").stat().st_size > 0
