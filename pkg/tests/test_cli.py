import json

import numpy as np
import pytest

from netadvect.cli import main
from netadvect.environment import load_field
from netadvect.graph import load_edgelist


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def model_files(tmp_path, capsys):
    net, field = tmp_path / "g.txt", tmp_path / "f.csv"
    assert run(capsys, "gen-network", "--set", "generator=\"erdos_renyi\"",
               "--set", "params={\"n\": 15, \"p\": 0.3}", "--seed", 4, "--out", net)[0] == 0
    assert run(capsys, "gen-field", "--network", net, "--set", "kind=\"grf\"",
               "--seed", 4, "--out", field)[0] == 0
    return net, field


def test_gen_network_and_field(model_files):
    net, field = model_files
    g = load_edgelist(net)
    assert g.n_nodes == 15 and g.generator == "erdos_renyi" and g.seed == 4
    f = load_field(field)
    assert len(f) == 15 and f.theta.min() == 15.0 and f.theta.max() == 35.0


def test_gen_network_default_is_ws100(tmp_path, capsys):
    code, out, _ = run(capsys, "gen-network", "--out", tmp_path / "g.txt")
    assert code == 0 and "700 edges" in out


def test_build_advection(model_files, tmp_path, capsys):
    net, field = model_files
    out = tmp_path / "adv.csv"
    code, _, _ = run(capsys, "build-advection", "--network", net, "--field", field,
                     "--out", out, "--flow-out", tmp_path / "flow.txt")
    assert code == 0
    a = np.loadtxt(out, delimiter=",", ndmin=2)
    assert a.shape == (15, 15)
    assert np.all(a.sum(axis=0) == 0)
    assert (tmp_path / "flow.txt").exists()


def test_simulate(model_files, tmp_path, capsys):
    net, field = model_files
    out = tmp_path / "ss.csv"
    code, stdout, _ = run(capsys, "simulate", "--network", net, "--field", field,
                          "--set", "species.alpha=0.2", "--out", out,
                          "--trajectory", tmp_path / "traj.csv")
    assert code == 0 and "converged=True" in stdout
    rows = out.read_text().splitlines()
    assert rows[0] == "node_id,theta,u_star,extinct_flag" and len(rows) == 16
    assert (tmp_path / "traj.csv").read_text().startswith("time,node_id,u")


def test_eigen_matrix(tmp_path, capsys):
    m = tmp_path / "m.csv"
    np.savetxt(m, np.diag([2.5, -1.0, 0.0]), delimiter=",")
    code, out, _ = run(capsys, "eigen", "--matrix", m)
    assert code == 0
    assert "lambda1 = 2.5" in out and "verdict = persistent" in out
    np.savetxt(m, -np.eye(2), delimiter=",")
    assert "verdict = extinct" in run(capsys, "eigen", "--matrix", m)[1]


def test_eigen_from_model(model_files, capsys):
    net, field = model_files
    code, out, _ = run(capsys, "eigen", "--network", net, "--field", field)
    assert code == 0 and "lambda1 =" in out


def test_experiment_from_config(tmp_path, capsys):
    cfg_path = tmp_path / "corridor.json"
    code, dumped, _ = run(capsys, "experiment", "--kind", "corridor_sweep",
                          "--set", "sweep.rhos=[0.0, 0.5]", "--dump-config")
    assert code == 0 and json.loads(dumped)["kind"] == "corridor_sweep"
    cfg_path.write_text(dumped)
    out = tmp_path / "res"
    code, stdout, _ = run(capsys, "experiment", "--config", cfg_path, "--out", out)
    assert code == 0
    assert {p.name for p in out.iterdir()} == {"profile.csv", "runs.csv", "summary.json",
                                               "provenance.json"}
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["config"]["sweep"]["rhos"] == [0.0, 0.5]
    assert prov["config_hash"] in stdout


def test_experiment_overwrite_guard(tmp_path, capsys):
    out = tmp_path / "res"
    base = ["experiment", "--kind", "hotspot", "--out", out]
    assert run(capsys, *base)[0] == 0
    first = (out / "nodes.csv").read_bytes()
    assert run(capsys, *base)[0] == 0
    assert (out / "nodes.csv").read_bytes() == first
    code, _, err = run(capsys, *base, "--set", "species.alpha=0.5")
    assert code == 4 and "force" in err
    assert run(capsys, *base, "--set", "species.alpha=0.5", "--force")[0] == 0


def test_missing_config_exit_code(tmp_path, capsys):
    path = tmp_path / "nowhere" / "cfg.json"
    code, _, err = run(capsys, "experiment", "--config", path)
    assert code == 2 and str(path) in err


def test_config_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"kind\": 3")
    assert run(capsys, "experiment", "--config", bad)[0] == 2
    assert run(capsys, "experiment", "--kind", "hotspot", "--set", "species.bogus=1")[0] == 2
    assert run(capsys, "experiment", "--kind", "hotspot")[0] == 2  # no output dir
    with pytest.raises(SystemExit) as info:
        main(["teleport"])
    assert info.value.code == 2


def test_numerical_error_exit_code(model_files, tmp_path, capsys):
    net, field = model_files
    code, _, err = run(capsys, "simulate", "--network", net, "--field", field,
                       "--set", "species.d=50", "--set", "integrator.dt=1.0",
                       "--set", "integrator.clamp=false", "--out", tmp_path / "ss.csv")
    assert code == 3 and "non-finite" in err


def test_io_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "gen-network", "--out", blocker / "g.txt")
    assert code == 4
    code, _, _ = run(capsys, "eigen", "--matrix", tmp_path / "missing.csv")
    assert code == 4
