import csv
import json
import subprocess
import sys

import pytest

from omp_lab.cli import DEFAULT_SEED, FIG3_HEADER, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def value(out, key):
    for line in out.splitlines():
        if line.startswith(key + " "):
            return line.split()[1]
    raise AssertionError(f"{key} missing from output:\n{out}")


@pytest.fixture
def write_json(tmp_path):
    def _write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return _write


def test_solve_trine(capsys):
    code, out, _ = run(capsys, "solve", "trine.json")
    assert code == 0
    assert value(out, "p_guess") == "0.666667"
    assert "certificate decomposition: pass" in out


def test_solve_reference_pair_json(capsys):
    code, out, _ = run(capsys, "solve", "paper-pair.json", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["certificate_passed"]
    assert f"{doc['p_guess']:.6f}" == "0.770910"
    assert len(doc["povm"]) == 2 and len(doc["sigma_bloch"]) == 2


def test_solve_helstrom_method(capsys):
    code, out, _ = run(capsys, "solve", "paper-pair.json", "--method", "helstrom")
    assert code == 0 and value(out, "p_guess") == "0.770910"


def test_solve_rejects_single_state(capsys, write_json):
    path = write_json("one.json", {"priors": [1.0], "states": [{"bloch": [0, 0, 1]}]})
    code, _, err = run(capsys, "solve", path)
    assert code == 2 and "error" in err


@pytest.mark.parametrize("doc", [
    {"priors": [0.5, 0.6], "states": [{"bloch": [0, 0, 1]}, {"bloch": [0, 0, -1]}]},
    {"priors": [0.5, 0.5], "states": [{"bloch": [0, 0, 2]}, {"bloch": [0, 0, -1]}]},
    {"priors": [0.5, 0.5], "states": [{"spin": 1}, {"bloch": [0, 0, -1]}]},
])
def test_solve_rejects_malformed_ensembles(capsys, write_json, doc):
    code, _, _ = run(capsys, "solve", write_json("bad.json", doc))
    assert code == 2


def test_missing_and_unparsable_files(capsys, tmp_path):
    assert run(capsys, "solve", str(tmp_path / "nope.json"))[0] == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert run(capsys, "twirl", str(broken))[0] == 2


def test_twirl_bit_phase_flip(capsys):
    code, out, _ = run(capsys, "twirl", "bit-phase-flip-045.json")
    assert code == 0
    assert value(out, "eta") == "0.600000"
    assert value(out, "kappa") == "0.400000"
    assert value(out, "measured_eta") == "0.600000"
    assert "kappa_in_omp_range yes" in out


def test_twirl_tetrahedral_design(capsys):
    code, out, _ = run(capsys, "twirl", "bit-phase-flip-045.json", "--design", "tetra12", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["max_deviation"] < 1e-10
    assert doc["eta"] == pytest.approx(0.6, abs=1e-12)


def test_twirl_identity_and_out_of_range(capsys, write_json):
    code, out, _ = run(capsys, "twirl", "identity.json")
    assert code == 0 and value(out, "eta") == "0.000000"
    code, out, _ = run(capsys, "twirl", write_json("p1.json", {"type": "bit_phase_flip", "p": 1.0}))
    assert code == 0
    assert value(out, "eta") == "1.33333"
    assert "kappa_in_omp_range NO" in out


def test_twirl_rejects_bad_parameter(capsys, write_json):
    code, _, _ = run(capsys, "twirl", write_json("bad.json", {"type": "bit_phase_flip", "p": 1.5}))
    assert code == 2


def test_omp_check_verdicts(capsys):
    code, out, _ = run(capsys, "omp-check", "paper-pair.json", "bit-phase-flip-045.json")
    assert code == 1 and "verdict NOT OMP" in out
    code, out, _ = run(capsys, "omp-check", "paper-pair.json", "depolarizing-06.json")
    assert code == 0 and "verdict OMP" in out and value(out, "kappa") == "0.400000"
    code, out, _ = run(capsys, "omp-check", "trine.json", "identity.json")
    assert code == 0 and value(out, "kappa") == "1.00000"


def test_reproduce_default(capsys):
    code, out, _ = run(capsys, "reproduce", "--paper-numbers")
    assert code == 0 and "all checks pass" in out
    assert sum(line.endswith("  pass") for line in out.splitlines()) == 6


def test_reproduce_json_and_overrides(capsys):
    code, out, _ = run(capsys, "reproduce", "--channel-p", "0.0", "--json")
    rows = {r["check"]: r for r in json.loads(out)["checks"]}
    assert code == 0
    assert rows["p_guess_channel"]["computed"] == pytest.approx(rows["p_guess_id"]["computed"], abs=1e-9)
    assert round(rows["p_guess_id"]["computed"], 4) == 0.7709
    code, out, _ = run(capsys, "reproduce", "--ensemble", "orthogonal-pair.json", "--priors", "0.9,0.1", "--json")
    rows = {r["check"]: r for r in json.loads(out)["checks"]}
    assert code == 0 and rows["p_guess_id"]["computed"] == pytest.approx(1.0, abs=1e-9)


def test_reproduce_bad_priors(capsys):
    assert run(capsys, "reproduce", "--priors", "0.9,0.2")[0] == 2
    assert run(capsys, "reproduce", "--priors", "a,b")[0] == 2


def fig3(capsys, out, *extra):
    return run(capsys, "fig3", "--N-list", "5,20", "--realizations", "2", "--out", str(out), *extra)


def test_fig3_csv_schema_and_manifest(capsys, tmp_path):
    out = tmp_path / "fig3.csv"
    code, stdout, _ = fig3(capsys, out, "--seed", "3")
    assert code == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == FIG3_HEADER
    assert [(r[0], r[1]) for r in rows[1:]] == [("5", "false"), ("5", "true"), ("20", "false"), ("20", "true")]
    for r in rows[1:]:
        assert "e" not in r[2].lower() and "e" not in r[3].lower()
        assert r[4:] == ["2", "3"]
    assert stdout == out.read_text()
    manifest = json.loads((tmp_path / "fig3.csv.manifest.json").read_text())
    assert manifest["command"] == "fig3" and manifest["seed"] == 3
    assert len(manifest["config_hash"]) == 40
    assert str(out) in manifest["outputs"]


def test_fig3_byte_identical_reruns(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    fig3(capsys, a, "--seed", "11", "--realizations", "1")
    fig3(capsys, b, "--seed", "11", "--realizations", "1", "--threads", "2")
    assert a.read_bytes() == b.read_bytes()
    hashes = [json.loads((tmp_path / f"{n}.csv.manifest.json").read_text())["config_hash"] for n in "ab"]
    assert hashes[0] == hashes[1]


def test_fig3_seed_precedence(capsys, tmp_path, monkeypatch):
    out = tmp_path / "s.csv"
    fig3(capsys, out, "--twirl", "on")
    assert out.read_text().splitlines()[1].endswith(f",{DEFAULT_SEED}")
    monkeypatch.setenv("OMP_LAB_SEED", "42")
    fig3(capsys, out, "--twirl", "on")
    assert out.read_text().splitlines()[1].endswith(",42")
    fig3(capsys, out, "--twirl", "on", "--seed", "5")
    assert out.read_text().splitlines()[1].endswith(",5")
    monkeypatch.setenv("OMP_LAB_SEED", "x")
    assert fig3(capsys, out)[0] == 2


def test_fig3_config_file(capsys, tmp_path, write_json):
    cfg = write_json("cfg.json", {"N_list": [4], "realizations": 2, "seed": 9, "twirl": "off",
                                  "channel": {"type": "depolarizing", "mu": 0.6}})
    out = tmp_path / "c.csv"
    code, _, _ = run(capsys, "fig3", "--config", cfg, "--out", str(out))
    rows = out.read_text().splitlines()
    assert code == 0 and len(rows) == 2 and rows[1].startswith("4,false,") and rows[1].endswith(",2,9")


def test_fig3_input_errors(capsys, tmp_path):
    assert run(capsys, "fig3", "--N-list", "0,10", "--out", "-")[0] == 2
    assert run(capsys, "fig3", "--N-list", "a", "--out", "-")[0] == 2
    assert run(capsys, "fig3", "--N-list", "5", "--realizations", "0", "--out", "-")[0] == 2
    assert run(capsys, "fig3", "--N-list", "5", "--channel-p", "2", "--out", "-")[0] == 2


def test_fig3_trial_failure_exit_code(capsys, monkeypatch):
    import omp_lab.cli as cli

    def boom(*args, **kwargs):
        raise ArithmeticError("reconstruction failed")

    monkeypatch.setattr(cli, "run_experiment", boom)
    code, _, err = run(capsys, "fig3", "--N-list", "5", "--out", "-")
    assert code == 3 and "trial failure" in err


def test_solver_failure_exit_code(capsys, monkeypatch):
    import omp_lab.cli as cli
    from omp_lab.discrimination import SolverError

    def fail(ensemble):
        raise SolverError("no convergence", 1.0)

    monkeypatch.setattr(cli, "solve_dual", fail)
    assert run(capsys, "solve", "trine.json")[0] == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "omp_lab", "solve", "trine.json"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "p_guess 0.666667" in proc.stdout
