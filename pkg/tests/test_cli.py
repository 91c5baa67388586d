import io
import json
import subprocess
import sys

import numpy as np
import pytest

from chainid import cli
from chainid.linalg import CovMatrix
from chainid.sem import AmpSem, Dataset


def run(args, capsys, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_writes_four_files(tmp_path, capsys):
    code, out, _ = run(["generate", "--n-vars", "10", "--components", "5", "--seed", "7",
                        "--samples", "1000", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cov.json", "data.csv", "graph.json", "sem.json"]
    assert Dataset.from_csv((tmp_path / "data.csv").read_text()).values.shape == (1000, 10)


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["generate", "--n-vars", "10", "--components", "11", "--seed", "1", "--out", str(tmp_path)])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["learn"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["learn", "--cov", "a", "--data", "b"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "--sem", "x", "--bogus"])
    assert info.value.code == 2


def test_outputs_are_deterministic_and_round_trip(tmp_path, capsys):
    for name in ("a", "b"):
        run(["generate", "--n-vars", "8", "--components", "3", "--seed", "4", "--samples", "50",
             "--out", str(tmp_path / name)], capsys)
    for f in ("sem.json", "graph.json", "cov.json", "data.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    sem_text = (tmp_path / "a" / "sem.json").read_text()
    assert cli._dump(AmpSem.from_dict(json.loads(sem_text)).to_dict()) == sem_text
    cov_text = (tmp_path / "a" / "cov.json").read_text()
    assert cli._dump(CovMatrix.from_dict(json.loads(cov_text)).to_dict()) == cov_text
    csv_text = (tmp_path / "a" / "data.csv").read_text()
    assert Dataset.from_csv(csv_text).to_csv() == csv_text


def test_seed_environment_override(tmp_path, capsys, monkeypatch):
    run(["generate", "--n-vars", "6", "--components", "3", "--seed", "11", "--out", str(tmp_path / "a")], capsys)
    monkeypatch.setenv("CHAINID_SEED", "11")
    run(["generate", "--n-vars", "6", "--components", "3", "--seed", "99", "--out", str(tmp_path / "b")], capsys)
    assert (tmp_path / "a" / "sem.json").read_bytes() == (tmp_path / "b" / "sem.json").read_bytes()


def test_certified_then_verify(tmp_path, capsys):
    run(["generate", "--n-vars", "12", "--components", "4", "--certified", "--seed", "3", "--out", str(tmp_path)],
        capsys)
    code, out, _ = run(["verify", "--sem", str(tmp_path / "sem.json")], capsys)
    report = json.loads(out)
    assert code == 0 and report["ok"]
    unknown = report["unknown"]["conditions"]
    assert unknown["i"]["slack"] > 0 and unknown["ii"]["slack"] > 0


def test_verify_reports_failing_condition(tmp_path, capsys):
    from chainid.graph import ChainGraph

    g = ChainGraph.from_edges(2, [], [(0, 1)])
    sem = AmpSem(g, np.zeros((2, 2)), (0.5 * np.eye(2),))
    (tmp_path / "sem.json").write_text(json.dumps(sem.to_dict()))
    code, out, _ = run(["verify", "--sem", str(tmp_path / "sem.json"), "--conditions", "unknown"], capsys)
    assert code == 1
    assert json.loads(out)["unknown"]["conditions"]["ii"]["passed"] is False


def test_learn_three_variable_example_from_stdin(capsys, monkeypatch):
    block = 3.0 * np.array([[1.0, 0.9], [0.9, 1.0]])
    s2 = np.linalg.det(block)
    sigma = np.zeros((3, 3))
    sigma[:2, :2] = block
    sigma[2, :2] = sigma[:2, 2] = block[0]
    sigma[2, 2] = block[0, 0] + s2
    code, out, _ = run(["learn", "--cov", "-", "--sfm", "brute"], capsys,
                       stdin=json.dumps(CovMatrix(sigma).to_dict()), monkeypatch=monkeypatch)
    result = json.loads(out)
    assert code == 0
    assert [result["partition"][i] for i in result["order"]] == [[0, 1], [2]]
    assert result["graph"]["directed_edges"] == [[0, 2]]


def test_learn_brute_vs_mnp_and_eval(tmp_path, capsys):
    run(["generate", "--n-vars", "12", "--components", "5", "--certified", "--seed", "5", "--out", str(tmp_path)],
        capsys)
    results = {}
    for method in ("brute", "mnp"):
        code, out, _ = run(["learn", "--cov", str(tmp_path / "cov.json"), "--sfm", method], capsys)
        assert code == 0
        results[method] = json.loads(out)
    assert results["brute"]["partition"] == results["mnp"]["partition"]
    (tmp_path / "learned.json").write_text(json.dumps(results["brute"]))
    code, out, _ = run(["eval", "--learned", str(tmp_path / "learned.json"), "--truth", str(tmp_path / "graph.json")],
                       capsys)
    assert json.loads(out) == {"shd": 0, "order_correct": True, "partition_correct": True}


def test_learn_known_from_data(tmp_path, capsys):
    run(["generate", "--n-vars", "8", "--components", "4", "--certified", "known", "--seed", "2",
         "--samples", "2000", "--out", str(tmp_path)], capsys)
    code, out, _ = run(["learn", "--data", str(tmp_path / "data.csv"), "--known", str(tmp_path / "graph.json")],
                       capsys)
    assert code == 0 and json.loads(out)["mode"] == "empirical"


def test_learn_failure_emits_error_json(tmp_path, capsys):
    (tmp_path / "cov.json").write_text(json.dumps([[1.0, 1.0], [1.0, 1.0]]))
    code, _, err = run(["learn", "--cov", str(tmp_path / "cov.json")], capsys)
    assert code == 1
    assert json.loads(err)["error"] == "SingularityError"


def test_bench_writes_summary(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"d_list": [6], "n_trials": 3, "algorithm": "unknown"}))
    code, out, _ = run(["bench", "--config", str(config), "--out", str(tmp_path / "out")], capsys)
    assert code == 0 and "partition_rate" in out
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["rows"][0]["partition_rate"] == 1.0
    assert (tmp_path / "out" / "timing.json").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "chainid.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "generate" in proc.stdout
