import json

import pytest

from fedmar.cli import main

from oracles import hypergeometric_none_selected

BASE_CONFIG = """
K = 6
T = 3
r = 0.2
attack = gauss
seed = 5
n_examples = 300
n_test = 100
epochs = 10
lr = 0.3
weight_decay = 0.05
ridge_a = 0.001
ridge_b = 0.001
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(BASE_CONFIG)
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestRun:
    def test_missing_config_exits_2(self, tmp_path, capsys):
        code = run_cli("run", "--config", tmp_path / "absent.cfg", "--out", tmp_path / "o")
        assert code == 2
        assert "absent.cfg" in capsys.readouterr().err

    def test_minimal_run_row_count(self, tmp_path, config_file):
        out = tmp_path / "run"
        assert run_cli("run", "--config", config_file, "--out", out) == 0
        rows = (out / "rounds.csv").read_text().strip().splitlines()
        assert rows[0] == "round_id,accuracy,precision_so_far,recall_so_far,flagged_ids,malicious_ids"
        assert len(rows) == 1 + 3
        for name in ("summary.json", "manifest.json", "scores.csv", "timings.csv"):
            assert (out / name).is_file()

    def test_rerun_is_byte_identical(self, tmp_path, config_file):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("run", "--config", config_file, "--out", out1, "--set", "seed=7") == 0
        assert run_cli("run", "--config", config_file, "--out", out2, "--set", "seed=7") == 0
        assert (out1 / "rounds.csv").read_bytes() == (out2 / "rounds.csv").read_bytes()
        assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()

    def test_refuses_nonempty_out_dir(self, tmp_path, config_file):
        out = tmp_path / "occupied"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        assert run_cli("run", "--config", config_file, "--out", out) == 2
        assert run_cli("run", "--config", config_file, "--out", out, "--force") == 0

    def test_unknown_override_exits_2(self, tmp_path, config_file):
        code = run_cli(
            "run", "--config", config_file, "--out", tmp_path / "x", "--set", "bogus=1"
        )
        assert code == 2

    def test_env_seed_between_file_and_set(self, tmp_path, config_file, monkeypatch):
        out_env = tmp_path / "env"
        monkeypatch.setenv("FLSIM_SEED", "11")
        assert run_cli("run", "--config", config_file, "--out", out_env) == 0
        assert json.loads((out_env / "summary.json").read_text())["config"]["seed"] == 11

        out_set = tmp_path / "set"
        assert run_cli(
            "run", "--config", config_file, "--out", out_set, "--set", "seed=13"
        ) == 0
        assert json.loads((out_set / "summary.json").read_text())["config"]["seed"] == 13


class TestSweep:
    def test_product_count(self, tmp_path, config_file):
        out = tmp_path / "sweep"
        code = run_cli(
            "sweep",
            "--config", config_file,
            "--out", out,
            "--sweep", "r=0.2,0.4",
            "--sweep", "attack=gauss,lie",
        )
        assert code == 0
        rows = (out / "sweep_summary.csv").read_text().strip().splitlines()
        assert rows[0].startswith("r,attack,")
        assert len(rows) == 1 + 4
        assert len([p for p in out.iterdir() if p.is_dir()]) == 4

    def test_empty_sweep_matches_plain_run(self, tmp_path, config_file):
        single = tmp_path / "single"
        plain = tmp_path / "plain"
        assert run_cli("sweep", "--config", config_file, "--out", single) == 0
        assert run_cli("run", "--config", config_file, "--out", plain) == 0
        assert (single / "rounds.csv").read_bytes() == (plain / "rounds.csv").read_bytes()
        assert (single / "sweep_summary.csv").is_file()

    def test_cap_exceeded(self, tmp_path, config_file):
        code = run_cli(
            "sweep",
            "--config", config_file,
            "--out", tmp_path / "big",
            "--sweep", "seed=" + ",".join(str(i) for i in range(9)),
            "--cap", "8",
        )
        assert code == 2


class TestAnalyze:
    def test_prob_mode_prints_reference_value(self, tmp_path, capsys):
        code = run_cli(
            "analyze", tmp_path, "--mode", "prob", "--K", "100", "--b", "5", "--m", "20"
        )
        assert code == 0
        exact = 1.0 - hypergeometric_none_selected(100, 5, 20)
        printed = float(capsys.readouterr().out.rsplit("=", 1)[1])
        assert printed == pytest.approx(exact, abs=5e-7)  # >= 4 sig digits shown
        payload = json.loads((tmp_path / "prob.json").read_text())
        assert payload["probability"] == pytest.approx(exact, rel=1e-12)

    def test_prob_mode_needs_flags(self, tmp_path):
        assert run_cli("analyze", tmp_path, "--mode", "prob") == 2

    def test_pr_mode_roundtrip(self, tmp_path, config_file, capsys):
        out = tmp_path / "run"
        assert run_cli("run", "--config", config_file, "--out", out) == 0
        assert run_cli("analyze", out, "--mode", "pr") == 0
        payload = json.loads((out / "pr.json").read_text())
        assert set(payload) == {"tp", "fp", "fn", "precision", "recall"}

    def test_tdmi_mode_insufficient_history(self, tmp_path, config_file):
        out = tmp_path / "short"
        assert run_cli("run", "--config", config_file, "--out", out, "--set", "T=2") == 0
        assert run_cli("analyze", out, "--mode", "tdmi") == 2

    def test_tdmi_mode_produces_outputs(self, tmp_path, config_file):
        out = tmp_path / "long"
        code = run_cli(
            "run", "--config", config_file, "--out", out,
            "--set", "T=12", "--set", "attack_fixed_ids=true",
            "--set", "fallback_aggregator=multi_krum",
        )
        assert code == 0
        assert run_cli("analyze", out, "--mode", "tdmi") == 0
        assert (out / "tdmi.csv").is_file()
        ttest = json.loads((out / "ttest.json").read_text())
        assert set(ttest) == {"statistic", "dof", "p_value"}

    def test_missing_run_dir(self, tmp_path):
        assert run_cli("analyze", tmp_path / "nope", "--mode", "pr") == 2
