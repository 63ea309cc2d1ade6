from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from tvflow import cli
from tvflow.io import read_graph_csv, read_observations_csv, read_signal_csv


def run_cli(args: list[str]) -> int:
    try:
        return cli.main(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code)


def artifact_bytes(out_dir: Path) -> dict[str, bytes]:
    return {
        p.name: p.read_bytes()
        for p in sorted(out_dir.iterdir())
        if p.name != "manifest.json"  # carries a timestamp by design
    }


class TestGenerate:
    def test_chain_defaults_reproduce_reference_instance(self, tmp_path):
        out = tmp_path / "gen"
        assert run_cli(["generate", "chain", "--out-dir", str(out)]) == 0
        g = read_graph_csv(out / "graph.csv")
        assert g.node_count == 10
        assert g.edges()[4] == (5, 6, 0.25)
        obs = read_observations_csv(out / "observations.csv")
        assert obs.nodes.tolist() == [2, 7]
        assert obs.labels.tolist() == [1.0, 0.0]
        signal = read_signal_csv(out / "signal.csv")
        assert signal.tolist() == [1.0] * 5 + [0.0] * 5
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["kind"] == "chain"
        assert set(manifest["outputs"]) == {
            "graph.csv", "signal.csv", "observations.csv", "partition.csv",
        }

    def test_two_node_chain(self, tmp_path):
        out = tmp_path / "gen"
        code = run_cli([
            "generate", "chain", "--n", "2", "--split", "1",
            "--samples", "1,2", "--out-dir", str(out),
        ])
        assert code == 0
        assert read_graph_csv(out / "graph.csv").edge_count == 1

    def test_grid(self, tmp_path):
        out = tmp_path / "grid"
        assert run_cli(["generate", "grid", "--out-dir", str(out)]) == 0
        g = read_graph_csv(out / "graph.csv")
        assert g.node_count == 24
        assert g.min_degree() >= 2

    def test_sbm_disconnected_warns(self, tmp_path, capsys):
        out = tmp_path / "sbm"
        code = run_cli([
            "generate", "sbm", "--sizes", "3,3", "--p-out", "0",
            "--p-in", "1", "--out-dir", str(out),
        ])
        assert code == 0
        assert "disconnected" in capsys.readouterr().err

    def test_usage_error_exit_code(self):
        assert run_cli(["generate", "nonsense"]) == 64

    def test_invalid_params_exit_code(self, tmp_path):
        code = run_cli([
            "generate", "chain", "--n", "2", "--split", "5",
            "--out-dir", str(tmp_path),
        ])
        assert code == 64


class TestSolve:
    @pytest.fixture
    def instance_dir(self, tmp_path) -> Path:
        out = tmp_path / "inst"
        assert run_cli(["generate", "chain", "--out-dir", str(out)]) == 0
        return out

    def test_solve_writes_artifacts(self, tmp_path, instance_dir):
        out = tmp_path / "sol"
        code = run_cli([
            "solve", "--graph", str(instance_dir / "graph.csv"),
            "--observations", str(instance_dir / "observations.csv"),
            "--lambda", "1", "--iters", "1000", "--out-dir", str(out),
        ])
        assert code == 0
        primal = read_signal_csv(out / "primal.csv")
        assert np.max(np.abs(primal - np.array([0.75] * 5 + [0.25] * 5))) <= 0.02
        report = json.loads((out / "report.json").read_text())
        assert report["iters"] == 1000
        assert report["objective"] == pytest.approx(0.1875, abs=2e-3)
        assert report["certified"] is True

    def test_solve_with_config_json(self, tmp_path, instance_dir):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"lambda": 1.0, "max_iters": 200}))
        out = tmp_path / "sol"
        code = run_cli([
            "solve", "--graph", str(instance_dir / "graph.csv"),
            "--observations", str(instance_dir / "observations.csv"),
            "--config", str(config), "--out-dir", str(out),
        ])
        assert code == 0
        assert json.loads((out / "report.json").read_text())["iters"] == 200

    def test_lambda_zero_rejected(self, tmp_path, instance_dir):
        code = run_cli([
            "solve", "--graph", str(instance_dir / "graph.csv"),
            "--observations", str(instance_dir / "observations.csv"),
            "--lambda", "0", "--out-dir", str(tmp_path / "x"),
        ])
        assert code == 64

    def test_empty_observations_rejected(self, tmp_path, instance_dir):
        empty = tmp_path / "empty.csv"
        empty.write_text("i,x\n")
        code = run_cli([
            "solve", "--graph", str(instance_dir / "graph.csv"),
            "--observations", str(empty), "--out-dir", str(tmp_path / "x"),
        ])
        assert code == 64

    def test_parse_error_cites_line(self, tmp_path, instance_dir, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("i,x\n2,1.0\n7,zero\n")
        code = run_cli([
            "solve", "--graph", str(instance_dir / "graph.csv"),
            "--observations", str(bad), "--out-dir", str(tmp_path / "x"),
        ])
        assert code == 64
        assert "bad.csv:3" in capsys.readouterr().err


class TestCertify:
    @pytest.fixture
    def experiment_dir(self, tmp_path) -> Path:
        out = tmp_path / "exp"
        assert run_cli(["experiment-chain", "--out-dir", str(out)]) == 0
        return out

    def test_valid_certificate_exits_zero(self, tmp_path, experiment_dir):
        out = tmp_path / "cert"
        code = run_cli([
            "certify",
            "--graph", str(experiment_dir / "graph.csv"),
            "--flow", str(experiment_dir / "flow.csv"),
            "--partition", str(experiment_dir / "partition.csv"),
            "--observations", str(experiment_dir / "observations.csv"),
            "--lambda", "1", "--out-dir", str(out),
        ])
        assert code == 0
        recon = read_signal_csv(out / "reconstructed.csv")
        assert recon.tolist() == [0.75] * 5 + [0.25] * 5
        report = json.loads((out / "report.json").read_text())
        assert report["status"] == "verified"
        assert report["verdict"] is True

    def test_wrong_lambda_exits_one(self, tmp_path, experiment_dir):
        out = tmp_path / "cert"
        code = run_cli([
            "certify",
            "--graph", str(experiment_dir / "graph.csv"),
            "--flow", str(experiment_dir / "flow.csv"),
            "--partition", str(experiment_dir / "partition.csv"),
            "--observations", str(experiment_dir / "observations.csv"),
            "--lambda", "2", "--out-dir", str(out),
        ])
        assert code == 1
        report = json.loads((out / "report.json").read_text())
        assert report["saturation_ok"] is False
        assert not (out / "reconstructed.csv").exists()

    def test_indeterminate_cluster_exits_two(self, tmp_path):
        # 4-cycle with both samples in one cluster: a circulation saturates
        # the two boundary edges and conserves everywhere, but the sampled
        # cluster's partner has no label, so its balance is undecidable.
        (tmp_path / "graph.csv").write_text(
            "i,j,w\n1,2,1.0\n1,4,0.5\n2,3,0.5\n3,4,1.0\n"
        )
        (tmp_path / "partition.csv").write_text(
            "i,cluster\n1,1\n2,1\n3,2\n4,2\n"
        )
        (tmp_path / "observations.csv").write_text("i,x\n1,1.0\n2,1.0\n")
        (tmp_path / "flow.csv").write_text(
            "head,tail,y\n1,2,0.5\n1,4,-0.5\n2,3,0.5\n3,4,0.5\n"
            "1,star,0.0\n2,star,0.0\n"
        )
        out = tmp_path / "cert"
        code = run_cli([
            "certify",
            "--graph", str(tmp_path / "graph.csv"),
            "--flow", str(tmp_path / "flow.csv"),
            "--partition", str(tmp_path / "partition.csv"),
            "--observations", str(tmp_path / "observations.csv"),
            "--lambda", "1", "--out-dir", str(out),
        ])
        assert code == 2
        report = json.loads((out / "report.json").read_text())
        assert report["status"] == "indeterminate"
        assert report["indeterminate_clusters"] == [1]

    def test_missing_partition_usage_error(self, tmp_path, experiment_dir):
        code = run_cli([
            "certify",
            "--graph", str(experiment_dir / "graph.csv"),
            "--flow", str(experiment_dir / "flow.csv"),
            "--partition", str(tmp_path / "missing.csv"),
            "--observations", str(experiment_dir / "observations.csv"),
            "--out-dir", str(tmp_path / "cert"),
        ])
        assert code == 64


class TestExperimentChain:
    def test_default_run_passes(self, tmp_path, capsys):
        out = tmp_path / "exp"
        assert run_cli(["experiment-chain", "--out-dir", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["all_passed"] is True
        names = {c["name"] for c in report["checks"]}
        assert names >= {
            "dual_matches_reference",
            "primal_matches_reference",
            "certificate_verified",
            "strong_duality_at_certificate",
            "reference_objective",
            "gap_below_threshold",
        }
        stdout = capsys.readouterr().out
        assert "FAIL" not in stdout

    def test_figure_shaped_csvs(self, tmp_path):
        out = tmp_path / "exp"
        run_cli(["experiment-chain", "--out-dir", str(out)])
        assert read_signal_csv(out / "chain_signal.csv").tolist() == [1.0] * 5 + [0.0] * 5
        primal = read_signal_csv(out / "chain_primal.csv")
        assert primal.shape == (10,)
        dual_lines = (out / "chain_dual.csv").read_text().splitlines()
        assert dual_lines[0] == "i,y"
        assert len(dual_lines) == 10  # header plus one row per chain edge

    def test_small_lambda_reported_and_strict_exit(self, tmp_path):
        out1 = tmp_path / "soft"
        assert run_cli(["experiment-chain", "--lambda", "0.01", "--out-dir", str(out1)]) == 0
        report = json.loads((out1 / "report.json").read_text())
        assert report["all_passed"] is False
        failed = {c["name"] for c in report["checks"] if not c["passed"]}
        assert "dual_matches_reference" in failed
        assert "primal_matches_reference" in failed

        out2 = tmp_path / "strict"
        code = run_cli([
            "experiment-chain", "--lambda", "0.01", "--strict",
            "--out-dir", str(out2),
        ])
        assert code == 1

    def test_insufficient_iterations_flagged(self, tmp_path):
        out = tmp_path / "short"
        assert run_cli(["experiment-chain", "--iters", "10", "--out-dir", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        failed = {c["name"] for c in report["checks"] if not c["passed"]}
        assert "gap_below_threshold" in failed


class TestDeterminism:
    def test_identical_runs_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert run_cli(["experiment-chain", "--seed", "3", "--out-dir", str(out)]) == 0
        assert artifact_bytes(a) == artifact_bytes(b)

    def test_sbm_generation_deterministic(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert run_cli([
                "generate", "sbm", "--sizes", "4,4", "--p-in", "0.9",
                "--p-out", "0.3", "--seed", "11", "--out-dir", str(out),
            ]) == 0
        assert artifact_bytes(a) == artifact_bytes(b)
