import json
import math
from pathlib import Path

import pytest

from gcrp import cli, harness

GOLDEN = Path(__file__).parent / "golden"


def run_cli(args):
    return cli.main([str(a) for a in args])


def read_tree(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


class TestUsage:
    def test_missing_alpha_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(["simulate", "--theta", "0.5", "--n", "10", "--out", "/tmp/x"])
        assert exc.value.code == 2

    def test_invalid_regime_exits_2_with_table(self, tmp_path, capsys):
        code = run_cli([
            "simulate", "--alpha", "1.0", "--theta", "0.5",
            "--n", "10", "--out", tmp_path,
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "Polynomial" in err and "BoundedParts" in err

    def test_verify_regime_guard(self, tmp_path, capsys):
        code = run_cli([
            "verify", "lln", "--alpha", "0", "--theta", "2.0",
            "--n", "100", "--replicas", "2", "--out", tmp_path,
        ])
        assert code == 2

    def test_thm_v_delta_domain_error(self, tmp_path, capsys):
        code = run_cli([
            "verify", "thm-v", "--alpha", "0.5", "--theta", "0.5",
            "--n", "500", "--replicas", "5", "--delta", "0.9",
            "--out", tmp_path,
        ])
        assert code == 2
        assert "exp(-K)" in capsys.readouterr().err


class TestSimulate:
    def test_reruns_are_byte_identical(self, tmp_path):
        args = ["simulate", "--alpha", "0.5", "--theta", "0.5", "--n", "1000",
                "--replicas", "3", "--seed", "7"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(args + ["--out", a]) == 0
        assert run_cli(args + ["--out", b]) == 0
        ta, tb = read_tree(a), read_tree(b)
        assert set(ta) == {"trajectories.jsonl", "histogram.csv", "manifest.json"}
        assert ta == tb

    def test_manifest_digest_embedded_everywhere(self, tmp_path):
        run_cli(["simulate", "--alpha", "0.5", "--theta", "0.5", "--n", "100",
                 "--replicas", "2", "--seed", "1", "--out", tmp_path])
        man = json.loads((tmp_path / "manifest.json").read_text())
        digest = man["manifest_digest"]
        first = json.loads((tmp_path / "trajectories.jsonl").read_text().splitlines()[0])
        assert first["manifest_digest"] == digest
        assert (tmp_path / "histogram.csv").read_text().splitlines()[0] == \
            f"# manifest_digest={digest}"
        assert sorted(man["outputs"]) == ["histogram.csv", "trajectories.jsonl"]

    def test_explicit_checkpoints(self, tmp_path):
        run_cli(["simulate", "--alpha", "0.5", "--theta", "0.5", "--n", "50",
                 "--replicas", "1", "--seed", "1", "--checkpoints", "10,20",
                 "--out", tmp_path])
        rec = json.loads(
            (tmp_path / "trajectories.jsonl").read_text().splitlines()[1]
        )
        assert rec["n"] == [10, 20, 50]


class TestConstants:
    def test_schema_and_provenance(self, tmp_path):
        assert run_cli(["constants", "--alpha", "0.5", "--theta", "0.5",
                        "--out", tmp_path]) == 0
        doc = json.loads((tmp_path / "constants.json").read_text())
        keys = {"K", "R", "c1", "c2", "c3", "cV", "c_star", "cM", "h",
                "c_main", "theta_inf"}
        assert keys <= set(doc["constants"])
        assert keys <= set(doc["provenance"])
        assert doc["derived"]["C_U"] > 0 and doc["derived"]["D"] > 0
        assert len(doc["coefficients"]["k"]) == 50

    def test_override_flags(self, tmp_path):
        run_cli(["constants", "--alpha", "0.5", "--theta", "0.5",
                 "--c3", "0.2", "--cm", "0.3", "--out", tmp_path])
        doc = json.loads((tmp_path / "constants.json").read_text())
        assert doc["constants"]["c3"] == 0.2
        assert doc["constants"]["cM"] == 0.3


class TestOracleCmd:
    def test_matches_golden(self, tmp_path):
        assert run_cli(["oracle", "--alpha", "0.5", "--theta", "0.5",
                        "--n", "4", "--out", tmp_path]) == 0
        got = json.loads((tmp_path / "exact_laws.json").read_text())
        want = json.loads((GOLDEN / "oracle_n4_alpha0.5_theta0.5.json").read_text())
        assert got["laws"] == want["laws"]

    def test_cap_is_usage_error(self, tmp_path):
        assert run_cli(["oracle", "--alpha", "0.5", "--theta", "0.5",
                        "--n", "13", "--out", tmp_path]) == 2


class TestGammaAuditCmd:
    def test_defaults_pass(self, tmp_path):
        assert run_cli(["gamma-audit", "--out", tmp_path]) == 0
        doc = json.loads((tmp_path / "audit.json").read_text())
        assert all(r["passed"] for r in doc["results"])
        assert len(doc["results"]) == 8


class TestVerifyCmd:
    def test_vm_small_run_passes(self, tmp_path):
        code = run_cli(["verify", "vm", "--alpha", "0.5", "--theta", "0.5",
                        "--n", "5000", "--replicas", "150", "--seed", "2",
                        "--out", tmp_path])
        assert code == 0
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["report"]["verdict"] == "PASS"
        assert doc["report"]["trials"] == 150
        csv_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert csv_lines[1].startswith("event,")

    def test_fault_injection_fails_with_exit_1(self, tmp_path, monkeypatch):
        """Halving the normalizer doubles V/phi; the sup-tail check must
        flip to FAIL and the command must exit 1."""
        import gcrp.harness as h

        real = h.log_phi

        def corrupted(n, params):
            return real(n, params) - math.log(2.0)

        monkeypatch.setattr(h, "log_phi", corrupted)
        code = run_cli(["verify", "vm", "--alpha", "0.5", "--theta", "0.5",
                        "--n", "5000", "--replicas", "150", "--seed", "2",
                        "--out", tmp_path])
        assert code == 1
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["report"]["verdict"] == "FAIL"
