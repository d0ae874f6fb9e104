import json
import subprocess
import sys

import pytest

from conformal_abstention.cli import main
from conformal_abstention.records import parse_scored_examples
from conformal_abstention.calibrate import ThresholdPolicy


def run(argv, capsys):
    status = main(argv)
    out, err = capsys.readouterr()
    return status, out, err


class TestBound:
    def test_kl_closed_form(self, capsys):
        status, out, _ = run(["bound", "--kind", "bernoulli-kl", "--mean", "0", "--n", "100",
                              "--delta", "0.05"], capsys)
        assert status == 0
        assert float(out) == pytest.approx(0.0516040296, abs=1e-6)

    def test_bernstein_losses(self, capsys):
        status, out, _ = run(["bound", "--kind", "empirical-bernstein",
                              "--losses", ",".join(["0"] * 100)], capsys)
        assert status == 0 and float(out) == pytest.approx(0.04347, abs=1e-4)

    def test_missing_args_is_usage_error(self, capsys):
        status, _, err = run(["bound", "--kind", "hoeffding"], capsys)
        assert status == 2
        assert json.loads(err)["error"] == "usage"


class TestCalibrateApply:
    def test_crc_policy_file(self, four_point_jsonl, tmp_path, capsys):
        pol = tmp_path / "p.json"
        status, _, _ = run(["calibrate", "--method", "crc", "--alpha", "0.4",
                            "--input", str(four_point_jsonl), "--output", str(pol)], capsys)
        assert status == 0
        obj = json.loads(pol.read_text())
        assert obj["lambda"] == 3 and obj["method"] == "crc" and obj["n_calibration"] == 4

    def test_apply_reproduces_calibration_stats(self, four_point_jsonl, tmp_path, capsys):
        pol = tmp_path / "p.json"
        run(["calibrate", "--method", "rcps", "--bound", "hoeffding", "--alpha", "0.9",
             "--input", str(four_point_jsonl), "--output", str(pol)], capsys)
        status, out, _ = run(["apply", "--policy", str(pol), "--input", str(four_point_jsonl),
                              "--with-ids"], capsys)
        assert status == 0
        data = parse_scored_examples(four_point_jsonl.read_bytes())
        decisions = dict(line.split("\t") for line in out.splitlines())
        answered = [ex for ex in data.examples if decisions[ex.id] == "answer"]
        policy = ThresholdPolicy.from_json(pol.read_text())
        assert sum(not ex.matched for ex in answered) / len(data) == pytest.approx(policy.calibration_loss)
        assert 1 - len(answered) / len(data) == pytest.approx(policy.calibration_abstention)

    def test_always_abstain(self, four_point_jsonl, tmp_path, capsys):
        pol = tmp_path / "p.json"
        pol.write_text(ThresholdPolicy(float("inf"), "crc", 0.1, 4).to_json())
        status, out, _ = run(["apply", "--policy", str(pol), "--input", str(four_point_jsonl)], capsys)
        assert status == 0 and out.splitlines() == ["abstain"] * 4

    def test_infeasible_is_domain_error(self, four_point_jsonl, capsys):
        status, out, err = run(["calibrate", "--method", "crc", "--alpha", "0.1",
                                "--input", str(four_point_jsonl)], capsys)
        assert status == 1 and out == ""
        line = json.loads(err)
        assert line["error"] == "GuaranteeInfeasible"

    def test_parse_error_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "a", "score": "x", "matched": true}\n')
        status, _, err = run(["calibrate", "--method", "baseline", "--alpha", "0.1",
                              "--input", str(bad)], capsys)
        assert status == 1
        assert json.loads(err)["error"] == "ParseError" and "line 1" in json.loads(err)["message"]

    def test_rcps_needs_bound(self, four_point_jsonl, capsys):
        status, _, _ = run(["calibrate", "--method", "rcps", "--alpha", "0.5",
                            "--input", str(four_point_jsonl)], capsys)
        assert status == 2


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        status, _, err = run(["frobnicate"], capsys)
        assert status == 2 and json.loads(err)["error"] == "usage"

    def test_unknown_flag(self, capsys):
        status, _, _ = run(["bound", "--kind", "hoeffding", "--bogus", "1"], capsys)
        assert status == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "conformal_abstention", "bound", "--kind",
                               "hoeffding", "--mean", "0.1", "--n", "200"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert float(proc.stdout) == pytest.approx(0.18654, abs=1e-4)


class TestOtherSubcommands:
    def test_score(self, tmp_path, capsys):
        src = tmp_path / "b.jsonl"
        src.write_text(
            '{"id": "q1", "pairwise_similarities": [[0, 9, 2], [9, 0, 8], [2, 8, 0]], "matched": true}\n'
            '{"id": "q2", "pairwise_similarities": [[0, 1, 1], [1, 0, 1], [1, 1, 0]], "matched": false}\n'
        )
        status, out, _ = run(["score", "--input", str(src), "--beta", "5"], capsys)
        assert status == 0
        data = parse_scored_examples(out)
        assert data.scores.tolist() == [2.0, 0.0] and data.k == 2

    def test_match_calibrate(self, tmp_path, capsys):
        src = tmp_path / "m.jsonl"
        rows = zip([9, 8, 7, 6, 5, 4], [True, True, False, True, False, False])
        src.write_text("".join(
            json.dumps({"id": f"r{i}", "similarity": s, "human_correct": c}) + "\n"
            for i, (s, c) in enumerate(rows)))
        status, out, _ = run(["match-calibrate", "--alpha", "0.3", "--input", str(src)], capsys)
        obj = json.loads(out)
        assert status == 0 and obj["beta_hat"] == 6 and obj["C_count"] <= obj["L1_count"] + obj["L2_count"]

    def test_render_prompt(self, capsys):
        status, out, _ = run(["render-prompt", "--template", "answer", "--slot", "query=Q1"], capsys)
        assert status == 0 and out.startswith("Answer the following question: Q: Q1 A:")

    def test_render_prompt_missing_slot(self, capsys):
        status, _, err = run(["render-prompt", "--template", "pairwise-similarity"], capsys)
        assert status == 1 and json.loads(err)["error"] == "TemplateError"

    def test_evaluate_reproducible(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sample_sizes": [10, 50], "replicates_per_size": 3, "alpha": 0.2}))
        argv = ["evaluate", "--synthetic-pool", "300", "--config", str(cfg), "--seed", "4"]
        first = run(argv, capsys)[1]
        second = run(argv, capsys)[1]
        assert first == second and first.startswith("method,size,")
        assert len(first.strip().splitlines()) == 1 + 5 * 2

    def test_evaluate_flag_overrides_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sample_sizes": [10, 50], "replicates_per_size": 3}))
        _, out, _ = run(["evaluate", "--synthetic-pool", "300", "--config", str(cfg),
                         "--method", "crc", "--sizes", "20"], capsys)
        assert [l.split(",")[:2] for l in out.strip().splitlines()[1:]] == [["crc", "20"]]

    def test_evaluate_input_file(self, four_point_jsonl, capsys):
        status, out, _ = run(["evaluate", "--input", str(four_point_jsonl), "--sizes", "2",
                              "--test-fraction", "0.25", "--method", "baseline", "--format", "markdown"],
                             capsys)
        assert status == 0 and "| baseline | 2 |" in out

    def test_validate_small(self, capsys):
        status, out, _ = run(["validate", "--check", "crc", "--trials", "100", "--n-test", "1000"], capsys)
        res = json.loads(out)
        assert status == 0 and res["holds"] and res["trials"] == 100
