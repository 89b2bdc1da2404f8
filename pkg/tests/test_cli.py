"""End-to-end command-line tests, run in process via main()."""

import json

import numpy as np
import pytest

from urgentbayes.cli import main
from urgentbayes.synthetic import synthetic_posts, write_posts_csv

TINY_CFG = """
max_len = 8
embed_dim = 4
hidden_dim = 3
z_dim = 2
epochs = 2
batch_size = 8
min_frequency = 1
mcd_samples = 5
vi_test_samples = 5
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    csv_path = root / "posts.csv"
    write_posts_csv(str(csv_path), synthetic_posts(24, 0.5, seed=0))
    cfg_path = root / "tiny.cfg"
    cfg_path.write_text(TINY_CFG)
    prepared = root / "prep"
    code = main(
        [
            "prepare",
            "--data", str(csv_path),
            "--out", str(prepared),
            "--config", str(cfg_path),
        ]
    )
    assert code == 0
    return {
        "root": root,
        "csv": str(csv_path),
        "cfg": str(cfg_path),
        "vocab": str(prepared / "vocab.txt"),
        "dataset": str(prepared / "dataset.npz"),
        "summary": str(prepared / "summary.json"),
    }


def run_cli(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPrepare:
    def test_summary_contents(self, workspace):
        summary = json.loads(open(workspace["summary"]).read())
        assert summary["n_posts"] == 24
        assert summary["class_counts"] == {"0": 12, "1": 12}
        assert summary["vocab_size"] > 2
        assert 0.0 < summary["token_coverage"] <= 1.0

    def test_hand_counted_small_file(self, tmp_path, capsys):
        posts = synthetic_posts(10, 0.3, seed=5)
        csv_path = tmp_path / "ten.csv"
        write_posts_csv(str(csv_path), posts)
        code, out, _ = run_cli(
            capsys,
            ["prepare", "--data", str(csv_path), "--out", str(tmp_path / "o"),
             "--min-freq", "1", "--max-len", "8"],
        )
        assert code == 0
        summary = json.loads(out)
        expected_pos = sum(1 for p in posts if p.urgency > 4)
        assert summary["class_counts"]["1"] == expected_pos == 3

    def test_empty_file_is_data_error(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code, _, err = run_cli(
            capsys, ["prepare", "--data", str(empty), "--out", str(tmp_path / "o")]
        )
        assert code == 2
        assert "error" in err

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys,
            ["prepare", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")],
        )
        assert code == 2


class TestTrain:
    def train(self, capsys, workspace, out_dir, model="base", seed=0):
        return run_cli(
            capsys,
            [
                "train", "--model", model,
                "--config", workspace["cfg"],
                "--seed", str(seed),
                "--data", workspace["dataset"],
                "--vocab", workspace["vocab"],
                "--out", out_dir,
            ],
        )

    def test_writes_artifacts(self, workspace, tmp_path, capsys):
        out = tmp_path / "run"
        code, stdout, _ = self.train(capsys, workspace, str(out))
        assert code == 0
        info = json.loads(stdout)
        assert info["model_kind"] == "base"
        assert info["epochs"] == 2
        trace = json.loads((out / "loss_trace.json").read_text())
        assert len(trace) == 2 and "cross_entropy" in trace[0]["parts"]
        assert (out / "model_base.ckpt").exists()
        assert (out / "effective_config.txt").exists()

    def test_same_seed_identical_checkpoints(self, workspace, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self.train(capsys, workspace, str(a), seed=9)[0] == 0
        assert self.train(capsys, workspace, str(b), seed=9)[0] == 0
        assert (a / "model_base.ckpt").read_bytes() == (b / "model_base.ckpt").read_bytes()

    def test_vi_trace_parts(self, workspace, tmp_path, capsys):
        out = tmp_path / "vi"
        code, _, _ = self.train(capsys, workspace, str(out), model="vi")
        assert code == 0
        trace = json.loads((out / "loss_trace.json").read_text())
        assert set(trace[0]["parts"]) == {"reconstruction", "kl"}

    def test_missing_paths_usage_error(self, workspace, capsys):
        code, _, err = run_cli(
            capsys, ["train", "--model", "base", "--config", workspace["cfg"]]
        )
        assert code == 1
        assert "error" in err


@pytest.fixture(scope="module")
def mcd_checkpoint(workspace, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    code = main(
        ["train", "--model", "mcd", "--config", workspace["cfg"],
         "--data", workspace["dataset"], "--vocab", workspace["vocab"],
         "--out", str(out)]
    )
    assert code == 0
    return str(out / "model_mcd.ckpt")


@pytest.fixture(scope="module")
def vi_checkpoint(workspace, tmp_path_factory):
    out = tmp_path_factory.mktemp("pred")
    code = main(
        ["train", "--model", "vi", "--config", workspace["cfg"],
         "--data", workspace["dataset"], "--vocab", workspace["vocab"],
         "--out", str(out)]
    )
    assert code == 0
    return str(out / "model_vi.ckpt")


class TestEvaluate:
    def test_report_schema_and_order(self, workspace, mcd_checkpoint, capsys):
        checkpoint = mcd_checkpoint
        code, out, _ = run_cli(
            capsys, ["evaluate", "--checkpoint", checkpoint, "--test", workspace["dataset"]]
        )
        assert code == 0
        report = json.loads(out)
        assert list(report)[:2] == ["accuracy", "mean_entropy"]
        assert list(report["class_0"]) == ["precision", "recall", "f1"]
        assert 0.0 <= report["accuracy"] <= 1.0
        assert report["n_test"] == 24

    def test_missing_checkpoint_is_data_error(self, workspace, tmp_path, capsys):
        code, _, err = run_cli(
            capsys,
            [
                "evaluate",
                "--checkpoint",
                str(tmp_path / "absent.ckpt"),
                "--test",
                workspace["dataset"],
            ],
        )
        assert code == 2
        assert "error" in err

    def test_truncated_checkpoint(self, workspace, mcd_checkpoint, tmp_path, capsys):
        broken = tmp_path / "broken.ckpt"
        blob = open(mcd_checkpoint, "rb").read()
        broken.write_bytes(blob[: len(blob) // 2])
        code, _, err = run_cli(
            capsys,
            ["evaluate", "--checkpoint", str(broken), "--test", workspace["dataset"]],
        )
        assert code == 2
        assert "error" in err


class TestExperiment:
    def run_exp(self, capsys, workspace, extra=()):
        return run_cli(
            capsys,
            [
                "experiment", "--protocol", "80_20", "--runs", "1",
                "--models", "base", "--config", workspace["cfg"],
                "--data", workspace["dataset"], "--vocab", workspace["vocab"],
                "--seed", "3", *extra,
            ],
        )

    def test_single_run_zero_variance(self, workspace, capsys):
        code, out, _ = self.run_exp(capsys, workspace)
        assert code == 0
        summary = json.loads(out)
        assert summary["n_runs"] == 1
        assert all(v == 0.0 for v in summary["models"]["base"]["variance"].values())

    def test_byte_identical_reruns(self, workspace, capsys):
        _, first, _ = self.run_exp(capsys, workspace)
        _, second, _ = self.run_exp(capsys, workspace)
        assert first == second

    def test_writes_summary_file(self, workspace, tmp_path, capsys):
        out_dir = tmp_path / "expout"
        code, stdout, _ = self.run_exp(capsys, workspace, ("--out", str(out_dir)))
        assert code == 0
        on_disk = (out_dir / "experiment_summary.json").read_text()
        assert on_disk == stdout.rstrip("\n")

    def test_unknown_model_kind(self, workspace, capsys):
        code, _, err = run_cli(
            capsys,
            ["experiment", "--protocol", "80_20", "--runs", "1",
             "--models", "base,transformer", "--data", workspace["dataset"],
             "--vocab", workspace["vocab"]],
        )
        assert code == 1


class TestPredict:
    def test_record_schema(self, vi_checkpoint, capsys):
        code, out, _ = run_cli(
            capsys,
            ["predict", "--checkpoint", vi_checkpoint,
             "--text", "deadline tomorrow for the quiz"],
        )
        assert code == 0
        record = json.loads(out)
        assert record["model_kind"] == "vi"
        assert record["predicted_label"] in (0, 1)
        assert len(record["mean_probs"]) == 2
        assert record["num_samples"] == 5
        assert "per_sample_logits" not in record

    def test_show_samples(self, vi_checkpoint, capsys):
        code, out, _ = run_cli(
            capsys,
            ["predict", "--checkpoint", vi_checkpoint, "--text", "thanks for sharing",
             "--show-samples"],
        )
        record = json.loads(out)
        assert len(record["per_sample_logits"]) == 5

    def test_deterministic_given_seed(self, vi_checkpoint, capsys):
        argv = ["predict", "--checkpoint", vi_checkpoint, "--text", "the quiz", "--seed", "4"]
        _, a, _ = run_cli(capsys, argv)
        _, b, _ = run_cli(capsys, argv)
        assert a == b

    def test_blank_text_rejected(self, vi_checkpoint, capsys):
        code, _, err = run_cli(
            capsys, ["predict", "--checkpoint", vi_checkpoint, "--text", "   "]
        )
        assert code == 2
        assert "no tokens" in err


class TestUsageErrors:
    def test_missing_subcommand(self, capsys):
        assert run_cli(capsys, [])[0] == 1

    def test_unknown_subcommand(self, capsys):
        assert run_cli(capsys, ["frobnicate"])[0] == 1

    def test_missing_required_flag(self, capsys):
        assert run_cli(capsys, ["evaluate", "--test", "x.npz"])[0] == 1

    def test_bad_config_key_maps_to_usage(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("hidden_dims = 4\n")
        code, _, err = run_cli(
            capsys,
            ["train", "--model", "base", "--config", str(bad),
             "--data", workspace["dataset"], "--vocab", workspace["vocab"],
             "--out", str(tmp_path / "o")],
        )
        assert code == 1
        assert "unknown key" in err
