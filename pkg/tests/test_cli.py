"""End-to-end command-line workflows: synth -> train -> detect -> eval."""

import filecmp
import json
import os
import shutil

import numpy as np
import pytest

from jointcascade.cli import build_parser, main
from jointcascade.dataio import read_probs, read_pts, sample_stem


def run_cli(*argv):
    return main(list(argv))


def dir_bytes(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as f:
            out[name] = f.read()
    return out


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("cli") / "data")
    assert run_cli("synth", "--out", path, "--n", "12", "--seed", "3") == 0
    return path


@pytest.fixture(scope="module")
def model_path(tmp_path_factory, data_dir):
    path = str(tmp_path_factory.mktemp("cli") / "model.json")
    code = run_cli(
        "train",
        "--data", data_dir,
        "--out", path,
        "--stages", "2",
        "--hidden", "12",
        "--epochs", "25",
        "--seed", "4",
    )
    assert code == 0
    return path


@pytest.fixture(scope="module")
def pred_dir(tmp_path_factory, data_dir, model_path):
    path = str(tmp_path_factory.mktemp("cli") / "preds")
    code = run_cli(
        "detect",
        "--model", model_path,
        "--data", data_dir,
        "--out", path,
        "--trace",
    )
    assert code == 0
    return path


class TestSynth:
    def test_reports_sample_count(self, tmp_path, capsys):
        out = str(tmp_path / "d")
        assert run_cli("synth", "--out", out, "--n", "3") == 0
        assert "wrote 3 samples" in capsys.readouterr().out

    def test_same_seed_writes_identical_directories(self, tmp_path, data_dir):
        again = str(tmp_path / "again")
        assert run_cli("synth", "--out", again, "--n", "12", "--seed", "3") == 0
        assert dir_bytes(again) == dir_bytes(data_dir)

    def test_layout(self, data_dir):
        names = set(os.listdir(data_dir))
        assert "manifest.txt" in names
        for i in range(12):
            stem = sample_stem(i)
            for ext in (".pgm", ".pts", ".au", ".box"):
                assert stem + ext in names

    @pytest.mark.parametrize(
        "argv",
        [
            ("synth", "--out", "x", "--n", "0"),
            ("synth", "--out", "x", "--n", "two"),
            ("synth", "--out", "x", "--n", "1", "--coupling", "0:1"),
            ("synth", "--out", "x"),
        ],
    )
    def test_usage_errors_exit_2(self, argv, tmp_path):
        argv = tuple(a if a != "x" else str(tmp_path / "d") for a in argv)
        with pytest.raises(SystemExit) as exc:
            run_cli(*argv)
        assert exc.value.code == 2

    def test_bad_coupling_index_exits_1(self, tmp_path, capsys):
        out = str(tmp_path / "d")
        code = run_cli(
            "synth", "--out", out, "--n", "1", "--coupling", "0:99:1.0"
        )
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_parser_defaults(self):
        args = build_parser().parse_args(["train", "--data", "d", "--out", "m"])
        assert args.stages == 4
        assert args.lambda_shape == 0.5
        assert args.lambda_prob == 0.5
        assert args.hidden == 150
        assert args.epochs == 800
        assert args.variant == "full"

    def test_model_file_echoes_settings(self, model_path):
        doc = json.loads(open(model_path).read())
        assert doc["config"]["stages"] == 2
        assert doc["config"]["lambda_shape"] == 0.5
        assert doc["config"]["variant"] == "full"
        assert doc["n_hidden"] == 12
        assert doc["n_landmarks"] == 28
        assert doc["n_aus"] == 8
        assert len(doc["stages"]) == 2

    def test_same_seed_writes_identical_model_files(
        self, tmp_path, data_dir, model_path
    ):
        again = str(tmp_path / "again.json")
        code = run_cli(
            "train",
            "--data", data_dir,
            "--out", again,
            "--stages", "2",
            "--hidden", "12",
            "--epochs", "25",
            "--seed", "4",
        )
        assert code == 0
        assert filecmp.cmp(again, model_path, shallow=False)

    def test_missing_dataset_exits_1(self, tmp_path, capsys):
        code = run_cli(
            "train",
            "--data", str(tmp_path / "nowhere"),
            "--out", str(tmp_path / "m.json"),
        )
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestDetect:
    def test_batch_outputs(self, pred_dir):
        names = set(os.listdir(pred_dir))
        assert "detect_meta.txt" in names
        for i in range(12):
            stem = sample_stem(i)
            for ext in (".pts", ".auprob", ".au", ".trace.txt"):
                assert stem + ext in names

    def test_probabilities_are_valid(self, pred_dir):
        for i in range(12):
            p = read_probs(os.path.join(pred_dir, sample_stem(i) + ".auprob"))
            assert p.shape == (8,)
            assert np.all(p >= 0.0) and np.all(p <= 1.0)

    def test_labels_consistent_with_probs(self, pred_dir):
        for i in range(3):
            stem = sample_stem(i)
            p = read_probs(os.path.join(pred_dir, stem + ".auprob"))
            with open(os.path.join(pred_dir, stem + ".au")) as f:
                labels = [int(tok) for tok in f.read().split()]
            assert labels == list((p >= 0.5).astype(int))

    def test_trace_has_one_record_per_stage_plus_init(self, pred_dir):
        path = os.path.join(pred_dir, sample_stem(0) + ".trace.txt")
        lines = open(path).read().splitlines()
        assert lines[0] == "records 3"
        assert sum(1 for ln in lines if ln.startswith("record ")) == 3

    def test_detect_meta_contents(self, pred_dir):
        text = open(os.path.join(pred_dir, "detect_meta.txt")).read()
        assert "variant full" in text
        assert "stages 2" in text
        assert "n_samples 12" in text

    def test_single_image_matches_batch(
        self, tmp_path, data_dir, model_path, pred_dir
    ):
        prefix = str(tmp_path / "single")
        code = run_cli(
            "detect",
            "--model", model_path,
            "--image", os.path.join(data_dir, sample_stem(0) + ".pgm"),
            "--box", os.path.join(data_dir, sample_stem(0) + ".box"),
            "--out", prefix,
        )
        assert code == 0
        batch_pts = os.path.join(pred_dir, sample_stem(0) + ".pts")
        assert open(prefix + ".pts").read() == open(batch_pts).read()
        batch_probs = os.path.join(pred_dir, sample_stem(0) + ".auprob")
        assert open(prefix + ".auprob").read() == open(batch_probs).read()

    def test_requires_exactly_one_mode(self, tmp_path, data_dir, model_path, capsys):
        code = run_cli(
            "detect",
            "--model", model_path,
            "--image", "a.pgm",
            "--data", data_dir,
            "--out", str(tmp_path / "o"),
        )
        assert code == 1
        code = run_cli(
            "detect", "--model", model_path, "--out", str(tmp_path / "o")
        )
        assert code == 1
        assert "single" in capsys.readouterr().err

    def test_label_schema_mismatch_exits_1(
        self, tmp_path, model_path, capsys
    ):
        other = str(tmp_path / "data4")
        assert run_cli("synth", "--out", other, "--n", "2", "--aus", "4") == 0
        code = run_cli(
            "detect",
            "--model", model_path,
            "--data", other,
            "--out", str(tmp_path / "preds"),
        )
        assert code == 1
        assert "labels" in capsys.readouterr().err


class TestEval:
    def test_scores_detections(self, data_dir, pred_dir, tmp_path, capsys):
        report = str(tmp_path / "report.json")
        code = run_cli(
            "eval", "--pred", pred_dir, "--gt", data_dir, "--out", report
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "variant full" in out
        assert any(ln.startswith("error ") for ln in out.splitlines())
        assert any(ln.startswith("f1 ") for ln in out.splitlines())
        assert any(ln.startswith("auc ") for ln in out.splitlines())
        doc = json.loads(open(report).read())
        assert doc["variant"] == "full"
        assert 0.0 <= doc["mean_normalized_error"] < 1.0

    def test_missing_predictions_exit_1(self, data_dir, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = run_cli("eval", "--pred", str(empty), "--gt", data_dir)
        assert code == 1
        assert "misaligned" in capsys.readouterr().err

    def test_extra_predictions_exit_1(self, pred_dir, tmp_path, capsys):
        small_gt = str(tmp_path / "gt3")
        assert run_cli("synth", "--out", small_gt, "--n", "3", "--seed", "3") == 0
        code = run_cli("eval", "--pred", pred_dir, "--gt", small_gt)
        assert code == 1
        assert "misaligned" in capsys.readouterr().err

    def test_predictions_survive_copy(self, data_dir, pred_dir, tmp_path):
        # outputs are plain files; a copied directory evaluates identically
        copied = str(tmp_path / "copy")
        shutil.copytree(pred_dir, copied)
        a = read_pts(os.path.join(pred_dir, sample_stem(1) + ".pts"))
        b = read_pts(os.path.join(copied, sample_stem(1) + ".pts"))
        assert np.array_equal(a.points, b.points)
