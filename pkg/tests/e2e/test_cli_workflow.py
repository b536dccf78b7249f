"""
End-to-end tests driving the ddmp command line
"""
import json

import pytest

from main import cli_main

FAST = [
    "--epochs", "2", "--batch-size", "16", "--timesteps", "50", "--trajectory-length", "5",
    "--k", "5", "--hidden-dim", "16", "--time-dim", "8", "--n-tokens", "2", "--ff-blocks", "1",
    "--encoder-hidden", "16", "--encoder-epochs", "3", "--n-draws", "2", "--warmup-epochs", "0",
]


def _synth(out, seed=0):
    return cli_main([
        "synth", "--out", str(out), "--n", "80", "--classes", "3", "--dim", "4",
        "--separation", "6", "--q", "0.3", "--seed", str(seed),
    ])


@pytest.fixture
def dataset_dir(tmp_path):
    """Synthetic train.pld / test.pld written by the synth command"""
    out = tmp_path / "data"
    assert _synth(out) == 0
    return out


class TestWorkflow:
    """Test synth -> pretrain -> train -> eval"""

    def test_synth_writes_split(self, dataset_dir):
        """train.pld holds 80% of the instances"""
        header = (dataset_dir / "train.pld").read_text(encoding="utf-8").splitlines()[0]
        assert header == "PLD1 64 4 3 1"
        assert (dataset_dir / "test.pld").is_file()

    def test_train_then_eval(self, dataset_dir, tmp_path, capsys):
        """A full run leaves the model, log and report artifacts"""
        run = tmp_path / "run"
        assert cli_main(["train", "--data", str(dataset_dir / "train.pld"), "--out", str(run)] + FAST) == 0
        assert (run / "model.npz").is_file()
        assert (run / "encoder.npz").is_file()
        assert len((run / "train_log.jsonl").read_text(encoding="utf-8").splitlines()) == 2

        assert cli_main(["eval", "--data", str(dataset_dir / "test.pld"), "--run", str(run)]) == 0
        report = json.loads((run / "report.json").read_text(encoding="utf-8"))
        assert report["n_eval"] == 16
        assert (run / "reliability.csv").is_file()
        assert (run / "reliability.svg").is_file()
        assert "accuracy=" in capsys.readouterr().out

    def test_pretrained_encoder(self, dataset_dir, tmp_path):
        """train accepts an encoder written by pretrain"""
        enc_dir = tmp_path / "enc"
        run = tmp_path / "run"
        data = str(dataset_dir / "train.pld")
        assert cli_main(["pretrain", "--data", data, "--out", str(enc_dir)] + FAST) == 0
        assert cli_main(["train", "--data", data, "--out", str(run), "--encoder", str(enc_dir / "encoder.npz")]
                        + FAST) == 0
        assert not (run / "encoder.npz").exists()

    def test_reports_are_reproducible(self, tmp_path):
        """Two identical pipelines produce byte-identical report.json"""
        outputs = []
        for name in ("a", "b"):
            data, run = tmp_path / name / "data", tmp_path / name / "run"
            assert _synth(data, seed=4) == 0
            assert cli_main(["train", "--data", str(data / "train.pld"), "--out", str(run), "--seed", "4"]
                            + FAST) == 0
            assert cli_main(["eval", "--data", str(data / "test.pld"), "--run", str(run)]) == 0
            outputs.append((run / "report.json").read_bytes())
        assert outputs[0] == outputs[1]

    def test_dump_state(self, dataset_dir, tmp_path):
        """--dump-state writes per-epoch CSVs under the run directory"""
        run = tmp_path / "run"
        assert cli_main(["train", "--data", str(dataset_dir / "train.pld"), "--out", str(run), "--dump-state"]
                        + FAST) == 0
        assert len(list((run / "state").glob("S_epoch_*.csv"))) == 2


class TestExperimentCommands:
    """Test xval and ablate"""

    def test_xval(self, dataset_dir, tmp_path):
        """Per-fold reports and a summary"""
        out = tmp_path / "xval"
        assert cli_main(["xval", "--data", str(dataset_dir / "train.pld"), "--out", str(out), "--folds", "2"]
                        + FAST) == 0
        summary = json.loads((out / "xval.json").read_text(encoding="utf-8"))
        assert len(summary["folds"]) == 2

    def test_ablate(self, dataset_dir, tmp_path, capsys):
        """Four variants are printed and saved"""
        out = tmp_path / "ablate"
        assert cli_main(["ablate", "--data", str(dataset_dir / "train.pld"), "--out", str(out), "--seeds", "0"]
                        + FAST) == 0
        printed = capsys.readouterr().out
        for variant in ("DDMP ", "DDMP-w/o-I ", "DDMP-w/o-T ", "DDMP-w/o-IT "):
            assert variant in printed
        assert len(json.loads((out / "ablation.json").read_text(encoding="utf-8"))["rows"]) == 4


class TestErrors:
    """Test exit codes and messages"""

    def test_invalid_q(self, tmp_path, capsys):
        """An out-of-range flag exits 2 and names the flag"""
        assert cli_main(["synth", "--out", str(tmp_path), "--q", "1.5"]) == 2
        assert "--q" in capsys.readouterr().err

    def test_unknown_flag(self, tmp_path):
        """argparse usage errors exit 2"""
        assert cli_main(["synth", "--out", str(tmp_path), "--bogus"]) == 2

    def test_missing_command(self):
        """A subcommand is required"""
        assert cli_main([]) == 2

    def test_missing_dataset(self, tmp_path, capsys):
        """A missing data file is a runtime failure"""
        assert cli_main(["train", "--data", str(tmp_path / "nope.pld"), "--out", str(tmp_path / "run")]) == 1
        assert "dataset not found" in capsys.readouterr().err

    def test_malformed_dataset(self, tmp_path, capsys):
        """Parse errors report the file and line"""
        path = tmp_path / "bad.pld"
        path.write_text("PLD1 1 1 2 0\n1.0\n\n", encoding="utf-8")
        assert cli_main(["train", "--data", str(path), "--out", str(tmp_path / "run")]) == 1
        assert "line" in capsys.readouterr().err

    def test_config_file(self, dataset_dir, tmp_path):
        """A config file value is rejected like the flag it stands for"""
        cfg = tmp_path / "run.cfg"
        cfg.write_text("lam = 2\n", encoding="utf-8")
        code = cli_main(["train", "--data", str(dataset_dir / "train.pld"), "--out", str(tmp_path / "run"),
                         "--config", str(cfg)])
        assert code == 2

    def test_eval_feature_width_mismatch(self, dataset_dir, tmp_path, capsys):
        """Evaluating on data of another width exits 1 with a message"""
        run = tmp_path / "run"
        assert cli_main(["train", "--data", str(dataset_dir / "train.pld"), "--out", str(run)] + FAST) == 0
        wide = tmp_path / "wide"
        assert cli_main(["synth", "--out", str(wide), "--n", "40", "--classes", "3", "--dim", "5"]) == 0
        assert cli_main(["eval", "--data", str(wide / "test.pld"), "--run", str(run)]) == 1
        assert "5 features" in capsys.readouterr().err
