"""Tests for the command-line interface.

Commands run in-process through ``cli.main`` against a miniature corpus so
the whole generate/train/eval cycle stays under a few seconds; one test
exercises the installed console script end to end in a subprocess.
"""

import shutil
import subprocess

import pytest

from invnet import cli, corpus, features, gradcheck, model, training
from invnet.config import parse_config_file

TINY_CFG = """
corpus.num_classes = 4
corpus.base_dim = 5
corpus.num_conditions = 2
corpus.seed = 77
corpus.clean_utterances = 8
corpus.noisy_utterances_per_condition = 4
corpus.test_utterances_per_condition = 2
corpus.frames_per_utterance = 10
corpus.segment_length = 5
network.hidden = 16
network.context = 2
training.max_epochs = 2
training.batch_size = 16
training.holdout_fraction = 0.2
sweep.seeds = 1, 2
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


def run_cli(*argv):
    return cli.main(list(argv))


class TestExitCodes:
    """0 success, 1 usage/config, 2 runtime, 3 failed self-check."""

    def test_unknown_command_is_usage_error(self):
        assert run_cli("explode") == cli.EXIT_USAGE

    def test_missing_command_is_usage_error(self):
        assert run_cli() == cli.EXIT_USAGE

    def test_help_exits_zero(self):
        assert run_cli("--help") == cli.EXIT_OK

    def test_bad_override_is_usage_error(self, tmp_path):
        assert run_cli("generate", "--set", "nope.key=1",
                       "--out", str(tmp_path)) == cli.EXIT_USAGE

    def test_missing_config_file_is_usage_error(self, tmp_path):
        assert run_cli("generate", "--config", str(tmp_path / "none.cfg"),
                       "--out", str(tmp_path)) == cli.EXIT_USAGE

    def test_train_without_corpus_is_runtime_error(self, tmp_path, capsys):
        assert run_cli("train", "--out", str(tmp_path)) == cli.EXIT_RUNTIME
        assert "generate" in capsys.readouterr().err

    def test_corrupt_corpus_is_runtime_error(self, cfg_file, tmp_path):
        (tmp_path / "corpus.bin").write_bytes(b"not a corpus at all")
        assert run_cli("train", "--config", str(cfg_file),
                       "--out", str(tmp_path)) == cli.EXIT_RUNTIME

    def test_gradcheck_exit_codes_follow_report(self, monkeypatch, tmp_path):
        def fake_passing(**kwargs):
            return gradcheck.GradCheckReport(
                max_rel_err=1e-8, tolerance=1e-5, instances=1,
                per_subset={"encoder": 1e-8},
            )

        def fake_failing(**kwargs):
            return gradcheck.GradCheckReport(
                max_rel_err=0.5, tolerance=1e-5, instances=1,
                per_subset={"encoder": 0.5},
            )

        monkeypatch.setattr(gradcheck, "composite_gradient_check",
                            fake_passing)
        assert run_cli("gradcheck", "--out", str(tmp_path)) == cli.EXIT_OK
        monkeypatch.setattr(gradcheck, "composite_gradient_check",
                            fake_failing)
        assert run_cli("gradcheck",
                       "--out", str(tmp_path)) == cli.EXIT_CHECK_FAILED


class TestGenerateTrainEval:
    """The basic workflow against one output directory."""

    def test_full_cycle_writes_all_artifacts(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path)
        assert run_cli("generate", "--config", str(cfg_file), "--out", out) \
            == cli.EXIT_OK
        assert (tmp_path / "corpus.bin").exists()
        assert "train" in capsys.readouterr().out

        assert run_cli("train", "--config", str(cfg_file), "--out", out) \
            == cli.EXIT_OK
        for name in ("checkpoint.bin", "norm.bin", "epochs.csv"):
            assert (tmp_path / name).exists()
        assert "best holdout accuracy" in capsys.readouterr().out
        header = (tmp_path / "epochs.csv").read_text().splitlines()[0]
        assert header == training.EPOCH_LOG_HEADER

        assert run_cli("eval", "--config", str(cfg_file), "--out", out) \
            == cli.EXIT_OK
        text = capsys.readouterr().out
        assert "clean" in text and "avg_unseen" in text
        eval_lines = (tmp_path / "eval.csv").read_text().splitlines()
        assert eval_lines[0] == "condition,name,seen,frames,error_pct"
        assert len(eval_lines) == 1 + 3  # clean + both conditions

    def test_generate_summary_counts(self, cfg_file, tmp_path, capsys):
        run_cli("generate", "--config", str(cfg_file), "--out", str(tmp_path))
        out = capsys.readouterr().out
        assert "16 train / 6 test" in out

    def test_cli_train_matches_library_call(self, cfg_file, tmp_path):
        out_a = tmp_path / "a"
        run_cli("generate", "--config", str(cfg_file), "--out", str(out_a))
        run_cli("train", "--config", str(cfg_file), "--out", str(out_a))

        cfg = parse_config_file(cfg_file)
        data = corpus.load_corpus(out_a / "corpus.bin")
        result = training.train(cfg.net_config(),
                                params_seed=cfg.training.seed,
                                corpus_data=data, config=cfg.training,
                                context=cfg.network.context)
        direct = tmp_path / "direct.bin"
        model.save_params(result.params, direct)
        assert direct.read_bytes() == (out_a / "checkpoint.bin").read_bytes()

    def test_repeated_runs_are_byte_identical(self, cfg_file, tmp_path):
        outs = []
        for sub in ("x", "y"):
            out = tmp_path / sub
            run_cli("generate", "--config", str(cfg_file), "--out", str(out))
            run_cli("train", "--config", str(cfg_file), "--out", str(out))
            outs.append(out)
        for name in ("corpus.bin", "checkpoint.bin", "norm.bin",
                     "epochs.csv"):
            assert (outs[0] / name).read_bytes() == \
                (outs[1] / name).read_bytes()

    def test_set_override_changes_the_corpus(self, cfg_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("generate", "--config", str(cfg_file), "--out", str(a))
        run_cli("generate", "--config", str(cfg_file),
                "--set", "corpus.seed=78", "--out", str(b))
        assert (a / "corpus.bin").read_bytes() != \
            (b / "corpus.bin").read_bytes()

    def test_eval_rejects_mismatched_network_override(self, cfg_file,
                                                      tmp_path):
        out = str(tmp_path)
        run_cli("generate", "--config", str(cfg_file), "--out", out)
        run_cli("train", "--config", str(cfg_file), "--out", out)
        # A different hidden width cannot load the stored checkpoint.
        assert run_cli("eval", "--config", str(cfg_file),
                       "--set", "network.hidden=8",
                       "--out", out) == cli.EXIT_RUNTIME


class TestSweepCommand:
    """The benchmark command on a miniature grid."""

    def test_micro_sweep_writes_report_and_logs(self, cfg_file, tmp_path,
                                                capsys):
        out = str(tmp_path)
        code = run_cli("sweep", "--config", str(cfg_file), "--out", out)
        assert code == cli.EXIT_OK
        text = capsys.readouterr().out
        assert "median paired gain" in text
        report = (tmp_path / "report.csv").read_text().splitlines()
        assert report[0].startswith("K,variant,seed,clean")
        # (K=0,1,2) x 2 seeds x 2 variants rows plus medians.
        assert len([l for l in report if ",median," in l]) == 6
        assert (tmp_path / "runs" / "config.txt").exists()
        assert (tmp_path / "runs" / "K1_invariance_s1" / "epochs.csv").exists()

    def test_cell_logs_can_be_disabled(self, cfg_file, tmp_path):
        out = str(tmp_path)
        code = run_cli("sweep", "--config", str(cfg_file),
                       "--set", "sweep.write_cell_logs=false", "--out", out)
        assert code == cli.EXIT_OK
        assert not (tmp_path / "runs" / "K1_invariance_s1").exists()
        assert (tmp_path / "runs" / "config.txt").exists()


class TestConsoleScript:
    """The installed entry point, exercised as a real subprocess."""

    def test_generate_via_subprocess(self, cfg_file, tmp_path):
        exe = shutil.which("invnet")
        assert exe is not None, "console script not installed"
        proc = subprocess.run(
            [exe, "generate", "--config", str(cfg_file),
             "--out", str(tmp_path / "sub")],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "sub" / "corpus.bin").exists()
        # In-process run produces the identical file.
        run_cli("generate", "--config", str(cfg_file),
                "--out", str(tmp_path / "inproc"))
        assert (tmp_path / "sub" / "corpus.bin").read_bytes() == \
            (tmp_path / "inproc" / "corpus.bin").read_bytes()
