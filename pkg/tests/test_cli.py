"""Command-line harness: configuration, commands, CSV outputs, exit codes."""

import os

import numpy as np
import pytest

from fuzzymeta.autodiff import load_checkpoint
from fuzzymeta.cli import (
    DEFAULTS,
    ConfigError,
    RunConfig,
    derive_seed,
    main,
    parse_config_text,
)
from fuzzymeta.encoder import init_encoder_params
from fuzzymeta.fuzzy import default_rule_bank, reference_rule_bank, serialize_rule_bank
from fuzzymeta.synth import read_manifest

SMALL = [
    "--set", "embed_dim=8",
    "--set", "position_dim=4",
    "--set", "visual_dim=12",
    "--set", "text_dim=24",
    "--set", "frames_per_segment=8",
    "--set", "segments_per_video=6",
    "--set", "train_videos=6",
    "--set", "val_videos=2",
    "--set", "test_videos=6",
    "--set", "k_support=2",
    "--set", "k_query=2",
    "--set", "eval_tasks=6",
]


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    """A small generated benchmark plus a 5-step training run."""
    root = tmp_path_factory.mktemp("bench")
    data = root / "data"
    assert run(["gen", "--out", data, "--seed", 5, *SMALL]) == 0
    train = root / "run"
    assert (
        run(["train", "--data", data, "--out", train, "--seed", 5,
             "--outer-steps", 5, *SMALL]) == 0
    )
    return {"root": root, "data": data, "run": train}


class TestRunConfig:
    def test_defaults_complete(self):
        cfg = RunConfig()
        for key in DEFAULTS:
            assert cfg[key] == DEFAULTS[key]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown configuration key"):
            RunConfig({"lamda1": 0.4})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            RunConfig({"alpha": "fast"})

    def test_derived_validation_surfaces_as_config_error(self):
        with pytest.raises(ConfigError):
            RunConfig({"lambda1": 1.4})
        with pytest.raises(ConfigError):
            RunConfig({"precision": 16})
        with pytest.raises(ConfigError):
            RunConfig({"corrupt_kind": "sleet"})

    def test_parse_config_text(self):
        text = "# comment\nalpha = 0.1\nembed_dim = 16\n\nmode = first_order\n"
        overrides = parse_config_text(text)
        cfg = RunConfig(overrides)
        assert cfg["alpha"] == 0.1
        assert cfg["embed_dim"] == 16
        assert cfg["mode"] == "first_order"

    def test_malformed_config_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("alpha = 0.1\nnot a pair\n")

    def test_echo_round_trips(self):
        cfg = RunConfig({"alpha": 0.07, "mode": "first_order"})
        again = RunConfig(parse_config_text(cfg.echo()))
        assert dict(again.items()) == dict(cfg.items())

    def test_derive_seed_deterministic_and_distinct(self):
        assert derive_seed(1, "train", 0) == derive_seed(1, "train", 0)
        assert derive_seed(1, "train", 0) != derive_seed(1, "test", 0)
        assert derive_seed(1, "train", 0) != derive_seed(2, "train", 0)


class TestGen(object):
    def test_all_classes_in_every_split(self, bench):
        for split in ("train", "val", "test"):
            entries = read_manifest(bench["data"] / split / "manifest.tsv")
            seen = {label for _, _, labels in entries for label in labels}
            if split == "val":  # 2 videos x 6 segments < 18 classes
                assert len(seen) == 12
            else:
                assert len(seen) == 18

    def test_rerun_is_byte_identical(self, bench, tmp_path):
        other = tmp_path / "data2"
        assert run(["gen", "--out", other, "--seed", 5, *SMALL]) == 0
        for split in ("train", "val", "test"):
            for name in sorted(os.listdir(bench["data"] / split)):
                a = (bench["data"] / split / name).read_bytes()
                b = (other / split / name).read_bytes()
                assert a == b, name

    def test_split_seeds_disjoint(self, bench):
        seeds = {}
        for split in ("train", "val", "test"):
            for _, seed, _ in read_manifest(bench["data"] / split / "manifest.tsv"):
                assert seed not in seeds, f"seed shared between {seeds.get(seed)} and {split}"
                seeds[seed] = split

    def test_config_echoed(self, bench):
        echoed = (bench["data"] / "config.txt").read_text()
        cfg = RunConfig(parse_config_text(echoed))
        assert cfg["seed"] == 5
        assert cfg["embed_dim"] == 8


class TestTrain:
    def test_zero_steps_checkpoint_equals_initialization(self, bench, tmp_path):
        out = tmp_path / "zero"
        assert (
            run(["train", "--data", bench["data"], "--out", out, "--seed", 5,
                 "--outer-steps", 0, *SMALL]) == 0
        )
        params = load_checkpoint(out / "checkpoint.bin")
        cfg = RunConfig(parse_config_text((out / "config.txt").read_text()))
        fresh = init_encoder_params(cfg.encoder_config(), derive_seed(5, "init"))
        for name in fresh:
            assert np.array_equal(params[name].data, fresh[name].data)
        assert (out / "train_log.tsv").read_text() == ""

    def test_log_line_count_equals_steps(self, bench):
        lines = (bench["run"] / "train_log.tsv").read_text().splitlines()
        assert len(lines) == 5
        for i, line in enumerate(lines, start=1):
            assert line.split("\t")[0] == str(i)

    def test_checkpoint_every_writes_intermediates(self, bench, tmp_path):
        out = tmp_path / "ck"
        assert (
            run(["train", "--data", bench["data"], "--out", out, "--seed", 5,
                 "--outer-steps", 4, "--checkpoint-every", 2, *SMALL]) == 0
        )
        assert (out / "checkpoint_step2.bin").exists()
        assert (out / "checkpoint_step4.bin").exists()
        assert (out / "checkpoint.bin").exists()

    def test_no_meta_trains_single_level(self, bench, tmp_path):
        out = tmp_path / "nometa"
        assert (
            run(["train", "--data", bench["data"], "--out", out, "--seed", 5,
                 "--outer-steps", 3, "--no-meta", *SMALL]) == 0
        )
        lines = (out / "train_log.tsv").read_text().splitlines()
        assert len(lines) == 3
        # pooled training has no support loss
        assert lines[0].split("\t")[1] == "nan"

    def test_ablation_flags_accepted(self, bench, tmp_path):
        for flag in ("--no-fuzzy", "--no-spatial", "--no-temporal"):
            out = tmp_path / flag.strip("-")
            assert (
                run(["train", "--data", bench["data"], "--out", out, "--seed", 5,
                     "--outer-steps", 1, flag, *SMALL]) == 0
            )

    def test_missing_data_is_data_error(self, tmp_path):
        code = run(["train", "--data", tmp_path / "nope", "--out", tmp_path / "o",
                    "--seed", 5, "--outer-steps", 1, *SMALL])
        assert code == 3


@pytest.fixture(scope="module")
def evaluated(bench):
    out = bench["root"] / "eval"
    assert (
        run(["eval", "--data", bench["data"], "--checkpoint",
             bench["run"] / "checkpoint.bin", "--out", out, "--seed", 5, *SMALL]) == 0
    )
    return out


@pytest.fixture(scope="module")
def swept(bench):
    out = bench["root"] / "robustness"
    assert (
        run(["robustness", "--data", bench["data"], "--checkpoint",
             bench["run"] / "checkpoint.bin", "--out", out, "--seed", 5, *SMALL]) == 0
    )
    return out


class TestEval:
    def test_metrics_file_schema(self, evaluated):
        lines = (evaluated / "metrics.csv").read_text().splitlines()
        assert lines[0] == "metric,value"
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == ["accuracy_18", "accuracy_6", "macro_recall_18", "macro_recall_6"]

    def test_confusion_row_sums_match_query_counts(self, evaluated):
        rows = [
            [int(v) for v in line.split(",")]
            for line in (evaluated / "confusion_18.csv").read_text().splitlines()
        ]
        confusion = np.array(rows)
        # 6 tasks x 2 query groups x 2 views
        assert confusion.sum() == 6 * 2 * 2

    def test_metrics_match_recomputation_from_prediction_dump(self, evaluated):
        lines = (evaluated / "predictions.csv").read_text().splitlines()[1:]
        preds = np.array([[int(v) for v in line.split(",")] for line in lines])
        accuracy = float(np.mean(preds[:, 1] == preds[:, 2]))
        metrics = dict(
            line.split(",")
            for line in (evaluated / "metrics.csv").read_text().splitlines()[1:]
        )
        assert float(metrics["accuracy_18"]) == accuracy
        confusion = np.zeros((18, 18), dtype=int)
        for _, true, pred in preds:
            confusion[true, pred] += 1
        stored = np.array(
            [[int(v) for v in line.split(",")]
             for line in (evaluated / "confusion_18.csv").read_text().splitlines()]
        )
        assert np.array_equal(confusion, stored)

    def test_byte_identical_rerun(self, bench, evaluated, tmp_path):
        out = tmp_path / "eval2"
        assert (
            run(["eval", "--data", bench["data"], "--checkpoint",
                 bench["run"] / "checkpoint.bin", "--out", out, "--seed", 5, *SMALL]) == 0
        )
        for name in ("metrics.csv", "confusion_18.csv", "confusion_6.csv", "predictions.csv"):
            assert (out / name).read_bytes() == (evaluated / name).read_bytes()


class TestRobustnessCommand:
    def test_twelve_rows_with_schema(self, swept):
        lines = (swept / "robustness.csv").read_text().splitlines()
        assert lines[0] == "noise,level,acc,recall"
        assert len(lines) == 13
        kinds = [line.split(",")[0] for line in lines[1:]]
        assert kinds == ["fog"] * 4 + ["mask"] * 4 + ["distortion"] * 4

    def test_zero_level_rows_match_eval_exactly(self, bench, swept):
        out = bench["root"] / "eval_for_rob"
        assert (
            run(["eval", "--data", bench["data"], "--checkpoint",
                 bench["run"] / "checkpoint.bin", "--out", out, "--seed", 5, *SMALL]) == 0
        )
        metrics = dict(
            line.split(",")
            for line in (out / "metrics.csv").read_text().splitlines()[1:]
        )
        for line in (swept / "robustness.csv").read_text().splitlines()[1:]:
            kind, level, acc, recall = line.split(",")
            if float(level) == 0.0:
                assert abs(float(acc) - float(metrics["accuracy_18"])) <= 1e-12
                assert abs(float(recall) - float(metrics["macro_recall_18"])) <= 1e-12


class TestGridCommand:
    def test_81_rows_and_determinism(self, bench, tmp_path, capsys):
        small_grid = [*SMALL[:-1], "eval_tasks=2"]  # small sweep, stays fast
        out_a = tmp_path / "grid_a"
        assert (
            run(["grid", "--data", bench["data"], "--checkpoint",
                 bench["run"] / "checkpoint.bin", "--out", out_a, "--seed", 5,
                 *small_grid]) == 0
        )
        printed = capsys.readouterr().out
        assert "best lambda1=" in printed
        lines = (out_a / "grid.csv").read_text().splitlines()
        assert lines[0] == "lambda1,lambda2,acc,recall"
        assert len(lines) == 82
        pairs = {tuple(line.split(",")[:2]) for line in lines[1:]}
        assert len(pairs) == 81
        out_b = tmp_path / "grid_b"
        assert (
            run(["grid", "--data", bench["data"], "--checkpoint",
                 bench["run"] / "checkpoint.bin", "--out", out_b, "--seed", 5,
                 *small_grid]) == 0
        )
        assert (out_a / "grid.csv").read_bytes() == (out_b / "grid.csv").read_bytes()


class TestAnnotateCommand:
    def test_prototypes_annotate_to_their_own_labels(self, tmp_path):
        bank = default_rule_bank()
        codings = tmp_path / "codings.txt"
        codings.write_text(
            "\n".join(
                " ".join(str(int(v)) for v in rule.prototype.values)
                for rule in bank.rules
            )
            + "\n"
        )
        out = tmp_path / "ann"
        assert run(["annotate", codings, "--out", out, "--seed", 0]) == 0
        lines = (out / "annotations.csv").read_text().splitlines()
        assert lines[0] == "emotion,intensity,confidence"
        for rule, line in zip(bank.rules, lines[1:]):
            emotion, intensity, confidence = line.split(",")
            assert (emotion, intensity) == (rule.emotion, rule.intensity)
            assert float(confidence) == 1.0

    def test_empty_file_gives_header_only(self, tmp_path):
        codings = tmp_path / "empty.txt"
        codings.write_text("")
        out = tmp_path / "ann"
        assert run(["annotate", codings, "--out", out]) == 0
        assert (out / "annotations.csv").read_text() == "emotion,intensity,confidence\n"

    def test_custom_rule_bank_file(self, tmp_path):
        rules = tmp_path / "rules.txt"
        rules.write_text(serialize_rule_bank(reference_rule_bank()))
        codings = tmp_path / "codings.txt"
        codings.write_text("0 0 1 0 0 1 0 -1 -1 -1 -1 -1\n")
        out = tmp_path / "ann"
        assert run(["annotate", codings, "--rules", rules, "--out", out]) == 0
        assert "Angry,High,1.0" in (out / "annotations.csv").read_text()

    def test_malformed_coding_line_is_data_error(self, tmp_path):
        codings = tmp_path / "bad.txt"
        codings.write_text("1 2 3\n")
        assert run(["annotate", codings, "--out", tmp_path / "ann"]) == 3

    def test_missing_input_is_data_error(self, tmp_path):
        assert run(["annotate", tmp_path / "nope.txt", "--out", tmp_path / "ann"]) == 3


class TestExitCodes:
    def test_unknown_config_key_exits_2(self, tmp_path):
        assert run(["gen", "--out", tmp_path / "x", "--set", "nope=1"]) == 2

    def test_bad_config_file_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("alpha == 0.1\n")
        assert run(["gen", "--out", tmp_path / "x", "--config", cfg]) == 2

    def test_no_partial_outputs_on_failure(self, bench, tmp_path):
        out = tmp_path / "fail"
        code = run(["eval", "--data", bench["data"], "--checkpoint",
                    tmp_path / "missing.bin", "--out", out, "--seed", 5, *SMALL])
        assert code == 3
        assert not out.exists() or not any(os.scandir(out))

    def test_config_file_plus_cli_override(self, bench, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("eval_tasks = 3\nembed_dim = 8\nposition_dim = 4\n"
                       "visual_dim = 12\ntext_dim = 24\nframes_per_segment = 8\n"
                       "k_support = 2\nk_query = 2\n")
        out = tmp_path / "eval"
        assert (
            run(["eval", "--data", bench["data"], "--checkpoint",
                 bench["run"] / "checkpoint.bin", "--out", out, "--config", cfg,
                 "--seed", 5]) == 0
        )
        echoed = RunConfig(parse_config_text((out / "config.txt").read_text()))
        assert echoed["eval_tasks"] == 3
        assert echoed["seed"] == 5
