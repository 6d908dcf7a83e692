"""Command-line harness: benchmark generation, training, evaluation,
robustness sweeps, membership-range grids, and coding annotation.

Every command honors --seed / --precision / --out / --config, echoes its
effective configuration into the output directory, and writes outputs
atomically (write-then-rename), so a run either leaves complete files or
none.  Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import fuzzy as fz
from .autodiff import checkpoint_bytes, load_checkpoint, set_default_dtype
from .encoder import EncoderConfig, Pipeline, init_encoder_params
from .meta import (
    MetaConfig,
    MetaState,
    evaluate,
    outer_step,
    pooled_step,
    train_loop,
)
from .synth import (
    NOISE_KINDS,
    STANDARD_NOISE_LEVELS,
    GeneratorConfig,
    NoiseSpec,
    apply_noise,
    format_manifest,
    generate_video,
    label_cycle,
    read_manifest,
)
from .tasks import (
    PositionEncoder,
    build_view_groups,
    read_video,
    sample_task,
    video_to_bytes,
)


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


DEFAULTS: dict[str, object] = {
    "lambda1": 0.4,
    "lambda2": 0.4,
    "alpha": 0.2,
    "beta": 0.005,
    "tasks_per_batch": 4,
    "inner_steps": 1,
    "mode": "second_order",
    "clip_norm": 2.0,
    "k_support": 5,
    "k_query": 5,
    "embed_dim": 64,
    "position_dim": 8,
    "kernel_width": 3,
    "temporal_layers": 2,
    "coding_gain": 8.0,
    "precision": 64,
    "seed": 0,
    "outer_steps": 800,
    "checkpoint_every": 0,
    "eval_tasks": 36,
    "frames_per_segment": 24,
    "noise_sigma": 0.1,
    "ramp_min": 0.3,
    "ramp_max": 1.0,
    "segments_per_video": 6,
    "train_videos": 30,
    "val_videos": 6,
    "test_videos": 12,
    "visual_dim": 35,
    "text_dim": 300,
    "lift_seed": 7,
    "position_seed": 101,
    "corrupt_kind": "none",
    "corrupt_level": 0.0,
}


class RunConfig:
    """Flat, fully-validated key-value configuration."""

    def __init__(self, overrides: dict[str, object] | None = None):
        values = dict(DEFAULTS)
        for key, raw in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            default = DEFAULTS[key]
            try:
                if isinstance(default, int) and not isinstance(default, bool):
                    values[key] = int(raw)
                elif isinstance(default, float):
                    values[key] = float(raw)
                else:
                    values[key] = str(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
        if values["precision"] not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {values['precision']}")
        if values["mode"] not in ("second_order", "first_order"):
            raise ConfigError("mode must be second_order or first_order")
        if values["seed"] < 0:
            raise ConfigError(f"seed must be non-negative, got {values['seed']}")
        if values["corrupt_kind"] not in ("none",) + NOISE_KINDS:
            raise ConfigError(
                f"corrupt_kind must be none, fog, mask or distortion, "
                f"got {values['corrupt_kind']!r}"
            )
        if not 0.0 <= values["corrupt_level"] <= 1.0:
            raise ConfigError(
                f"corrupt_level must lie in [0, 1], got {values['corrupt_level']}"
            )
        self._values = values
        try:
            self.fuzzy_config()
            self.meta_config()
            self.encoder_config()
            self.generator_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def __getitem__(self, key: str):
        return self._values[key]

    def items(self):
        return self._values.items()

    def echo(self) -> str:
        return "\n".join(f"{k} = {v!r}" for k, v in self._values.items()) + "\n"

    def fuzzy_config(self) -> fz.FuzzyConfig:
        return fz.FuzzyConfig(self["lambda1"], self["lambda2"])

    def meta_config(self) -> MetaConfig:
        return MetaConfig(
            alpha=self["alpha"],
            beta=self["beta"],
            tasks_per_batch=self["tasks_per_batch"],
            inner_steps=self["inner_steps"],
            mode=self["mode"],
            clip_norm=self["clip_norm"],
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            embed_dim=self["embed_dim"],
            position_dim=self["position_dim"],
            visual_dim=self["visual_dim"],
            text_dim=self["text_dim"],
            kernel_width=self["kernel_width"],
            temporal_layers=self["temporal_layers"],
            coding_gain=self["coding_gain"],
        )

    def generator_config(self, seed: int | None = None) -> GeneratorConfig:
        return GeneratorConfig(
            frames_per_segment=self["frames_per_segment"],
            sigma=self["noise_sigma"],
            ramp_min=self["ramp_min"],
            ramp_max=self["ramp_max"],
            segments_per_video=self["segments_per_video"],
            seed=self["seed"] if seed is None else seed,
            lift_seed=self["lift_seed"],
            visual_dim=self["visual_dim"],
            text_dim=self["text_dim"],
        )

    def pipeline(
        self,
        use_temporal: bool = True,
        use_spatial: bool = True,
        use_fuzzy: bool = True,
    ) -> Pipeline:
        return Pipeline(
            cfg=self.encoder_config(),
            bank=fz.default_rule_bank(),
            fuzzy_cfg=self.fuzzy_config(),
            position_encoder=PositionEncoder(self["position_seed"], self["position_dim"]),
            use_temporal=use_temporal,
            use_spatial=use_spatial,
            use_fuzzy=use_fuzzy,
        )


def parse_config_text(text: str) -> dict[str, str]:
    overrides = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        overrides[key.strip()] = value.strip().strip("'\"")
    return overrides


def derive_seed(*parts) -> int:
    """Deterministic child seed from a tuple of ints/strings."""
    entropy = []
    for part in parts:
        if isinstance(part, str):
            entropy.extend(part.encode("utf-8"))
        else:
            entropy.append(int(part))
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def atomic_write(path: str, content: str | bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(content, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(rows, header: str) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _write_outputs(out_dir: str, files: dict[str, str | bytes]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        atomic_write(os.path.join(out_dir, name), content)


# --- data plumbing ---

SPLITS = ("train", "val", "test")
_SPLIT_VIDEO_KEYS = {"train": "train_videos", "val": "val_videos", "test": "test_videos"}


def cmd_gen(config: RunConfig, out_dir: str) -> int:
    """Generate train/val/test video sets with disjoint seeds."""
    bank = fz.default_rule_bank()
    seed = config["seed"]
    for split in SPLITS:
        n_videos = config[_SPLIT_VIDEO_KEYS[split]]
        sequences = label_cycle(
            n_videos, config["segments_per_video"], derive_seed(seed, split, "labels")
        )
        entries = []
        for i in range(n_videos):
            video_seed = derive_seed(seed, split, i)
            video = generate_video(
                sequences[i], config.generator_config(), bank, seed=video_seed
            )
            if config["corrupt_kind"] != "none":
                video = apply_noise(
                    video,
                    NoiseSpec(
                        config["corrupt_kind"],
                        config["corrupt_level"],
                        derive_seed(seed, split, i, "corrupt"),
                        free=True,
                    ),
                )
            name = f"video_{i:04d}.bin"
            atomic_write(os.path.join(out_dir, split, name), video_to_bytes(video))
            entries.append((name, video_seed, sequences[i]))
        atomic_write(
            os.path.join(out_dir, split, "manifest.tsv"), format_manifest(entries)
        )
    _write_outputs(out_dir, {"config.txt": config.echo()})
    return 0


def load_split(data_dir: str, split: str):
    manifest = os.path.join(data_dir, split, "manifest.tsv")
    if not os.path.exists(manifest):
        raise DataError(f"missing manifest {manifest}; run gen first")
    videos = []
    for name, _seed, _labels in read_manifest(manifest):
        videos.append(read_video(os.path.join(data_dir, split, name)))
    if not videos:
        raise DataError(f"{manifest} lists no videos")
    return videos


def build_pool(videos) -> list:
    return [group for video in videos for group in build_view_groups(video)]


def _eligible_emotions(pool, needed: int) -> list[str]:
    counts = {emotion: 0 for emotion in fz.EMOTIONS}
    for group in pool:
        counts[group.emotion] += 1
    eligible = [emotion for emotion in fz.EMOTIONS if counts[emotion] >= needed]
    if not eligible:
        raise DataError(
            f"no emotion has the {needed} view groups a task needs "
            f"(counts: {counts})"
        )
    return eligible


def make_eval_tasks(pool, config: RunConfig):
    needed = config["k_support"] + config["k_query"]
    eligible = _eligible_emotions(pool, needed)
    tasks = []
    for i in range(config["eval_tasks"]):
        emotion = eligible[i % len(eligible)]
        tasks.append(
            sample_task(
                pool,
                emotion,
                config["k_support"],
                config["k_query"],
                derive_seed(config["seed"], "eval", i),
            )
        )
    return tasks


def _training_task_source(pool, config: RunConfig):
    needed = config["k_support"] + config["k_query"]
    eligible = _eligible_emotions(pool, needed)
    rng = np.random.default_rng(derive_seed(config["seed"], "train-tasks"))

    def source(step: int):
        tasks = []
        for _ in range(config["tasks_per_batch"]):
            emotion = eligible[int(rng.integers(0, len(eligible)))]
            tasks.append(
                sample_task(
                    pool,
                    emotion,
                    config["k_support"],
                    config["k_query"],
                    int(rng.integers(0, 2**63)),
                )
            )
        return tasks

    return source


def cmd_train(
    config: RunConfig,
    data_dir: str,
    out_dir: str,
    no_fuzzy: bool = False,
    no_spatial: bool = False,
    no_temporal: bool = False,
    no_meta: bool = False,
) -> int:
    """Meta-train on the train split; writes checkpoint + training log."""
    pool = build_pool(load_split(data_dir, "train"))
    pipeline = config.pipeline(
        use_temporal=not no_temporal,
        use_spatial=not no_spatial,
        use_fuzzy=not no_fuzzy,
    )
    params = init_encoder_params(
        config.encoder_config(), derive_seed(config["seed"], "init")
    )
    state = MetaState(params, config.meta_config())
    log_lines: list[str] = []
    every = config["checkpoint_every"]

    def checkpoint_fn(step: int, current: MetaState) -> None:
        if every > 0 and step % every == 0:
            atomic_write(
                os.path.join(out_dir, f"checkpoint_step{step}.bin"),
                checkpoint_bytes(current.params),
            )

    train_loop(
        state,
        _training_task_source(pool, config),
        pipeline,
        steps=config["outer_steps"],
        log_lines=log_lines,
        step_fn=pooled_step if no_meta else outer_step,
        checkpoint_fn=checkpoint_fn,
    )
    files = {
        "checkpoint.bin": checkpoint_bytes(state.params),
        "train_log.tsv": "\n".join(log_lines) + ("\n" if log_lines else ""),
        "config.txt": config.echo(),
    }
    _write_outputs(out_dir, files)
    return 0


def _metrics_rows(report) -> list[tuple]:
    return [
        ("accuracy_18", report.accuracy_18),
        ("accuracy_6", report.accuracy_6),
        ("macro_recall_18", report.recall_18),
        ("macro_recall_6", report.recall_6),
    ]


def _confusion_csv(matrix: np.ndarray) -> str:
    lines = [",".join(str(int(v)) for v in row) for row in matrix]
    return "\n".join(lines) + "\n"


def cmd_eval(config: RunConfig, data_dir: str, checkpoint: str, out_dir: str) -> int:
    """Evaluate a checkpoint on the test split."""
    params = load_checkpoint(checkpoint)
    pool = build_pool(load_split(data_dir, "test"))
    pipeline = config.pipeline()
    report = evaluate(params, make_eval_tasks(pool, config), pipeline, config.meta_config())
    files = {
        "metrics.csv": _csv(_metrics_rows(report), "metric,value"),
        "confusion_18.csv": _confusion_csv(report.confusion_18),
        "confusion_6.csv": _confusion_csv(report.confusion_6),
        "predictions.csv": _csv(
            [tuple(int(v) for v in row) for row in report.predictions],
            "task,true,pred",
        ),
        "config.txt": config.echo(),
    }
    _write_outputs(out_dir, files)
    return 0


def cmd_robustness(config: RunConfig, data_dir: str, checkpoint: str, out_dir: str) -> int:
    """Accuracy/recall under fog, mask and distortion at the standard levels."""
    params = load_checkpoint(checkpoint)
    videos = load_split(data_dir, "test")
    pipeline = config.pipeline()
    meta_cfg = config.meta_config()
    rows = []
    for kind in NOISE_KINDS:
        for level_index, level in enumerate(STANDARD_NOISE_LEVELS):
            noisy = [
                apply_noise(
                    video,
                    NoiseSpec(
                        kind,
                        level,
                        derive_seed(config["seed"], kind, level_index, i),
                    ),
                )
                for i, video in enumerate(videos)
            ]
            report = evaluate(
                params, make_eval_tasks(build_pool(noisy), config), pipeline, meta_cfg
            )
            rows.append((kind, level, report.accuracy_18, report.recall_18))
    files = {
        "robustness.csv": _csv(rows, "noise,level,acc,recall"),
        "config.txt": config.echo(),
    }
    _write_outputs(out_dir, files)
    return 0


GRID_VALUES = tuple(round(0.1 * i, 1) for i in range(1, 10))


def cmd_grid(config: RunConfig, data_dir: str, checkpoint: str, out_dir: str) -> int:
    """Sweep the two membership ranges over {0.1..0.9}^2 with a fixed
    checkpoint, re-running only the fuzzy inference configuration."""
    params = load_checkpoint(checkpoint)
    pool = build_pool(load_split(data_dir, "test"))
    tasks = make_eval_tasks(pool, config)
    meta_cfg = config.meta_config()
    base = config.pipeline()
    rows = []
    for lam1 in GRID_VALUES:
        for lam2 in GRID_VALUES:
            pipeline = Pipeline(
                cfg=base.cfg,
                bank=base.bank,
                fuzzy_cfg=fz.FuzzyConfig(lam1, lam2),
                position_encoder=base.position_encoder,
            )
            report = evaluate(params, tasks, pipeline, meta_cfg)
            rows.append((lam1, lam2, report.accuracy_18, report.recall_18))
    best = max(rows, key=lambda r: r[2])
    files = {
        "grid.csv": _csv(rows, "lambda1,lambda2,acc,recall"),
        "config.txt": config.echo(),
    }
    _write_outputs(out_dir, files)
    print(f"best lambda1={best[0]} lambda2={best[1]} acc={best[2]!r} recall={best[3]!r}")
    return 0


def cmd_annotate(
    config: RunConfig,
    coding_path: str,
    out_dir: str,
    rules_path: str | None = None,
    curves_path: str | None = None,
) -> int:
    """Label a file of component codings (12 values per line)."""
    if rules_path is None:
        bank = fz.default_rule_bank()
    else:
        with open(rules_path, "r", encoding="utf-8") as fh:
            bank = fz.parse_rule_bank(fh.read())
    if curves_path is None:
        curves = fz.default_intensity_curves()
    else:
        with open(curves_path, "r", encoding="utf-8") as fh:
            curves = fz.parse_intensity_curves(fh.read())
    fuzzy_cfg = config.fuzzy_config()
    try:
        with open(coding_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read coding file: {exc}") from None
    rows = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != fz.NUM_COMPONENTS:
            raise DataError(f"coding line {n}: expected 12 values, got {len(parts)}")
        try:
            values = np.array([float(tok) for tok in parts])
            coding = fz.ComponentCoding(values, mode="soft")
        except ValueError as exc:
            raise DataError(f"coding line {n}: {exc}") from None
        result = fz.annotate(coding, bank, fuzzy_cfg, curves)
        rows.append((result.emotion, result.intensity, result.confidence))
    files = {
        "annotations.csv": _csv(rows, "emotion,intensity,confidence"),
        "config.txt": config.echo(),
    }
    _write_outputs(out_dir, files)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuzzymeta",
        description="Fuzzy-rule-guided multi-modal meta-learning harness",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--precision", type=int, choices=(32, 64), help="float width")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="generate the synthetic benchmark")

    train = sub.add_parser("train", parents=[common], help="meta-train a model")
    train.add_argument("--data", required=True, help="benchmark directory from gen")
    train.add_argument("--outer-steps", type=int, dest="outer_steps")
    train.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    train.add_argument("--no-fuzzy", action="store_true")
    train.add_argument("--no-spatial", action="store_true")
    train.add_argument("--no-temporal", action="store_true")
    train.add_argument("--no-meta", action="store_true")

    for name, help_text in (
        ("eval", "evaluate a checkpoint"),
        ("robustness", "noise sweep evaluation"),
        ("grid", "membership-range grid evaluation"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        cmd.add_argument("--data", required=True)
        cmd.add_argument("--checkpoint", required=True)

    annotate = sub.add_parser("annotate", parents=[common], help="label coding files")
    annotate.add_argument("codings", help="file of 12-value coding lines")
    annotate.add_argument("--rules", help="rule bank file (default: shipped bank)")
    annotate.add_argument("--curves", help="intensity curve file (default: shipped)")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides: dict[str, object] = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                overrides.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.precision is not None:
        overrides["precision"] = args.precision
    if getattr(args, "outer_steps", None) is not None:
        overrides["outer_steps"] = args.outer_steps
    if getattr(args, "checkpoint_every", None) is not None:
        overrides["checkpoint_every"] = args.checkpoint_every
    return RunConfig(overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        set_default_dtype(np.float64 if config["precision"] == 64 else np.float32)
        if args.command == "gen":
            return cmd_gen(config, args.out)
        if args.command == "train":
            return cmd_train(
                config,
                args.data,
                args.out,
                no_fuzzy=args.no_fuzzy,
                no_spatial=args.no_spatial,
                no_temporal=args.no_temporal,
                no_meta=args.no_meta,
            )
        if args.command == "eval":
            return cmd_eval(config, args.data, args.checkpoint, args.out)
        if args.command == "robustness":
            return cmd_robustness(config, args.data, args.checkpoint, args.out)
        if args.command == "grid":
            return cmd_grid(config, args.data, args.checkpoint, args.out)
        if args.command == "annotate":
            return cmd_annotate(config, args.codings, args.out, args.rules, args.curves)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, fz.RuleParseError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
