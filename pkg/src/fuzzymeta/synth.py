"""Synthetic multi-modal emotion benchmark.

Videos are generated from the rule bank itself: each segment's
12-component coding ramps from neutral to its class prototype at a
seeded random speed (temporal heterogeneity), gets per-frame Gaussian
noise, and is lifted into the visual feature space by a fixed random
linear map.  Text features are a fixed random lift of the class one-hot
plus noise.  Feature-level analogues of fog, mask and distortion
corruptions support robustness studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fuzzy import EMOTIONS, INTENSITIES, NUM_CLASSES, NUM_COMPONENTS, RuleBank, class_index
from .tasks import LongVideo, SegmentLabel

NOISE_KINDS = ("fog", "mask", "distortion")
STANDARD_NOISE_LEVELS = (0.0, 0.1, 0.3, 0.5)


@dataclass(frozen=True)
class GeneratorConfig:
    frames_per_segment: int = 24
    sigma: float = 0.1
    ramp_min: float = 0.3
    ramp_max: float = 1.0
    segments_per_video: int = 6
    seed: int = 0
    lift_seed: int = 7
    visual_dim: int = 35
    text_dim: int = 300

    def __post_init__(self):
        if not 0.0 < self.ramp_min <= self.ramp_max <= 1.0:
            raise ValueError(
                f"need 0 < ramp_min <= ramp_max <= 1, got "
                f"[{self.ramp_min}, {self.ramp_max}]"
            )
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.frames_per_segment < 1 or self.segments_per_video < 1:
            raise ValueError("frame and segment counts must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """A corruption kind and probability level.

    Levels default to the standard sweep {0, 0.1, 0.3, 0.5}; free mode
    admits any p in [0, 1].
    """

    kind: str
    level: float
    seed: int = 0
    free: bool = False

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.free:
            if not 0.0 <= self.level <= 1.0:
                raise ValueError(f"noise level must lie in [0, 1], got {self.level}")
        elif self.level not in STANDARD_NOISE_LEVELS:
            raise ValueError(
                f"noise level {self.level} outside the standard sweep "
                f"{STANDARD_NOISE_LEVELS}; pass free=True for arbitrary levels"
            )


def feature_lifts(cfg: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fixed random lifts shared by every video of a benchmark:
    coding (12) -> visual features and class one-hot (18) -> text features."""
    rng = np.random.default_rng(cfg.lift_seed)
    visual = rng.normal(0.0, NUM_COMPONENTS**-0.5, size=(NUM_COMPONENTS, cfg.visual_dim))
    text = rng.normal(0.0, cfg.text_dim**-0.5, size=(NUM_CLASSES, cfg.text_dim))
    return visual, text


def class_prototype(bank: RuleBank, emotion: str, intensity: str) -> np.ndarray:
    """Prototype of a class's first rule; errors on uncovered classes."""
    c = class_index(emotion, intensity)
    rule_ids = bank.by_class.get(c)
    if not rule_ids:
        raise ValueError(f"rule bank has no rule for class {emotion}-{intensity}")
    return bank.rules[rule_ids[0]].prototype.values


def generate_video(
    labels, cfg: GeneratorConfig, bank: RuleBank, seed: int | None = None
) -> LongVideo:
    """One long video from an (emotion, intensity) label sequence.

    Per segment the coding ramps linearly from zero to the prototype over
    a seeded fraction r in [ramp_min, ramp_max] of the segment, then
    holds; Gaussian noise of scale sigma lands on the coding (visual) and
    on the lifted one-hot (text).
    """
    labels = list(labels)
    if not labels:
        raise ValueError("label sequence is empty")
    visual_lift, text_lift = feature_lifts(cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    t_seg = cfg.frames_per_segment
    visual_rows = []
    text_rows = []
    segments = []
    for i, (emotion, intensity) in enumerate(labels):
        prototype = class_prototype(bank, emotion, intensity)
        r = rng.uniform(cfg.ramp_min, cfg.ramp_max)
        ramp_frames = max(1, round(r * t_seg))
        profile = np.minimum(1.0, np.arange(1, t_seg + 1) / ramp_frames)
        coding = profile[:, None] * prototype[None, :]
        coding = coding + rng.normal(0.0, cfg.sigma, size=coding.shape)
        visual_rows.append(coding @ visual_lift)
        one_hot = np.zeros(NUM_CLASSES)
        one_hot[class_index(emotion, intensity)] = 1.0
        text_rows.append(
            one_hot @ text_lift + rng.normal(0.0, cfg.sigma, size=cfg.text_dim)
        )
        segments.append(
            SegmentLabel(emotion, intensity, i * t_seg, (i + 1) * t_seg)
        )
    return LongVideo(
        np.concatenate(visual_rows, axis=0), np.stack(text_rows), tuple(segments)
    )


def label_cycle(n_videos: int, segments_per_video: int, seed: int) -> list[list[tuple[str, str]]]:
    """Label sequences chunked from shuffled permutations of all 18
    classes, so every class appears once per 18 segments."""
    classes = [(em, it) for em in EMOTIONS for it in INTENSITIES]
    rng = np.random.default_rng(seed)
    needed = n_videos * segments_per_video
    sequence = []
    while len(sequence) < needed:
        order = rng.permutation(len(classes))
        sequence.extend(classes[i] for i in order)
    return [
        sequence[i * segments_per_video : (i + 1) * segments_per_video]
        for i in range(n_videos)
    ]


def inject_mask(video: LongVideo, p: float, seed: int = 0) -> LongVideo:
    """Zero a seeded contiguous window of ceil(p*T) visual frames; each
    affected segment's text row is zeroed with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mask probability must lie in [0, 1], got {p}")
    t = video.n_frames
    width = math.ceil(p * t)
    rng = np.random.default_rng(seed)
    visual = video.visual.copy()
    text = video.text.copy()
    if width > 0:
        start = int(rng.integers(0, t - width + 1))
        visual[start : start + width] = 0.0
        for i, seg in enumerate(video.labels):
            overlaps = seg.start < start + width and seg.end > start
            if overlaps and rng.uniform() < p:
                text[i] = 0.0
    return LongVideo(visual, text, video.labels)


def inject_fog(video: LongVideo, p: float, seed: int = 0) -> LongVideo:
    """Blend visual frames toward the per-video feature mean (contrast
    washout): x <- (1-p) x + p mean(x)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"fog probability must lie in [0, 1], got {p}")
    mean = video.visual.mean(axis=0)
    visual = (1.0 - p) * video.visual + p * mean[None, :]
    return LongVideo(visual, video.text.copy(), video.labels)


def inject_distortion(video: LongVideo, p: float, seed: int = 0) -> LongVideo:
    """Smooth nonlinear warp of visual features: x <- x + p * g * tanh(x)
    with a seeded per-dimension gain g in [-1, 1]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"distortion probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    gain = rng.uniform(-1.0, 1.0, size=video.visual.shape[1])
    visual = video.visual + p * gain[None, :] * np.tanh(video.visual)
    return LongVideo(visual, video.text.copy(), video.labels)


_INJECTORS = {"fog": inject_fog, "mask": inject_mask, "distortion": inject_distortion}


def apply_noise(video: LongVideo, spec: NoiseSpec) -> LongVideo:
    return _INJECTORS[spec.kind](video, spec.level, spec.seed)


def format_manifest(entries) -> str:
    """One line per video: path<TAB>seed<TAB>comma-joined labels."""
    lines = []
    for video_path, seed, labels in entries:
        joined = ",".join(f"{em}-{it}" for em, it in labels)
        lines.append(f"{video_path}\t{seed}\t{joined}")
    return "\n".join(lines) + "\n"


def write_manifest(path, entries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_manifest(entries))


def read_manifest(path) -> list[tuple[str, int, list[tuple[str, str]]]]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            video_path, seed, joined = line.split("\t")
            labels = [tuple(token.split("-")) for token in joined.split(",")]
            entries.append((video_path, int(seed), labels))
    return entries
