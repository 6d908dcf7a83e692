"""Meta-task construction from multi-modal long videos.

A long video carries per-frame visual features, per-segment text
features and an ordered emotion label sequence.  Construction splits the
modalities, slices each into per-emotion views, pairs cross-modal views
that share a position into groups, and samples single-emotion support /
query episodes from pools of groups.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .fuzzy import EMOTIONS, INTENSITIES

VISUAL = "visual"
TEXT = "text"

POSITION_ENCODING_DIM = 8
_POSITION_HIDDEN = 16


@dataclass(frozen=True)
class SegmentLabel:
    emotion: str
    intensity: str
    start: int
    end: int

    def __post_init__(self):
        if self.emotion not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.emotion!r}")
        if self.intensity not in INTENSITIES:
            raise ValueError(f"unknown intensity {self.intensity!r}")
        if self.start < 0 or self.end <= self.start:
            raise ValueError(
                f"segment [{self.start}, {self.end}) is empty or negative"
            )


@dataclass(frozen=True, eq=False)
class LongVideo:
    """Frame-level visual features, segment-level text features, labels.

    Segments are ordered, non-overlapping and cover at most the frame
    range; the text matrix has one row per labeled segment.
    """

    visual: np.ndarray
    text: np.ndarray
    labels: tuple[SegmentLabel, ...]

    def __post_init__(self):
        visual = np.asarray(self.visual, dtype=float)
        text = np.asarray(self.text, dtype=float)
        object.__setattr__(self, "visual", visual)
        object.__setattr__(self, "text", text)
        object.__setattr__(self, "labels", tuple(self.labels))
        if visual.ndim != 2 or text.ndim != 2:
            raise ValueError("visual and text streams must be 2-D matrices")
        if len(self.labels) != text.shape[0]:
            raise ValueError(
                f"{len(self.labels)} segments but {text.shape[0]} text rows"
            )
        prev_end = 0
        for i, seg in enumerate(self.labels):
            if seg.start < prev_end:
                raise ValueError(f"segment {i} overlaps or reorders its predecessor")
            if seg.end > visual.shape[0]:
                raise ValueError(
                    f"segment {i} ends at {seg.end}, beyond {visual.shape[0]} frames"
                )
            prev_end = seg.end

    @property
    def n_frames(self) -> int:
        return self.visual.shape[0]

    @property
    def n_segments(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class ModalStream:
    """One modality's frame-aligned features plus the label sequence."""

    modality: str
    frames: np.ndarray
    labels: tuple[SegmentLabel, ...]


def segment_modalities(video: LongVideo) -> tuple[ModalStream, ModalStream]:
    """Split a video into frame-aligned visual and text streams.

    Text features are per-segment; they are repeated across each
    segment's frame span so both streams share segment boundaries.
    """
    if not video.labels:
        raise ValueError("video has no labeled segments")
    text_frames = np.zeros((video.n_frames, video.text.shape[1]))
    for i, seg in enumerate(video.labels):
        text_frames[seg.start : seg.end] = video.text[i]
    return (
        ModalStream(VISUAL, video.visual, video.labels),
        ModalStream(TEXT, text_frames, video.labels),
    )


@dataclass(frozen=True, eq=False)
class View:
    """One modality's feature sequence for one emotion segment."""

    modality: str
    frames: np.ndarray
    position_index: int
    emotion: str
    intensity: str
    n_positions: int

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[0] == 0:
            raise ValueError("view frames must be a non-empty 2-D matrix")
        if not 0 <= self.position_index < self.n_positions:
            raise ValueError(
                f"position {self.position_index} outside 0..{self.n_positions - 1}"
            )


def segment_by_labels(stream: ModalStream, labels=None) -> list[View]:
    """Slice a stream into one view per label segment (frames [start, end))."""
    labels = tuple(stream.labels if labels is None else labels)
    if not labels:
        raise ValueError("no label segments to slice by")
    n = stream.frames.shape[0]
    views = []
    for i, seg in enumerate(labels):
        if seg.end > n:
            raise ValueError(
                f"segment {i} ({seg.emotion}-{seg.intensity}) ends at {seg.end}, "
                f"stream has {n} frames"
            )
        views.append(
            View(
                modality=stream.modality,
                frames=stream.frames[seg.start : seg.end],
                position_index=i,
                emotion=seg.emotion,
                intensity=seg.intensity,
                n_positions=len(labels),
            )
        )
    return views


@dataclass(frozen=True, eq=False)
class ViewGroup:
    """The cross-modal pair of views sharing one position of one video."""

    visual: View
    text: View

    def __post_init__(self):
        if (self.visual.modality, self.text.modality) != (VISUAL, TEXT):
            raise ValueError("group must pair one visual and one text view")
        same = (
            self.visual.position_index == self.text.position_index
            and self.visual.emotion == self.text.emotion
            and self.visual.intensity == self.text.intensity
        )
        if not same:
            raise ValueError("grouped views disagree on position or labels")

    @property
    def position_index(self) -> int:
        return self.visual.position_index

    @property
    def emotion(self) -> str:
        return self.visual.emotion

    @property
    def intensity(self) -> str:
        return self.visual.intensity

    @property
    def views(self) -> tuple[View, View]:
        return (self.visual, self.text)


def build_view_groups(video: LongVideo) -> list[ViewGroup]:
    """All cross-modal view groups of a video, in position order."""
    vis_stream, txt_stream = segment_modalities(video)
    vis_views = segment_by_labels(vis_stream)
    txt_views = segment_by_labels(txt_stream)
    return [ViewGroup(v, t) for v, t in zip(vis_views, txt_views)]


@dataclass(frozen=True, eq=False)
class MetaTask:
    """A single-emotion episode: disjoint support and query view groups."""

    emotion: str
    support: tuple[ViewGroup, ...]
    query: tuple[ViewGroup, ...]
    seed: int = 0

    def __post_init__(self):
        for group in self.support + self.query:
            if group.emotion != self.emotion:
                raise ValueError(
                    f"group labeled {group.emotion} in a {self.emotion} task"
                )
        support_ids = {id(g) for g in self.support}
        if any(id(g) in support_ids for g in self.query):
            raise ValueError("support and query sets overlap")


def sample_task(
    pool, emotion: str, k_support: int, k_query: int, seed: int
) -> MetaTask:
    """Sample a task uniformly without replacement from a group pool."""
    eligible = [g for g in pool if g.emotion == emotion]
    needed = k_support + k_query
    if len(eligible) < needed:
        raise ValueError(
            f"need {needed} groups labeled {emotion}, pool has {len(eligible)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(eligible))
    support = tuple(eligible[i] for i in order[:k_support])
    query = tuple(eligible[i] for i in order[k_support:needed])
    return MetaTask(emotion, support, query, seed)


class PositionEncoder:
    """Two-layer perceptron mapping (normalized position, modality flag)
    to an 8-vector appended to every frame of a view.

    Weights are drawn once from the seed and never trained, so encoding
    stays a pure preprocessing step.
    """

    def __init__(self, seed: int = 101, out_dim: int = POSITION_ENCODING_DIM):
        rng = np.random.default_rng(seed)
        self.out_dim = out_dim
        self.w1 = rng.normal(0.0, 1.0, size=(2, _POSITION_HIDDEN))
        self.b1 = rng.normal(0.0, 0.5, size=_POSITION_HIDDEN)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(_POSITION_HIDDEN), size=(_POSITION_HIDDEN, out_dim))
        self.b2 = np.zeros(out_dim)

    def encode(self, position_index: int, segment_count: int, modality: str) -> np.ndarray:
        if segment_count < 1:
            raise ValueError("segment_count must be at least 1")
        flag = 0.0 if modality == VISUAL else 1.0
        x = np.array([position_index / segment_count, flag])
        hidden = np.tanh(x @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2

    def encode_view(self, view: View) -> np.ndarray:
        return self.encode(view.position_index, view.n_positions, view.modality)


_VIDEO_MAGIC = b"FGMV"
_VIDEO_VERSION = 1
_EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}
_INTENSITY_INDEX = {name: i for i, name in enumerate(INTENSITIES)}


def video_to_bytes(video: LongVideo) -> bytes:
    """Binary container: header, segment table, then row-major
    little-endian 64-bit floats for each stream."""
    t, dv = video.visual.shape
    s, dt = video.text.shape
    chunks = [
        _VIDEO_MAGIC,
        struct.pack("<5I", _VIDEO_VERSION, t, s, dv, dt),
    ]
    for seg in video.labels:
        chunks.append(
            struct.pack(
                "<4I",
                _EMOTION_INDEX[seg.emotion],
                _INTENSITY_INDEX[seg.intensity],
                seg.start,
                seg.end,
            )
        )
    chunks.append(np.ascontiguousarray(video.visual, dtype="<f8").tobytes())
    chunks.append(np.ascontiguousarray(video.text, dtype="<f8").tobytes())
    return b"".join(chunks)


def write_video(path, video: LongVideo) -> None:
    with open(path, "wb") as fh:
        fh.write(video_to_bytes(video))


def read_video(path) -> LongVideo:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _VIDEO_MAGIC:
        raise ValueError(f"{path}: not a long-video container")
    version, t, s, dv, dt = struct.unpack_from("<5I", blob, 4)
    if version != _VIDEO_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    offset = 24
    labels = []
    for _ in range(s):
        e_idx, i_idx, start, end = struct.unpack_from("<4I", blob, offset)
        offset += 16
        labels.append(
            SegmentLabel(EMOTIONS[e_idx], INTENSITIES[i_idx], start, end)
        )
    visual = np.frombuffer(blob, dtype="<f8", count=t * dv, offset=offset).reshape(t, dv)
    offset += 8 * t * dv
    text = np.frombuffer(blob, dtype="<f8", count=s * dt, offset=offset).reshape(s, dt)
    return LongVideo(visual.copy(), text.copy(), tuple(labels))
