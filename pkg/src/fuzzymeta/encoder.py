"""Spatio-temporal encoder and classification head.

Each view is projected into the shared embedding space, tagged with its
positional encoding, summarized over time by a stack of gated 1-D
convolutions, and refined by one round of message passing over the task
graph (cross-modal and temporally adjacent views are connected).  A
linear head then reads a 12-component coding off every embedding; the
fuzzy systems turn it into a semantic feature row that is concatenated
back before the 18-way classifier.  The fuzzy branch is a feature
provider only: gradients never flow through the memberships.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ParamSet,
    ShapeError,
    Tensor,
    concat,
    conv1d_windows,
    log_softmax,
)
from .fuzzy import (
    FACIAL_COMPONENTS,
    NUM_CLASSES,
    NUM_COMPONENTS,
    FuzzyConfig,
    RuleBank,
    class_index,
)
from .fuzzy.attributes import defuzzify_batch
from .fuzzy.inference import batch_semantic_vectors
from .tasks import MetaTask, PositionEncoder

_EMPTY = object()


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 64
    position_dim: int = 8
    visual_dim: int = 35
    text_dim: int = 300
    kernel_width: int = 3
    temporal_layers: int = 2
    coding_gain: float = 8.0

    def __post_init__(self):
        if self.embed_dim < 1 or self.position_dim < 1:
            raise ValueError("embedding and position dims must be positive")
        if self.kernel_width < 1 or self.temporal_layers < 1:
            raise ValueError("kernel width and layer count must be positive")

    @property
    def min_frames(self) -> int:
        """Views need strictly more frames than the total shrinkage."""
        return self.temporal_layers * (self.kernel_width - 1) + 1

    def t_out(self, t: int) -> int:
        return t - self.temporal_layers * (self.kernel_width - 1)


def init_encoder_params(cfg: EncoderConfig, seed: int = 0) -> ParamSet:
    """Fresh encoder + classifier parameters, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    d, p, k = cfg.embed_dim, cfg.position_dim, cfg.kernel_width

    def dense(rows: int, cols: int, scale: float) -> Tensor:
        return Tensor(rng.normal(0.0, scale, size=(rows, cols)), requires_grad=True)

    def bias(n: int) -> Tensor:
        return Tensor(np.zeros(n), requires_grad=True)

    entries: dict[str, Tensor] = {
        "proj_visual_w": dense(cfg.visual_dim, d, cfg.visual_dim**-0.5),
        "proj_visual_b": bias(d),
        "proj_text_w": dense(cfg.text_dim, d, cfg.text_dim**-0.5),
        "proj_text_b": bias(d),
    }
    c_in = d + p
    for layer in range(1, cfg.temporal_layers + 1):
        scale = (k * c_in) ** -0.5
        entries[f"temporal{layer}_value_w"] = dense(k * c_in, d, scale)
        entries[f"temporal{layer}_value_b"] = bias(d)
        entries[f"temporal{layer}_gate_w"] = dense(k * c_in, d, scale)
        entries[f"temporal{layer}_gate_b"] = bias(d)
        c_in = d
    entries["spatial_w"] = dense(d, d, d**-0.5)
    entries["coding_head_w"] = dense(d, NUM_COMPONENTS, cfg.coding_gain * d**-0.5)
    entries["coding_head_b"] = bias(NUM_COMPONENTS)
    entries["classifier_w"] = dense(d + NUM_COMPONENTS, NUM_CLASSES, (d + NUM_COMPONENTS) ** -0.5)
    entries["classifier_b"] = bias(NUM_CLASSES)
    return ParamSet(entries)


@dataclass(frozen=True)
class TaskGraph:
    """Binary adjacency over a task's views plus its symmetric
    normalization D^-1/2 (A + I) D^-1/2."""

    adjacency: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.diagonal(a).any():
            raise ValueError("adjacency must have a zero diagonal")
        if not np.isfinite(self.normalized).all():
            raise ValueError("normalized adjacency has non-finite rows")

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    a_hat = a + np.eye(a.shape[0])
    d_inv = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d_inv[:, None] * a_hat * d_inv[None, :]


def build_adjacency(groups) -> TaskGraph:
    """Task graph over views: nodes are all visual views (group order)
    followed by all text views; edges connect the two modalities of a
    group and same-modality views at adjacent positions."""
    groups = list(groups)
    n_groups = len(groups)
    n = 2 * n_groups
    a = np.zeros((n, n))
    for i in range(n_groups):
        a[i, n_groups + i] = a[n_groups + i, i] = 1.0
    for i in range(n_groups):
        for j in range(i + 1, n_groups):
            if abs(groups[i].position_index - groups[j].position_index) == 1:
                a[i, j] = a[j, i] = 1.0
                a[n_groups + i, n_groups + j] = a[n_groups + j, n_groups + i] = 1.0
    return TaskGraph(a, normalize_adjacency(a))


def temporal_conv(frames: Tensor, params: ParamSet, cfg: EncoderConfig) -> Tensor:
    """Gated temporal stack over one already-projected view.

    frames: (T, embed_dim + position_dim).  Each layer computes
    (x * W_value + b) .* sigmoid(x * W_gate + b) with valid padding, so the
    output is (T - layers * (kernel_width - 1), embed_dim).
    """
    if frames.shape[0] < cfg.min_frames:
        raise ShapeError(
            f"temporal conv needs at least {cfg.min_frames} frames, "
            f"got {frames.shape[0]}"
        )
    x = frames
    for layer in range(1, cfg.temporal_layers + 1):
        x = _gated_layer(x, params, layer, cfg, n_sequences=1, length=x.shape[0])
    return x


def _gated_layer(
    x: Tensor,
    params: ParamSet,
    layer: int,
    cfg: EncoderConfig,
    n_sequences: int,
    length: int,
) -> Tensor:
    k = cfg.kernel_width
    c_in = x.shape[1]
    idx = conv1d_windows(length, k, n_sequences)
    windows = x.take(idx, axis=0).reshape(n_sequences * (length - k + 1), k * c_in)
    value = windows @ params[f"temporal{layer}_value_w"] + params[f"temporal{layer}_value_b"]
    gate = (windows @ params[f"temporal{layer}_gate_w"] + params[f"temporal{layer}_gate_b"]).sigmoid()
    return value * gate


def _center_tap_layer(x: Tensor, params: ParamSet, layer: int, cfg: EncoderConfig) -> Tensor:
    # Temporal ablation: width-1 convolution with the kernels' center tap,
    # keeping the gate and all shapes while removing temporal context.
    k = cfg.kernel_width
    c_in = x.shape[1]
    rows = np.arange((k // 2) * c_in, (k // 2 + 1) * c_in)
    value = x @ params[f"temporal{layer}_value_w"].take(rows, axis=0)
    value = value + params[f"temporal{layer}_value_b"]
    gate = x @ params[f"temporal{layer}_gate_w"].take(rows, axis=0)
    gate = (gate + params[f"temporal{layer}_gate_b"]).sigmoid()
    return value * gate


def spatial_conv(z: Tensor, graph: TaskGraph, weight: Tensor) -> Tensor:
    """One round of normalized message passing: relu(A_hat Z W)."""
    if z.shape[0] != graph.n_nodes:
        raise ShapeError(
            f"spatial conv: {z.shape[0]} embeddings for {graph.n_nodes} nodes"
        )
    return (Tensor(graph.normalized) @ z @ weight).relu()


def fuzzy_semantic_features(
    embeddings: np.ndarray,
    params: ParamSet,
    bank: RuleBank,
    fuzzy_cfg: FuzzyConfig,
) -> np.ndarray:
    """Per-view fuzzy semantic rows, computed outside the autodiff graph.

    The coding head reads 12 component scores off each embedding; the
    scores are de-fuzzified and matched against the rule bank, and the
    membership-weighted prototype average becomes the feature row.
    """
    scores = embeddings @ params["coding_head_w"].data + params["coding_head_b"].data
    codings = defuzzify_batch(scores, FACIAL_COMPONENTS, fuzzy_cfg)
    return batch_semantic_vectors(codings, bank, fuzzy_cfg)


@dataclass
class Pipeline:
    """Everything needed to run views through the model except the
    parameters themselves (which swap during inner adaptation)."""

    cfg: EncoderConfig
    bank: RuleBank
    fuzzy_cfg: FuzzyConfig
    position_encoder: PositionEncoder
    use_temporal: bool = True
    use_spatial: bool = True
    use_fuzzy: bool = True

    def _encode_batch(self, views, params: ParamSet, proj: str) -> Tensor:
        n_views = len(views)
        t = views[0].frames.shape[0]
        flat = np.concatenate([v.frames for v in views], axis=0)
        x = Tensor(flat) @ params[f"{proj}_w"] + params[f"{proj}_b"]
        pos = np.repeat(
            np.stack([self.position_encoder.encode_view(v) for v in views]),
            t,
            axis=0,
        )
        x = concat([x, Tensor(pos)], axis=1)
        length = t
        for layer in range(1, self.cfg.temporal_layers + 1):
            if self.use_temporal:
                if length < self.cfg.kernel_width:
                    raise ShapeError(
                        f"temporal conv needs at least {self.cfg.min_frames} "
                        f"frames, got {t}"
                    )
                x = _gated_layer(x, params, layer, self.cfg, n_views, length)
                length -= self.cfg.kernel_width - 1
            else:
                x = _center_tap_layer(x, params, layer, self.cfg)
        return x.reshape(n_views, length, self.cfg.embed_dim).mean(axis=1)

    def _encode_modality(self, views, params: ParamSet, proj: str) -> Tensor:
        buckets: dict[int, list[int]] = {}
        for i, view in enumerate(views):
            buckets.setdefault(view.frames.shape[0], []).append(i)
        pieces, order = [], []
        for t in sorted(buckets):
            idxs = buckets[t]
            pieces.append(self._encode_batch([views[i] for i in idxs], params, proj))
            order.extend(idxs)
        z = pieces[0] if len(pieces) == 1 else concat(pieces, axis=0)
        if order != sorted(order):
            inverse = np.empty(len(order), dtype=np.intp)
            inverse[np.asarray(order)] = np.arange(len(order))
            z = z.take(inverse, axis=0)
        return z

    def encode_groups(self, groups, params: ParamSet) -> Tensor:
        """Per-view embeddings (visual block then text block, group order)."""
        groups = list(groups)
        if not groups:
            raise ValueError("cannot encode an empty group list")
        z_visual = self._encode_modality([g.visual for g in groups], params, "proj_visual")
        z_text = self._encode_modality([g.text for g in groups], params, "proj_text")
        z = concat([z_visual, z_text], axis=0)
        if self.use_spatial:
            z = spatial_conv(z, build_adjacency(groups), params["spatial_w"])
        return z

    def forward_groups(
        self, groups, params: ParamSet, fuzzy_features: np.ndarray | object = _EMPTY
    ) -> Tensor:
        """Per-view 18-class log-probabilities for a set of view groups.

        `fuzzy_features` overrides the fuzzy branch with a fixed (N, 12)
        matrix; gradient checks use this to freeze the branch that is
        detached by design.
        """
        groups = list(groups)
        z = self.encode_groups(groups, params)
        n = z.shape[0]
        if fuzzy_features is not _EMPTY:
            s = np.asarray(fuzzy_features, dtype=float)
        elif self.use_fuzzy:
            s = fuzzy_semantic_features(z.data, params, self.bank, self.fuzzy_cfg)
        else:
            s = np.zeros((n, NUM_COMPONENTS))
        if s.shape != (n, NUM_COMPONENTS):
            raise ShapeError(f"fuzzy features {s.shape}, expected {(n, NUM_COMPONENTS)}")
        h = concat([z, Tensor(s)], axis=1)
        logits = h @ params["classifier_w"] + params["classifier_b"]
        return log_softmax(logits, axis=1)

    def forward_task(self, task: MetaTask, params: ParamSet) -> Tensor:
        """Log-probabilities for a whole task: support rows then query
        rows, each set encoded on its own graph."""
        support = self.forward_groups(task.support, params)
        query = self.forward_groups(task.query, params)
        return concat([support, query], axis=0)


def view_labels(groups) -> np.ndarray:
    """Class ids per view, aligned with encode_groups row order."""
    groups = list(groups)
    ids = [class_index(g.visual.emotion, g.visual.intensity) for g in groups]
    ids += [class_index(g.text.emotion, g.text.intensity) for g in groups]
    return np.asarray(ids, dtype=np.intp)
