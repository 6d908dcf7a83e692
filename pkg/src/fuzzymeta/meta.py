"""Bi-level meta-optimization.

Each task adapts the shared parameters with a few recorded gradient
steps on its support views; the outer update differentiates the average
query loss through those steps (exactly in second-order mode, with
detached inner gradients in first-order mode) and applies an
adaptive-moment update with decoupled weight decay.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamSet, Tensor, backward, grad_through_update
from .encoder import Pipeline, view_labels
from .fuzzy import NUM_CLASSES

SECOND_ORDER = "second_order"
FIRST_ORDER = "first_order"


@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 0.2
    beta: float = 0.005
    tasks_per_batch: int = 4
    inner_steps: int = 1
    mode: str = SECOND_ORDER
    momentum: float = 0.9
    second_moment: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    clip_norm: float = 2.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"inner rate must be non-negative, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"outer rate must be positive, got {self.beta}")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be at least 1")
        if self.tasks_per_batch < 1:
            raise ValueError("tasks_per_batch must be at least 1")
        if self.mode not in (SECOND_ORDER, FIRST_ORDER):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.clip_norm < 0:
            raise ValueError(f"clip_norm must be non-negative, got {self.clip_norm}")


@dataclass
class TaskLossRecord:
    task_id: int
    support_loss: float
    query_loss: float
    query_accuracy: float


def task_loss(log_probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-probability of the true class over views."""
    labels = np.asarray(labels)
    if log_probs.ndim != 2 or log_probs.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{log_probs.shape[0]} prediction rows for {labels.shape[0]} labels"
        )
    n_classes = log_probs.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    one_hot = np.zeros(log_probs.shape)
    one_hot[np.arange(labels.shape[0]), labels] = 1.0
    return -(Tensor(one_hot) * log_probs).sum(axis=1).mean()


def clip_gradients(grads: ParamSet, max_norm: float) -> ParamSet:
    """Scale the whole gradient set down to a global L2 norm of max_norm.

    Inactive (identity) when the norm is already within bounds or when
    max_norm is 0; the scale factor is treated as a constant, so clipped
    second-order updates differentiate through the scaled gradient.
    """
    if max_norm <= 0:
        return grads
    total = float(np.sqrt(sum((g.data**2).sum() for g in grads.values())))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return ParamSet({name: g * scale for name, g in grads.items()})


def adapt_params(
    params: ParamSet,
    loss_fn,
    alpha: float,
    steps: int = 1,
    mode: str = SECOND_ORDER,
    clip_norm: float = 0.0,
) -> tuple[ParamSet, float]:
    """Run `steps` recorded gradient steps on loss_fn(params).

    Returns the adapted parameters (still connected to the graph in
    second-order mode) and the pre-adaptation loss value.
    """
    second = mode == SECOND_ORDER
    current = params
    first_loss = None
    for _ in range(steps):
        loss = loss_fn(current)
        if first_loss is None:
            first_loss = float(loss.data)
        grads = backward(loss, current, create_graph=second)
        grads = clip_gradients(grads, clip_norm)
        current = grad_through_update(current, grads, alpha, first_order=not second)
    return current, first_loss


def inner_adapt(
    params: ParamSet,
    task,
    pipeline: Pipeline,
    alpha: float,
    steps: int = 1,
    mode: str = SECOND_ORDER,
    clip_norm: float = 0.0,
) -> ParamSet:
    """Task-specific parameters from gradient steps on the support set."""
    if not task.support:
        raise ValueError("task has an empty support set")
    labels = view_labels(task.support)

    def loss_fn(p: ParamSet) -> Tensor:
        return task_loss(pipeline.forward_groups(task.support, p), labels)

    adapted, _ = adapt_params(params, loss_fn, alpha, steps, mode, clip_norm)
    return adapted


def meta_gradient_from_losses(
    params: ParamSet,
    loss_pairs,
    alpha: float,
    steps: int = 1,
    mode: str = SECOND_ORDER,
):
    """Gradient of the mean post-adaptation query loss over tasks.

    loss_pairs is a sequence of (support_loss_fn, query_loss_fn); both
    map a ParamSet to a scalar Tensor.  Returns (gradients, per-task
    (support_loss, query_loss_tensor) list).
    """
    loss_pairs = list(loss_pairs)
    total = None
    per_task = []
    for support_fn, query_fn in loss_pairs:
        adapted, support_loss = adapt_params(params, support_fn, alpha, steps, mode)
        query = query_fn(adapted)
        per_task.append((support_loss, query))
        total = query if total is None else total + query
    meta_loss = total * (1.0 / len(loss_pairs))
    return backward(meta_loss, params), per_task


class AdamState:
    """Decoupled-weight-decay adaptive moment estimates."""

    def __init__(self, params: ParamSet):
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0

    def update(self, params: ParamSet, grads: ParamSet, cfg: MetaConfig) -> ParamSet:
        self.t += 1
        b1, b2 = cfg.momentum, cfg.second_moment
        out = {}
        for name, p in params.items():
            g = grads[name].data
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / (1.0 - b1**self.t)
            v_hat = self.v[name] / (1.0 - b2**self.t)
            step = m_hat / (np.sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * p.data
            out[name] = Tensor(p.data - cfg.beta * step, requires_grad=True)
        return ParamSet(out)


@dataclass
class MetaState:
    params: ParamSet
    config: MetaConfig = field(default_factory=MetaConfig)
    optimizer: AdamState = None

    def __post_init__(self):
        if self.optimizer is None:
            self.optimizer = AdamState(self.params)


def outer_step(state: MetaState, tasks, pipeline: Pipeline) -> list[TaskLossRecord]:
    """One meta-update over a batch of tasks; returns per-task records."""
    tasks = list(tasks)
    cfg = state.config
    if len(tasks) != cfg.tasks_per_batch:
        raise ValueError(
            f"expected {cfg.tasks_per_batch} tasks per batch, got {len(tasks)}"
        )
    total = None
    records = []
    for i, task in enumerate(tasks):
        try:
            if not task.support:
                raise ValueError("task has an empty support set")
            support_labels = view_labels(task.support)

            def support_fn(p, _task=task, _labels=support_labels):
                return task_loss(pipeline.forward_groups(_task.support, p), _labels)

            adapted, support_loss = adapt_params(
                state.params,
                support_fn,
                cfg.alpha,
                cfg.inner_steps,
                cfg.mode,
                cfg.clip_norm,
            )
            query_labels = view_labels(task.query)
            query_logp = pipeline.forward_groups(task.query, adapted)
            query_loss = task_loss(query_logp, query_labels)
        except Exception as exc:
            raise RuntimeError(
                f"outer step aborted at task {i} "
                f"(emotion={task.emotion}, seed={task.seed}): {exc}"
            ) from exc
        preds = np.argmax(query_logp.data, axis=1)
        records.append(
            TaskLossRecord(
                task_id=i,
                support_loss=support_loss,
                query_loss=float(query_loss.data),
                query_accuracy=float(np.mean(preds == query_labels)),
            )
        )
        total = query_loss if total is None else total + query_loss
    meta_loss = total * (1.0 / len(tasks))
    grads = clip_gradients(backward(meta_loss, state.params), cfg.clip_norm)
    state.params = state.optimizer.update(state.params, grads, cfg)
    return records


def pooled_step(state: MetaState, tasks, pipeline: Pipeline) -> list[TaskLossRecord]:
    """Single-level baseline: train directly on the pooled query views
    (no inner adaptation).  Used by the meta-learning ablation."""
    tasks = list(tasks)
    total = None
    records = []
    for i, task in enumerate(tasks):
        labels = view_labels(task.query)
        logp = pipeline.forward_groups(task.query, state.params)
        loss = task_loss(logp, labels)
        preds = np.argmax(logp.data, axis=1)
        records.append(
            TaskLossRecord(
                task_id=i,
                support_loss=float("nan"),
                query_loss=float(loss.data),
                query_accuracy=float(np.mean(preds == labels)),
            )
        )
        total = loss if total is None else total + loss
    meta_loss = total * (1.0 / len(tasks))
    grads = clip_gradients(backward(meta_loss, state.params), state.config.clip_norm)
    state.params = state.optimizer.update(state.params, grads, state.config)
    return records


@dataclass
class EvalReport:
    accuracy_18: float
    accuracy_6: float
    recall_18: float
    recall_6: float
    confusion_18: np.ndarray
    confusion_6: np.ndarray
    records: list[TaskLossRecord]
    predictions: np.ndarray  # rows of (task_id, true_class, predicted_class)


def _macro_recall(confusion: np.ndarray) -> float:
    class_totals = confusion.sum(axis=1)
    present = class_totals > 0
    per_class = np.diag(confusion)[present] / class_totals[present]
    return float(per_class.mean()) if present.any() else 0.0


def evaluate(
    params: ParamSet, tasks, pipeline: Pipeline, config: MetaConfig
) -> EvalReport:
    """Adapt on each task's support set and score its query views."""
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    records = []
    predictions = []
    for i, task in enumerate(tasks):
        adapted = inner_adapt(
            params,
            task,
            pipeline,
            config.alpha,
            config.inner_steps,
            FIRST_ORDER,
            config.clip_norm,
        )
        labels = view_labels(task.query)
        logp = pipeline.forward_groups(task.query, adapted)
        preds = np.argmax(logp.data, axis=1)
        for true, pred in zip(labels, preds):
            confusion[true, pred] += 1
            predictions.append((i, int(true), int(pred)))
        records.append(
            TaskLossRecord(
                task_id=i,
                support_loss=float("nan"),
                query_loss=float(task_loss(logp, labels).data),
                query_accuracy=float(np.mean(preds == labels)),
            )
        )
    confusion_6 = confusion.reshape(6, 3, 6, 3).sum(axis=(1, 3))
    total = confusion.sum()
    return EvalReport(
        accuracy_18=float(np.trace(confusion) / total) if total else 0.0,
        accuracy_6=float(np.trace(confusion_6) / total) if total else 0.0,
        recall_18=_macro_recall(confusion),
        recall_6=_macro_recall(confusion_6),
        confusion_18=confusion,
        confusion_6=confusion_6,
        records=records,
        predictions=np.asarray(predictions, dtype=np.int64).reshape(-1, 3),
    )


def format_log_line(step: int, records, wall_ms: float) -> str:
    """One training-log line: step, mean support loss, mean query loss,
    query accuracy, wall-time ms (tab-separated)."""
    support = float(np.mean([r.support_loss for r in records]))
    query = float(np.mean([r.query_loss for r in records]))
    acc = float(np.mean([r.query_accuracy for r in records]))
    return f"{step}\t{support!r}\t{query!r}\t{acc!r}\t{wall_ms:.3f}"


def train_loop(
    state: MetaState,
    task_source,
    pipeline: Pipeline,
    steps: int,
    log_lines: list | None = None,
    step_fn=outer_step,
    checkpoint_fn=None,
) -> MetaState:
    """Run `steps` outer updates; task_source(step) yields each batch."""
    for step in range(1, steps + 1):
        t0 = time.perf_counter()
        records = step_fn(state, task_source(step), pipeline)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        if log_lines is not None:
            log_lines.append(format_log_line(step, records, wall_ms))
        if checkpoint_fn is not None:
            checkpoint_fn(step, state)
    return state
