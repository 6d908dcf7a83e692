"""Facial-component attributes and the fuzzification layer.

Twelve facial components (eyebrows, eyes, nose, mouth, lips, mouth
corners) each take a small set of attribute values: -1/0/1 for
three-valued components, 0/1 for binary ones.  A raw encoder score per
component is fuzzified against triangular membership curves centered on
those values and then collapsed back (centroid de-fuzzification) into a
soft component coding in [-1, 1]^12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EMOTIONS = ("Angry", "Happy", "Disgust", "Fear", "Sad", "Surprise")
INTENSITIES = ("Low", "Medium", "High")
NUM_CLASSES = len(EMOTIONS) * len(INTENSITIES)
NUM_COMPONENTS = 12

THREE_VALUED = (-1.0, 0.0, 1.0)
BINARY = (0.0, 1.0)


def class_index(emotion: str, intensity: str) -> int:
    """Flat class id for an (emotion, intensity) pair.

    Classes are ordered emotion-major (Angry < Happy < Disgust < Fear <
    Sad < Surprise) with Low < Medium < High inside each emotion; this
    order also defines deterministic tie-breaking.
    """
    return EMOTIONS.index(emotion) * 3 + INTENSITIES.index(intensity)


def class_label(index: int) -> tuple[str, str]:
    """Inverse of class_index."""
    if not 0 <= index < NUM_CLASSES:
        raise ValueError(f"class index {index} outside 0..{NUM_CLASSES - 1}")
    return EMOTIONS[index // 3], INTENSITIES[index % 3]


@dataclass(frozen=True)
class AttributeSpec:
    """One facial component: its 1-based index, name, and value set.

    Membership curves are triangles centered on each attribute value;
    their common half-width comes from FuzzyConfig, so the spec itself
    only carries the centers.
    """

    index: int
    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        if not 1 <= self.index <= NUM_COMPONENTS:
            raise ValueError(f"component index {self.index} outside 1..12")
        if self.values not in (THREE_VALUED, BINARY):
            raise ValueError(f"unsupported value set {self.values!r}")


FACIAL_COMPONENTS: tuple[AttributeSpec, ...] = (
    AttributeSpec(1, "left eyebrow", THREE_VALUED),
    AttributeSpec(2, "right eyebrow", THREE_VALUED),
    AttributeSpec(3, "brow crest", BINARY),
    AttributeSpec(4, "left eye", THREE_VALUED),
    AttributeSpec(5, "right eye", THREE_VALUED),
    AttributeSpec(6, "nose", BINARY),
    AttributeSpec(7, "nostril", BINARY),
    AttributeSpec(8, "mouth", BINARY),
    AttributeSpec(9, "upper lip", THREE_VALUED),
    AttributeSpec(10, "lower lip", THREE_VALUED),
    AttributeSpec(11, "left mouth corner", THREE_VALUED),
    AttributeSpec(12, "right mouth corner", THREE_VALUED),
)


@dataclass(frozen=True)
class FuzzyConfig:
    """Membership ranges for the two inference stages.

    lambda1 widens the per-attribute curves (half-width 0.5 + lambda1),
    lambda2 widens the rule-matching curve over eccentricity (half-width
    0.25 + lambda2 / 2).  Both default to 0.4.
    """

    lambda1: float = 0.4
    lambda2: float = 0.4

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    @property
    def attribute_half_width(self) -> float:
        return 0.5 + self.lambda1

    @property
    def matching_half_width(self) -> float:
        return 0.25 + self.lambda2 / 2.0


def tri_membership(u: float, center: float, half_width: float) -> float:
    """Triangular membership: 1 at the center, 0 outside +-half_width."""
    if half_width <= 0.0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    return max(0.0, 1.0 - abs(u - center) / half_width)


def component_memberships(
    u: float, spec: AttributeSpec, cfg: FuzzyConfig | None = None
) -> np.ndarray:
    """Memberships of a raw score in each attribute value of one component.

    Returns one value per entry of ``spec.values``; the vector is not
    normalized and may sum to anything in [0, len(values)].
    """
    cfg = cfg or FuzzyConfig()
    w = cfg.attribute_half_width
    return np.array([tri_membership(u, v, w) for v in spec.values])


@dataclass(frozen=True)
class ComponentCoding:
    """A 12-vector of component-attribute values.

    Crisp codings take values in {-1, 0, 1}; soft codings live in
    [-1, 1] (the convex hull of the attribute values).
    """

    values: np.ndarray
    mode: str = "crisp"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise ValueError(f"coding must be a vector, got shape {vals.shape}")
        if self.mode == "crisp":
            if not np.isin(vals, (-1.0, 0.0, 1.0)).all():
                raise ValueError("crisp coding values must lie in {-1, 0, 1}")
        elif self.mode == "soft":
            if (np.abs(vals) > 1.0).any():
                raise ValueError("soft coding values must lie in [-1, 1]")
        else:
            raise ValueError(f"unknown coding mode {self.mode!r}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ComponentCoding)
            and self.mode == other.mode
            and np.array_equal(self.values, other.values)
        )

    def __len__(self) -> int:
        return len(self.values)


def defuzzify(
    u: np.ndarray,
    specs: tuple[AttributeSpec, ...] = FACIAL_COMPONENTS,
    cfg: FuzzyConfig | None = None,
) -> ComponentCoding:
    """Collapse raw per-component scores into a soft component coding.

    Each score is turned into value memberships and replaced by the
    membership-weighted centroid of the active values.  A score outside
    every curve's support clamps to the nearest attribute value, so the
    map is total.
    """
    cfg = cfg or FuzzyConfig()
    u = np.asarray(u, dtype=float)
    if u.shape != (len(specs),):
        raise ValueError(f"expected {len(specs)} scores, got shape {u.shape}")
    out = np.empty(len(specs))
    for j, spec in enumerate(specs):
        mu = component_memberships(u[j], spec, cfg)
        total = mu.sum()
        vals = np.array(spec.values)
        if total == 0.0:
            out[j] = vals[np.argmin(np.abs(vals - u[j]))]
        else:
            out[j] = float(mu @ vals) / total
    return ComponentCoding(out, mode="soft")


def defuzzify_batch(
    u: np.ndarray,
    specs: tuple[AttributeSpec, ...] = FACIAL_COMPONENTS,
    cfg: FuzzyConfig | None = None,
) -> np.ndarray:
    """Vectorized defuzzify over rows of scores; returns an (n, 12) array
    equal row-by-row to the scalar path."""
    cfg = cfg or FuzzyConfig()
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != len(specs):
        raise ValueError(f"expected (n, {len(specs)}) scores, got shape {u.shape}")
    w = cfg.attribute_half_width
    out = np.empty_like(u)
    for j, spec in enumerate(specs):
        vals = np.array(spec.values)
        mu = np.maximum(0.0, 1.0 - np.abs(u[:, j : j + 1] - vals[None, :]) / w)
        total = mu.sum(axis=1)
        centroid = mu @ vals
        dead = total == 0.0
        safe_total = np.where(dead, 1.0, total)
        out[:, j] = centroid / safe_total
        if dead.any():
            nearest = np.argmin(np.abs(u[dead, j][:, None] - vals[None, :]), axis=1)
            out[dead, j] = vals[nearest]
    return out
