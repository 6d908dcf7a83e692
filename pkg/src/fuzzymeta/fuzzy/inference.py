"""Rule matching over component codings.

A coding is compared to every rule prototype through eccentricity, a
normalized L1 distance (0 = identical, 1 = maximally different).  Each
class's membership is a triangular function of the distance to its
nearest rule; the memberships then weight the matched prototypes into a
single semantic vector, or pick the top class for annotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attributes import (
    NUM_CLASSES,
    ComponentCoding,
    FuzzyConfig,
    class_label,
    tri_membership,
)
from .rules import IntensityCurveSet, RuleBank


def eccentricity(a: ComponentCoding, b: ComponentCoding) -> float:
    """Normalized L1 distance between two codings, in [0, 1].

    The denominator is 2 * n_components (each component can differ by at
    most 2), so twelve-component codings divide by 24.
    """
    if len(a) != len(b):
        raise ValueError(f"coding lengths differ: {len(a)} vs {len(b)}")
    return float(np.abs(a.values - b.values).sum()) / (2.0 * len(a))


@dataclass(frozen=True)
class RuleMatch:
    """Outcome of matching a coding against a bank.

    memberships: one value per class (zeros for classes without rules,
        uniform 1/18 when no rule's support was hit).
    prototypes:  the nearest rule prototype per class (zero rows for
        absent classes).
    distances:   per-class eccentricity to that nearest rule (inf for
        absent classes).
    fallback:    True when the uniform fallback fired.
    """

    memberships: np.ndarray
    prototypes: np.ndarray
    distances: np.ndarray
    fallback: bool

    @property
    def top_class(self) -> int:
        # np.argmax takes the first maximum, which realizes the fixed
        # class-order tie-break.
        return int(np.argmax(self.memberships))


def match_rules(
    o: ComponentCoding, bank: RuleBank, cfg: FuzzyConfig | None = None
) -> RuleMatch:
    """Match a coding against every class of the bank."""
    cfg = cfg or FuzzyConfig()
    if len(o) != bank.prototype_length:
        raise ValueError(
            f"coding length {len(o)} does not match bank prototypes "
            f"({bank.prototype_length})"
        )
    w = cfg.matching_half_width
    mu = np.zeros(NUM_CLASSES)
    protos = np.zeros((NUM_CLASSES, bank.prototype_length))
    dists = np.full(NUM_CLASSES, np.inf)
    for c, rule_ids in bank.by_class.items():
        if not rule_ids:
            raise ValueError(f"bank has an empty rule list for class {c}")
        best = min(rule_ids, key=lambda i: eccentricity(o, bank.rules[i].prototype))
        rule = bank.rules[best]
        e = eccentricity(o, rule.prototype)
        mu[c] = tri_membership(e, 0.0, w) * rule.weight
        protos[c] = rule.prototype.values
        dists[c] = e
    fallback = not mu.any()
    if fallback:
        mu = np.full(NUM_CLASSES, 1.0 / NUM_CLASSES)
    return RuleMatch(mu, protos, dists, fallback)


def class_memberships(
    o: ComponentCoding, bank: RuleBank, cfg: FuzzyConfig | None = None
) -> np.ndarray:
    """Per-class membership vector (length 18) for a coding."""
    return match_rules(o, bank, cfg).memberships


def semantic_vector(
    memberships: np.ndarray, prototypes: np.ndarray, present: np.ndarray | None = None
) -> np.ndarray:
    """Membership-weighted average of the matched prototypes.

    The result lies in the convex hull of the prototypes, hence in
    [-1, 1] per component; it is the fuzzy feature row the encoder
    appends to its embeddings.  All-zero memberships are an invariant
    violation (the matcher's uniform fallback should have fired).
    """
    mu = np.asarray(memberships, dtype=float)
    if (mu < 0).any():
        raise ValueError("memberships must be non-negative")
    if present is not None:
        mu = mu * present
    total = mu.sum()
    if total == 0.0:
        raise ValueError("all-zero memberships: uniform fallback did not fire")
    return (mu @ np.asarray(prototypes, dtype=float)) / total


def match_semantic_vector(
    o: ComponentCoding, bank: RuleBank, cfg: FuzzyConfig | None = None
) -> np.ndarray:
    """Convenience: match a coding and collapse it to its semantic vector."""
    m = match_rules(o, bank, cfg)
    present = np.isfinite(m.distances).astype(float)
    return semantic_vector(m.memberships, m.prototypes, present)


def batch_semantic_vectors(
    codings: np.ndarray, bank: RuleBank, cfg: FuzzyConfig | None = None
) -> np.ndarray:
    """Vectorized match + semantic vector over rows of soft codings.

    Row-by-row equal to match_semantic_vector; used on the hot path of
    the encoder."""
    cfg = cfg or FuzzyConfig()
    o = np.asarray(codings, dtype=float)
    if o.ndim != 2 or o.shape[1] != bank.prototype_length:
        raise ValueError(
            f"expected (n, {bank.prototype_length}) codings, got shape {o.shape}"
        )
    n = o.shape[0]
    length = bank.prototype_length
    protos = np.stack([r.prototype.values for r in bank.rules])
    weights = np.array([r.weight for r in bank.rules])
    ecc = np.abs(o[:, None, :] - protos[None, :, :]).sum(axis=2) / (2.0 * length)
    w = cfg.matching_half_width
    mu = np.zeros((n, NUM_CLASSES))
    nearest = np.zeros((n, NUM_CLASSES), dtype=np.intp)
    present = np.zeros(NUM_CLASSES)
    for c, rule_ids in bank.by_class.items():
        ids = np.asarray(rule_ids)
        sub = ecc[:, ids]
        best = np.argmin(sub, axis=1)
        e = sub[np.arange(n), best]
        rid = ids[best]
        mu[:, c] = np.maximum(0.0, 1.0 - e / w) * weights[rid]
        nearest[:, c] = rid
        present[c] = 1.0
    fallback = ~mu.any(axis=1)
    mu[fallback] = 1.0 / NUM_CLASSES
    weighted = mu * present[None, :]
    matched = protos[nearest]
    return (weighted[:, :, None] * matched).sum(axis=1) / weighted.sum(axis=1)[:, None]


@dataclass(frozen=True)
class Annotation:
    emotion: str
    intensity: str
    confidence: float
    intensity_memberships: tuple[float, ...] | None = None


def annotate(
    o: ComponentCoding,
    bank: RuleBank,
    cfg: FuzzyConfig | None = None,
    curves: IntensityCurveSet | None = None,
) -> Annotation:
    """Assign the best-matching (emotion, intensity) label to a coding.

    Confidence is the winning class membership.  Ties break by the fixed
    class order.  When intensity curves are supplied, their memberships
    at the winning class's eccentricity are reported alongside (Low,
    Medium, High order); they do not change the decision.
    """
    m = match_rules(o, bank, cfg)
    c = m.top_class
    emotion, intensity = class_label(c)
    curve_mu = None
    if curves is not None and np.isfinite(m.distances[c]):
        e = float(m.distances[c])
        curve_mu = tuple(
            curves.evaluate(emotion, level, e) for level in ("Low", "Medium", "High")
        )
    return Annotation(emotion, intensity, float(m.memberships[c]), curve_mu)
