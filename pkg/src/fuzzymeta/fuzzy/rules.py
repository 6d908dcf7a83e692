"""Rule bank and intensity curves for emotion-knowledge inference.

A rule pairs an (emotion, intensity) class with a crisp prototype
coding.  The shipped bank carries twelve reference prototypes plus six
fill-in rules so that every one of the 18 classes has at least one rule;
real deployments are expected to extend the bank with many more rules
per emotion.  Intensity curves are triangular memberships over the
eccentricity axis, one per (emotion, intensity) class.

File formats (plain text, '\\n' lines, '.' decimal point):

  rule bank:        <Emotion> <Intensity> v1 ... v12 [w=<real>]
  intensity curves: <Emotion> <Intensity> <center> <half_width>

'#' starts a comment in both formats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attributes import (
    EMOTIONS,
    INTENSITIES,
    NUM_CLASSES,
    NUM_COMPONENTS,
    ComponentCoding,
    class_index,
    tri_membership,
)


class RuleParseError(ValueError):
    """Malformed rule-bank or curve file; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class FuzzyRule:
    emotion: str
    intensity: str
    prototype: ComponentCoding
    weight: float = 1.0

    def __post_init__(self):
        if self.emotion not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.emotion!r}")
        if self.intensity not in INTENSITIES:
            raise ValueError(f"unknown intensity {self.intensity!r}")
        if self.prototype.mode != "crisp":
            raise ValueError("rule prototypes must be crisp codings")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"rule weight must lie in (0, 1], got {self.weight}")

    @property
    def class_id(self) -> int:
        return class_index(self.emotion, self.intensity)


@dataclass(frozen=True)
class RuleBank:
    """Immutable collection of rules indexed by (emotion, intensity) class.

    Prototypes must be pairwise distinct across the whole bank (nearest-
    rule matching would otherwise be ambiguous).  A bank need not cover
    all 18 classes; pipelines that require full coverage call
    ``require_full_coverage``.
    """

    rules: tuple[FuzzyRule, ...]
    by_class: dict[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.rules:
            raise ValueError("rule bank must contain at least one rule")
        dims = {len(r.prototype) for r in self.rules}
        if len(dims) != 1:
            raise ValueError(f"rules mix prototype lengths {sorted(dims)}")
        seen: dict[tuple, int] = {}
        index: dict[int, list[int]] = {}
        for i, rule in enumerate(self.rules):
            key = tuple(rule.prototype.values)
            if key in seen:
                raise ValueError(
                    f"rules {seen[key]} and {i} share an identical prototype"
                )
            seen[key] = i
            index.setdefault(rule.class_id, []).append(i)
        object.__setattr__(
            self, "by_class", {c: tuple(ix) for c, ix in index.items()}
        )

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def prototype_length(self) -> int:
        return len(self.rules[0].prototype)

    def classes(self) -> tuple[int, ...]:
        return tuple(sorted(self.by_class))

    def covers_all_classes(self) -> bool:
        return len(self.by_class) == NUM_CLASSES

    def require_full_coverage(self) -> "RuleBank":
        missing = [c for c in range(NUM_CLASSES) if c not in self.by_class]
        if missing:
            from .attributes import class_label

            names = ", ".join("-".join(class_label(c)) for c in missing)
            raise ValueError(f"rule bank has no rule for: {names}")
        return self


# Twelve reference prototypes, one per listed (emotion, intensity) class.
_REFERENCE_CODINGS = (
    ("Angry", "High", (0, 0, 1, 0, 0, 1, 0, -1, -1, -1, -1, -1)),
    ("Angry", "Medium", (-1, 0, -1, 0, 0, 0, 1, 0, 1, 0, 1, 1)),
    ("Angry", "Low", (0, 0, 0, 1, 1, 0, 1, -1, 0, 0, 0, 0)),
    ("Happy", "High", (1, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1)),
    ("Happy", "Medium", (0, 1, 1, 0, 1, 1, 0, 0, 0, -1, 0, 0)),
    ("Happy", "Low", (-1, 0, 1, 0, 1, 0, 0, 0, 1, 0, -1, -1)),
    ("Disgust", "High", (1, 1, -1, 0, 0, 0, 0, 0, 1, -1, 0, 0)),
    ("Disgust", "Medium", (1, 1, 0, 0, 0, 0, 0, 0, 0, -1, 0, 0)),
    ("Fear", "Low", (0, 0, 0, -1, -1, 0, 0, 0, 0, 0, 1, 1)),
    ("Sad", "High", (-1, -1, 0, -1, -1, 1, 0, 0, -1, -1, 0, 0)),
    ("Sad", "Medium", (-1, -1, 0, 0, 0, 1, 0, 0, 0, -1, 0, 0)),
    ("Surprise", "Low", (0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1)),
)

# Fill-in prototypes for the six classes the reference set misses, kept
# at L1 distance >= 2 from every other prototype.
_COVERAGE_CODINGS = (
    ("Disgust", "Low", (0, 0, 1, 0, 0, 1, 0, 0, 1, 0, -1, -1)),
    ("Fear", "Medium", (1, 1, 1, 1, 1, 0, 0, 1, -1, 0, 0, 0)),
    ("Fear", "High", (1, 1, 1, 1, 1, 0, 1, 1, -1, -1, -1, -1)),
    ("Sad", "Low", (-1, -1, 0, 0, 0, 0, 0, 0, 0, 0, -1, -1)),
    ("Surprise", "Medium", (1, 1, 0, 1, 1, 0, 0, 1, 0, 0, 1, 1)),
    ("Surprise", "High", (1, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 1)),
)


def _make_rules(codings) -> tuple[FuzzyRule, ...]:
    return tuple(
        FuzzyRule(em, it, ComponentCoding(np.array(vals, dtype=float)))
        for em, it, vals in codings
    )


def reference_rule_bank() -> RuleBank:
    """The twelve reference rules only (does not cover all 18 classes)."""
    return RuleBank(_make_rules(_REFERENCE_CODINGS))


def default_rule_bank() -> RuleBank:
    """Reference rules plus coverage fill-ins: one rule per class."""
    bank = RuleBank(_make_rules(_REFERENCE_CODINGS + _COVERAGE_CODINGS))
    return bank.require_full_coverage()


def parse_rule_bank(text: str) -> RuleBank:
    """Parse the rule-bank text format; errors carry the offending line."""
    rules = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        weight = 1.0
        if parts and parts[-1].startswith("w="):
            try:
                weight = float(parts[-1][2:])
            except ValueError:
                raise RuleParseError(n, f"bad weight {parts[-1]!r}") from None
            parts = parts[:-1]
        if len(parts) != 2 + NUM_COMPONENTS:
            raise RuleParseError(
                n,
                f"expected emotion, intensity and {NUM_COMPONENTS} values, "
                f"got {len(parts)} fields",
            )
        emotion, intensity = parts[0], parts[1]
        try:
            values = [float(tok) for tok in parts[2:]]
        except ValueError as exc:
            raise RuleParseError(n, str(exc)) from None
        if any(v not in (-1.0, 0.0, 1.0) for v in values):
            raise RuleParseError(n, "coding values must lie in {-1, 0, 1}")
        try:
            rules.append(
                FuzzyRule(emotion, intensity, ComponentCoding(np.array(values)), weight)
            )
        except ValueError as exc:
            raise RuleParseError(n, str(exc)) from None
    if not rules:
        raise RuleParseError(0, "no rules found")
    return RuleBank(tuple(rules))


def serialize_rule_bank(bank: RuleBank) -> str:
    """Inverse of parse_rule_bank: parse(serialize(bank)) == bank."""
    lines = []
    for rule in bank.rules:
        vals = " ".join(f"{int(v):d}" for v in rule.prototype.values)
        line = f"{rule.emotion} {rule.intensity} {vals}"
        if rule.weight != 1.0:
            line += f" w={rule.weight!r}"
        lines.append(line)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class IntensityCurve:
    """Triangular membership over eccentricity for one class."""

    emotion: str
    intensity: str
    center: float
    half_width: float

    def __post_init__(self):
        if self.emotion not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.emotion!r}")
        if self.intensity not in INTENSITIES:
            raise ValueError(f"unknown intensity {self.intensity!r}")
        if not 0.0 <= self.center <= 1.0:
            raise ValueError(f"curve center must lie in [0, 1], got {self.center}")
        if self.half_width <= 0.0:
            raise ValueError(f"curve half_width must be positive, got {self.half_width}")

    def evaluate(self, e: float) -> float:
        return tri_membership(e, self.center, self.half_width)


class IntensityCurveSet:
    """One curve per (emotion, intensity) class, keyed for lookup."""

    def __init__(self, curves):
        self._curves: dict[tuple[str, str], IntensityCurve] = {}
        for curve in curves:
            key = (curve.emotion, curve.intensity)
            if key in self._curves:
                raise ValueError(f"duplicate curve for {key}")
            self._curves[key] = curve

    def __iter__(self):
        return iter(self._curves.values())

    def __len__(self) -> int:
        return len(self._curves)

    def get(self, emotion: str, intensity: str) -> IntensityCurve:
        try:
            return self._curves[(emotion, intensity)]
        except KeyError:
            raise LookupError(f"no intensity curve for {emotion}-{intensity}") from None

    def evaluate(self, emotion: str, intensity: str, e: float) -> float:
        return self.get(emotion, intensity).evaluate(e)


# Default per-intensity shape, shared by all emotions.  The Medium curve
# gives membership 0.34 at e = 0.2 and the Low curve's support starts at
# 0.35, so Low has membership 0 there.
_DEFAULT_CURVE_SHAPE = {
    "High": (0.05, 0.25),
    "Medium": (0.35, 0.2273),
    "Low": (0.65, 0.30),
}


def default_intensity_curves() -> IntensityCurveSet:
    return IntensityCurveSet(
        IntensityCurve(em, it, *_DEFAULT_CURVE_SHAPE[it])
        for em in EMOTIONS
        for it in INTENSITIES
    )


def parse_intensity_curves(text: str) -> IntensityCurveSet:
    curves = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise RuleParseError(
                n, f"expected emotion, intensity, center, half_width; got {len(parts)} fields"
            )
        try:
            curve = IntensityCurve(parts[0], parts[1], float(parts[2]), float(parts[3]))
        except ValueError as exc:
            raise RuleParseError(n, str(exc)) from None
        curves.append(curve)
    if not curves:
        raise RuleParseError(0, "no curves found")
    return IntensityCurveSet(curves)


def serialize_intensity_curves(curves: IntensityCurveSet) -> str:
    lines = [
        f"{c.emotion} {c.intensity} {c.center!r} {c.half_width!r}" for c in curves
    ]
    return "\n".join(lines) + "\n"
