"""Generalized fuzzy emotion inference: component fuzzification and
rule-bank matching over (emotion, intensity) classes."""

from .attributes import (
    BINARY,
    EMOTIONS,
    FACIAL_COMPONENTS,
    INTENSITIES,
    NUM_CLASSES,
    NUM_COMPONENTS,
    THREE_VALUED,
    AttributeSpec,
    ComponentCoding,
    FuzzyConfig,
    class_index,
    class_label,
    component_memberships,
    defuzzify,
    tri_membership,
)
from .inference import (
    Annotation,
    RuleMatch,
    annotate,
    class_memberships,
    eccentricity,
    match_rules,
    match_semantic_vector,
    semantic_vector,
)
from .rules import (
    FuzzyRule,
    IntensityCurve,
    IntensityCurveSet,
    RuleBank,
    RuleParseError,
    default_intensity_curves,
    default_rule_bank,
    parse_intensity_curves,
    parse_rule_bank,
    reference_rule_bank,
    serialize_intensity_curves,
    serialize_rule_bank,
)

__all__ = [
    "BINARY",
    "EMOTIONS",
    "FACIAL_COMPONENTS",
    "INTENSITIES",
    "NUM_CLASSES",
    "NUM_COMPONENTS",
    "THREE_VALUED",
    "Annotation",
    "AttributeSpec",
    "ComponentCoding",
    "FuzzyConfig",
    "FuzzyRule",
    "IntensityCurve",
    "IntensityCurveSet",
    "RuleBank",
    "RuleMatch",
    "RuleParseError",
    "annotate",
    "class_index",
    "class_label",
    "class_memberships",
    "component_memberships",
    "default_intensity_curves",
    "default_rule_bank",
    "defuzzify",
    "eccentricity",
    "match_rules",
    "match_semantic_vector",
    "parse_intensity_curves",
    "parse_rule_bank",
    "reference_rule_bank",
    "semantic_vector",
    "serialize_intensity_curves",
    "serialize_rule_bank",
    "tri_membership",
]
