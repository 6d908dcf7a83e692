"""Fuzzy emotion inference, step by step
=========================================

Twelve facial components (eyebrows, eyes, nose, mouth, lips, corners)
each take a handful of attribute values.  A raw score per component is
fuzzified against triangular curves, collapsed to a soft coding, and
matched against a bank of crisp rule prototypes to score all 18
(emotion, intensity) classes.
"""

import numpy as np

from fuzzymeta.fuzzy import (
    FACIAL_COMPONENTS,
    ComponentCoding,
    FuzzyConfig,
    annotate,
    class_label,
    component_memberships,
    default_intensity_curves,
    default_rule_bank,
    defuzzify,
    eccentricity,
    match_rules,
    tri_membership,
)

cfg = FuzzyConfig()  # membership ranges lambda1 = lambda2 = 0.4

# --- 1. triangular memberships on one component -------------------------
# The left eyebrow takes values -1 (low), 0 (normal), +1 (raised); each
# value owns a triangle of half-width 0.5 + lambda1 = 0.9.
print("eyebrow score -> memberships for (low, normal, raised)")
for score in (-1.0, -0.3, 0.0, 0.5, 1.0):
    mu = component_memberships(score, FACIAL_COMPONENTS[0], cfg)
    print(f"  u = {score:+.1f}  ->  {np.round(mu, 4)}")

# A score midway between two values belongs to both equally:
print("tri(0.5, center=0, width=0.9) =", round(tri_membership(0.5, 0.0, 0.9), 4))

# --- 2. de-fuzzification ------------------------------------------------
# Raw scores for all 12 components collapse to a soft coding in [-1, 1]:
# the membership-weighted centroid of the active attribute values.
raw = np.array([0.9, 0.8, 0.1, 0.7, 0.9, 0.0, 0.8, 0.2, 0.1, 0.9, 1.1, 0.8])
soft = defuzzify(raw, cfg=cfg)
print("\nraw scores  ", np.round(raw, 2))
print("soft coding ", np.round(soft.values, 3))

# --- 3. rule matching ---------------------------------------------------
# The bank holds one crisp prototype per class.  Eccentricity is the
# normalized L1 distance to a prototype; each class's membership is a
# triangle over the distance to its nearest rule.
bank = default_rule_bank()
match = match_rules(soft, bank, cfg)
order = np.argsort(match.memberships)[::-1]
print("\ntop classes for the soft coding above:")
for c in order[:4]:
    emotion, intensity = class_label(int(c))
    print(f"  {emotion}-{intensity:<7} mu = {match.memberships[c]:.3f} "
          f"(eccentricity {match.distances[c]:.3f})")

# The soft coding above leans toward the Happy-High prototype:
happy_high = bank.rules[3].prototype
print("distance to Happy-High prototype:", round(eccentricity(soft, happy_high), 4))

# --- 4. annotation ------------------------------------------------------
# annotate() picks the top class; exact prototypes come back with full
# confidence, and the intensity curves report their memberships at the
# winning eccentricity.
curves = default_intensity_curves()
for rule in (bank.rules[0], bank.rules[7]):
    result = annotate(rule.prototype, bank, cfg, curves)
    print(f"\nprototype of {rule.emotion}-{rule.intensity} -> "
          f"{result.emotion}-{result.intensity}, confidence {result.confidence}")
    print("  intensity-curve memberships (low, medium, high):",
          np.round(result.intensity_memberships, 3))

# The curves themselves encode how eccentricity maps to intensity: at
# e = 0.2 an angry face is partly Medium, not at all Low.
print("\nAngry curves at e = 0.2:",
      {i: round(curves.evaluate("Angry", i, 0.2), 3) for i in ("Low", "Medium", "High")})

# Mixed or ambiguous codings spread their membership across classes:
ambiguous = ComponentCoding(np.zeros(12), mode="soft")
result = annotate(ambiguous, bank, cfg)
print("all-neutral coding annotates as "
      f"{result.emotion}-{result.intensity} with confidence {result.confidence:.3f}")
