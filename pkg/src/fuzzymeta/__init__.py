"""Fuzzy-rule-guided multi-modal meta-learning for fine-grained emotion
recognition, on a minimal reverse-mode autodiff engine, with a synthetic
benchmark for end-to-end studies.

Subpackages / modules:

  fuzzy     component fuzzification, rule-bank matching, annotation
  autodiff  tensors, reverse-mode (and second-order) gradients
  tasks     long videos, views, view groups, episode sampling
  encoder   gated temporal conv + graph message passing + classifier
  meta      bi-level optimization, evaluation metrics
  synth     seeded benchmark generator and noise injectors
  cli       gen / train / eval / robustness / grid / annotate commands
"""

from . import autodiff, cli, encoder, fuzzy, meta, synth, tasks

__version__ = "0.1.0"

__all__ = ["autodiff", "cli", "encoder", "fuzzy", "meta", "synth", "tasks", "__version__"]
