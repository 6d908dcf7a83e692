"""From a long video to meta-learning episodes
===============================================

A long video carries per-frame visual features, one text vector per
labeled segment, and the emotion label sequence.  Construction slices it
into per-emotion views, pairs the modalities by position, and samples
single-emotion support/query episodes.
"""

import numpy as np

from fuzzymeta.encoder import build_adjacency
from fuzzymeta.fuzzy import default_rule_bank
from fuzzymeta.synth import GeneratorConfig, generate_video
from fuzzymeta.tasks import (
    PositionEncoder,
    build_view_groups,
    sample_task,
    segment_by_labels,
    segment_modalities,
)

# --- 1. a synthetic long video -------------------------------------------
bank = default_rule_bank()
cfg = GeneratorConfig(frames_per_segment=16, seed=3)
labels = [
    ("Angry", "High"), ("Angry", "Low"), ("Happy", "Medium"),
    ("Angry", "Medium"), ("Happy", "High"), ("Angry", "High"),
]
video = generate_video(labels, cfg, bank, seed=42)
print(f"video: {video.n_frames} frames, {video.n_segments} segments, "
      f"visual {video.visual.shape}, text {video.text.shape}")

# --- 2. modality split and views ------------------------------------------
visual_stream, text_stream = segment_modalities(video)
views = segment_by_labels(visual_stream)
print("\nvisual views (position, label, frames):")
for v in views:
    print(f"  pos {v.position_index}: {v.emotion}-{v.intensity}, {v.frames.shape[0]} frames")

# --- 3. cross-modal groups --------------------------------------------------
groups = build_view_groups(video)
print(f"\n{len(groups)} view groups; each pairs the visual and text view of one segment")

# --- 4. a single-emotion episode --------------------------------------------
# Pools usually merge groups from many videos; one video is enough here.
angry = [g for g in groups if g.emotion == "Angry"]
task = sample_task(angry, "Angry", k_support=2, k_query=2, seed=7)
print(f"episode: emotion={task.emotion}, "
      f"support positions {[g.position_index for g in task.support]}, "
      f"query positions {[g.position_index for g in task.query]}")
print("same seed resamples identically:",
      [g.position_index for g in sample_task(angry, 'Angry', 2, 2, seed=7).support])

# --- 5. the task graph --------------------------------------------------------
# Nodes are views (visual block then text block); edges join the two
# modalities of a group and same-modality views at adjacent positions.
graph = build_adjacency(task.support)
print("\nsupport-graph adjacency:\n", graph.adjacency.astype(int))
print("normalized (self-loops, symmetric scaling):\n", np.round(graph.normalized, 3))

# --- 6. positional encodings ---------------------------------------------------
encoder = PositionEncoder()
a = encoder.encode(0, video.n_segments, "visual")
b = encoder.encode(1, video.n_segments, "visual")
t = encoder.encode(0, video.n_segments, "text")
print("\npositional encodings are fixed, deterministic 8-vectors:")
print("  pos 0 visual:", np.round(a, 3))
print("  pos 1 visual differs:", bool(np.linalg.norm(a - b) > 0))
print("  modality changes the code too:", bool(np.linalg.norm(a - t) > 0))
