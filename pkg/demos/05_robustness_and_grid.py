"""Noise robustness and the membership-range surface
=====================================================

Feature-level analogues of fog, mask and distortion corrupt the
benchmark at increasing probabilities; a trained model is swept across
them, and across the two fuzzy membership ranges.  This mirrors what
`fuzzymeta robustness` and `fuzzymeta grid` emit as CSV.
"""

import numpy as np

from fuzzymeta.encoder import EncoderConfig, Pipeline, init_encoder_params
from fuzzymeta.fuzzy import EMOTIONS, FuzzyConfig, default_rule_bank
from fuzzymeta.meta import MetaConfig, MetaState, evaluate, outer_step
from fuzzymeta.synth import (
    NOISE_KINDS,
    STANDARD_NOISE_LEVELS,
    GeneratorConfig,
    NoiseSpec,
    apply_noise,
    generate_video,
    label_cycle,
)
from fuzzymeta.tasks import PositionEncoder, build_view_groups, sample_task

bank = default_rule_bank()
gen_cfg = GeneratorConfig(frames_per_segment=12)


def make_videos(n, seed_base):
    sequences = label_cycle(n, gen_cfg.segments_per_video, seed=seed_base)
    return [
        generate_video(seq, gen_cfg, bank, seed=seed_base + 10 * i)
        for i, seq in enumerate(sequences)
    ]


def pool_of(videos):
    return [g for v in videos for g in build_view_groups(v)]


def eval_on(pool, pipeline, params):
    tasks = [sample_task(pool, EMOTIONS[i % 6], 5, 5, seed=31 + i) for i in range(18)]
    return evaluate(params, tasks, pipeline, meta_cfg).accuracy_18


# --- train a small model once ---------------------------------------------
enc_cfg = EncoderConfig(embed_dim=24)
pipeline = Pipeline(enc_cfg, bank, FuzzyConfig(), PositionEncoder())
meta_cfg = MetaConfig()
state = MetaState(init_encoder_params(enc_cfg, seed=0), meta_cfg)
train_pool = pool_of(make_videos(18, 100))
rng = np.random.default_rng(2)
for _ in range(180):
    tasks = [
        sample_task(train_pool, EMOTIONS[int(rng.integers(0, 6))], 5, 5,
                    int(rng.integers(0, 2**31)))
        for _ in range(meta_cfg.tasks_per_batch)
    ]
    outer_step(state, tasks, pipeline)

test_videos = make_videos(12, 9000)
print("clean accuracy:", round(eval_on(pool_of(test_videos), pipeline, state.params), 3))

# --- robustness sweep --------------------------------------------------------
print("\nnoise sweep (accuracy by level):")
for kind in NOISE_KINDS:
    row = []
    for level in STANDARD_NOISE_LEVELS:
        noisy = [
            apply_noise(v, NoiseSpec(kind, level, seed=50 + i))
            for i, v in enumerate(test_videos)
        ]
        row.append(eval_on(pool_of(noisy), pipeline, state.params))
    cells = "  ".join(f"{level:.0%}: {acc:.3f}" for level, acc in zip(STANDARD_NOISE_LEVELS, row))
    print(f"  {kind:<10} {cells}")

# --- membership-range slice ----------------------------------------------------
# The full 9x9 grid is `fuzzymeta grid`; a slice along lambda1 = lambda2
# shows the shape near the shipped default (0.4, 0.4).
print("\nmembership-range slice (lambda1 = lambda2):")
clean_pool = pool_of(test_videos)
for lam in (0.2, 0.4, 0.6, 0.8):
    swept = Pipeline(enc_cfg, bank, FuzzyConfig(lam, lam), pipeline.position_encoder)
    print(f"  lambda = {lam:.1f}: accuracy {eval_on(clean_pool, swept, state.params):.3f}")
