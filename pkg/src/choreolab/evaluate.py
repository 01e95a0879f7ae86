"""End-to-end evaluation: generate against held-out music and score it."""

from __future__ import annotations

import numpy as np

from .dataset import DatasetManifest, WindowSpec, window_iterator
from .diffusion import Prior, generate
from .hvqvae import HVQVAE
from .metrics import (
    MetricReport,
    beat_alignment,
    diversity,
    frechet_distance,
    geometric_features,
    kinetic_features,
    motion_beats,
    pfc,
)
from .motion import MotionSequence
from .music import MusicFeatureSequence, extract_beats


def evaluate_model(
    vq: HVQVAE,
    prior: Prior,
    manifest: DatasetManifest,
    n_generated: int = 40,
    num_steps: int = 50,
    seed: int = 0,
    split: str = "test",
) -> MetricReport:
    """Score generations against the reference windows of a corpus split.

    Real feature statistics come from the split's windows; generated motions
    are sampled for the same music windows (cycled until n_generated), so
    diversity uses n_generated clips as configured.
    """
    skel = manifest.skeleton
    clips = manifest.split(split) or manifest.clips
    windows = []
    for clip in clips:
        windows.extend(window_iterator(clip, WindowSpec()))
    if len(windows) < 2:
        raise ValueError(f"split {split!r} has {len(windows)} windows; need at least 2")

    real_k, real_g = [], []
    for motion_w, _ in windows:
        m = MotionSequence(motion_w)
        real_k.append(kinetic_features(m, skel))
        real_g.append(geometric_features(m, skel))

    gen_k, gen_g, bas_scores, pfc_scores = [], [], [], []
    for i in range(n_generated):
        _, music_w = windows[i % len(windows)]
        music = MusicFeatureSequence(music_w)
        motion, _, _ = generate(music, vq, prior, num_steps=num_steps, seed=seed + i)
        gen_k.append(kinetic_features(motion, skel))
        gen_g.append(geometric_features(motion, skel))
        music_beat_times = extract_beats(music)
        if music_beat_times:
            bas_scores.append(beat_alignment(motion_beats(motion, skel), music_beat_times))
        pfc_scores.append(pfc(motion, skel))

    return MetricReport(
        fid_k=frechet_distance(np.stack(real_k), np.stack(gen_k)),
        fid_g=frechet_distance(np.stack(real_g), np.stack(gen_g)),
        div_k=diversity(np.stack(gen_k)),
        div_g=diversity(np.stack(gen_g)),
        bas=float(np.mean(bas_scores)) if bas_scores else 0.0,
        pfc=float(np.mean(pfc_scores)),
    )
