"""Shared fixtures: a fast, tiny end-to-end pipeline for contract tests.

The tiny pipeline trades quality for speed (narrow model, few epochs); the
acceptance suite builds its own larger smoke pipeline with frozen settings.
"""

import pytest

from choreolab import dataset as ds
from choreolab import diffusion as dif
from choreolab import hvqvae as hv


@pytest.fixture(scope="session")
def tiny_pipeline(tmp_path_factory):
    """Corpus + trained checkpoints, small enough to build in seconds."""
    root = tmp_path_factory.mktemp("tiny_pipeline")
    manifest = ds.generate_synthetic_corpus(seed=7, n_clips=4, feature_dim=16,
                                            min_windows=2, max_windows=2)
    corpus_dir = root / "corpus"
    manifest_path = ds.save_corpus(manifest, corpus_dir)

    windows = ds.training_windows(manifest)
    vq_cfg = hv.VQVAETrainConfig(
        epochs=4, batch_size=4, lr=3e-4, seed=0,
        model=hv.HVQVAEConfig(width=32, bottom_codebook=24, top_codebook=12,
                              bottom_blocks=1, top_blocks=1),
    )
    model, music_encoder, history = hv.train_vqvae(windows, manifest.skeleton, vq_cfg)
    vq_path = root / "vq.pt"
    hv.save_vqvae_checkpoint(vq_path, model, music_encoder, vq_cfg, history)

    latents, conds = dif.build_latent_corpus(model, windows)
    prior_cfg = dif.PriorTrainConfig(
        epochs=8, batch_size=4, lr=1e-3, seed=0, diffusion_steps=100,
        denoiser=dif.DenoiserConfig(layers=1, heads=2, latent_dim=32, feed_forward=64,
                                    dropout=0.0, seq_len=128,
                                    input_dim=latents.shape[-1], cond_dim=conds.shape[-1]),
    )
    prior_path = root / "prior.pt"
    prior = dif.train_prior(latents, conds, prior_cfg, checkpoint_path=prior_path)

    return {
        "root": root,
        "manifest": manifest,
        "manifest_path": manifest_path,
        "corpus_dir": corpus_dir,
        "model": model,
        "prior": prior,
        "vq_path": vq_path,
        "prior_path": prior_path,
    }
