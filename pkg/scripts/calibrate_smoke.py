"""Calibration run for the smoke-pipeline acceptance thresholds.

Trains the desk-scale configuration end to end and prints every quantity the
acceptance suite asserts, so thresholds can be frozen from observed margins.
"""

import sys
import time

import numpy as np
import torch

sys.path.insert(0, "src")

from choreolab import dataset as ds
from choreolab import diffusion as dif
from choreolab import hvqvae as hv
from choreolab.latent_tools import (
    encode_to_codes,
    fix_bottom_vary_top,
    mean_joint_speed,
    pose_dispersion,
    transfer_codes,
)
from choreolab.metrics import beat_alignment, motion_beats
from choreolab.motion import MotionSequence
from choreolab.music import extract_beats, synth_click_features


def main(vq_epochs=30, prior_epochs=40, seed=0, width=512, cb_b=64, cb_t=16, lr=2e-4, reseed=3):
    t0 = time.time()
    manifest = ds.generate_synthetic_corpus(seed=11, n_clips=6, feature_dim=32,
                                            min_windows=2, max_windows=3)
    skel = manifest.skeleton
    windows = ds.training_windows(manifest)
    print(f"[{time.time()-t0:6.1f}s] corpus: {len(manifest.clips)} clips, {len(windows)} train windows")
    for c in manifest.clips:
        print("   ", c.id, c.split, len(c.motion))

    cfg = hv.VQVAETrainConfig(
        epochs=vq_epochs, batch_size=4, lr=lr, seed=seed, dead_code_epochs=reseed,
        model=hv.HVQVAEConfig(width=width, bottom_codebook=cb_b, top_codebook=cb_t),
    )
    model, music_enc, hist = hv.train_vqvae(windows, skel, cfg)
    traj = [(h["epoch"], round(h["total"], 3), h["usage_b"], h["usage_t"]) for h in hist[:: max(1, len(hist) // 8)]]
    print(f"    trajectory (epoch, loss, usage_b, usage_t): {traj}")
    print(f"[{time.time()-t0:6.1f}s] vq trained: loss {hist[0]['total']:.4f} -> {hist[-1]['total']:.4f}")
    print(f"    usage_b={hist[-1]['usage_b']}, usage_t={hist[-1]['usage_t']}, "
          f"perp_b={hist[-1]['perplexity_b']:.1f}, perp_t={hist[-1]['perplexity_t']:.1f}")

    # reconstruction quality
    errs = []
    for clip in manifest.clips:
        motion = MotionSequence(clip.motion.frames[:512])
        rec = model.reconstruct(motion)
        errs.append(hv.mpjpe(motion, rec, skel))
    print(f"    mpjpe over clips: {np.round(errs,4).tolist()}  (10% height = {0.1*skel.height():.3f})")

    # dispersion ratio
    gen = torch.Generator().manual_seed(123)
    tops = [torch.randint(0, cb_t, (64,), generator=gen) for _ in range(8)]
    disp_fixed = []
    for b_idx in range(min(8, cb_b)):
        _, d = fix_bottom_vary_top(b_idx, tops, model, skel)
        disp_fixed.append(d)
    bottoms = [torch.randint(0, cb_b, (128,), generator=gen) for _ in range(8)]
    varied = []
    with torch.no_grad():
        for t_seq, b_seq in zip(tops, bottoms):
            varied.append(MotionSequence(model.decode_indices(t_seq, b_seq)))
    disp_varied = pose_dispersion(varied, skel)
    print(f"    dispersion fixed-bottom (per index): {np.round(disp_fixed,4).tolist()}")
    print(f"    dispersion varied-bottom: {disp_varied:.4f}; ratio(mean) = {np.mean(disp_fixed)/disp_varied:.3f}")

    # tempo transfer
    clips = sorted(manifest.clips, key=lambda c: c.beats[1] - c.beats[0])
    fast, slow = clips[0], clips[-1]
    print(f"    transfer: slow={slow.id}, fast={fast.id}")
    src = MotionSequence(slow.motion.frames[:512])
    don = MotionSequence(fast.motion.frames[:512])
    src_codes = encode_to_codes(model, src)
    don_codes = encode_to_codes(model, don)
    with torch.no_grad():
        dec_src = MotionSequence(model.decode_indices(src_codes.top, src_codes.bottom))
        dec_don = MotionSequence(model.decode_indices(don_codes.top, don_codes.bottom))
        swapped = transfer_codes(src_codes, don_codes, "top")
        dec_swap = MotionSequence(model.decode_indices(swapped.top, swapped.bottom))
    s_src, s_don, s_swap = (mean_joint_speed(m, skel) for m in (dec_src, dec_don, dec_swap))
    print(f"    speeds: src={s_src:.4f} donor={s_don:.4f} transferred={s_swap:.4f} "
          f"(strictly between: {min(s_src,s_don) < s_swap < max(s_src,s_don)})")

    # reverse direction too
    swapped2 = transfer_codes(don_codes, src_codes, "top")
    with torch.no_grad():
        dec_swap2 = MotionSequence(model.decode_indices(swapped2.top, swapped2.bottom))
    s_swap2 = mean_joint_speed(dec_swap2, skel)
    print(f"    reverse: donor-with-slow-top={s_swap2:.4f} (between: {min(s_src,s_don) < s_swap2 < max(s_src,s_don)})")

    # prior
    latents, conds = dif.build_latent_corpus(model, windows)
    pcfg = dif.PriorTrainConfig(
        epochs=prior_epochs, batch_size=8, lr=4e-4, seed=seed,
        denoiser=dif.DenoiserConfig(layers=4, latent_dim=256, feed_forward=512,
                                    input_dim=latents.shape[-1], cond_dim=conds.shape[-1]),
    )
    prior = dif.train_prior(latents, conds, pcfg)
    print(f"[{time.time()-t0:6.1f}s] prior trained: loss {prior.history[0]['loss']:.4f} -> {prior.history[-1]['loss']:.4f}")

    # BAS trained vs untrained
    torch.manual_seed(999)
    untrained = dif.Prior(
        denoiser=dif.LatentDenoiser(pcfg.denoiser).eval(),
        schedule=prior.schedule,
        latent_mean=prior.latent_mean, latent_std=prior.latent_std,
        config=pcfg,
    )
    for label, pr in (("trained", prior), ("untrained", untrained)):
        scores = []
        for i, bpm in enumerate((90, 120, 120, 180)):
            music, beats = synth_click_features(bpm, 512 / 60.0, feature_dim=32, seed=100 + i)
            motion, _, _ = dif.generate(music, model, pr, num_steps=25, seed=200 + i)
            mb = motion_beats(motion, skel)
            scores.append(beat_alignment(mb, extract_beats(music)))
        print(f"    BAS {label}: {np.round(scores,3).tolist()} mean={np.mean(scores):.3f}")

    print(f"[{time.time()-t0:6.1f}s] done")


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser()
    ap.add_argument("--vq-epochs", type=int, default=30)
    ap.add_argument("--prior-epochs", type=int, default=40)
    ap.add_argument("--width", type=int, default=512)
    ap.add_argument("--cb-b", type=int, default=64)
    ap.add_argument("--cb-t", type=int, default=16)
    ap.add_argument("--lr", type=float, default=2e-4)
    ap.add_argument("--reseed", type=int, default=3)
    args = ap.parse_args()
    main(args.vq_epochs, args.prior_epochs, width=args.width, cb_b=args.cb_b,
         cb_t=args.cb_t, lr=args.lr, reseed=args.reseed)
