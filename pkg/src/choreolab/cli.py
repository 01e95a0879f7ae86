"""Command-line entry points for every pipeline stage.

Commands exit nonzero with a structured one-line error (error: <Type>: <message>)
on any module failure; file outputs are written via temp-then-rename so a
failed command never leaves partial files behind.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import dataset as ds
from . import diffusion as dif
from . import hvqvae as hv
from .evaluate import evaluate_model
from .fileio import MOTION_MAGIC, atomic_write_text, read_array_file, write_array_file
from .latent_tools import EditOp, LatentCodes, apply_edits
from .motion import MotionSequence, default_skeleton, forward_kinematics
from .music import resolve_music_spec


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


@click.group()
def main():
    """Music-to-dance pipeline: data, training, generation, editing, serving."""


@main.command("synth-data")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--clips", type=int, default=8, show_default=True)
@click.option("--clusters", type=int, default=8, show_default=True)
@click.option("--feature-dim", type=int, default=32, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="corpus directory")
@handle_errors
def synth_data(seed, clips, clusters, feature_dim, out):
    """Generate the synthetic click-locked corpus."""
    manifest = ds.generate_synthetic_corpus(
        seed=seed, n_clips=clips, pose_cluster_count=clusters, feature_dim=feature_dim
    )
    path = ds.save_corpus(manifest, out)
    click.echo(f"wrote {len(manifest.clips)} clips to {path}")


@main.command("train-vqvae")
@click.option("--corpus", type=click.Path(exists=True), required=True, help="manifest.json")
@click.option("--config", type=click.Path(exists=True), default=None, help="JSON train config")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True, help="checkpoint path")
@handle_errors
def train_vqvae_cmd(corpus, config, epochs, batch_size, seed, out):
    """Train the two-level autoencoder on a corpus (decouple stage)."""
    manifest = ds.load_corpus(corpus)
    cfg = hv.VQVAETrainConfig.from_dict(_load_json(config))
    if epochs is not None:
        cfg.epochs = epochs
    if batch_size is not None:
        cfg.batch_size = batch_size
    if seed is not None:
        cfg.seed = seed
    windows = ds.training_windows(manifest)
    model, enc, history = hv.train_vqvae(windows, manifest.skeleton, cfg, checkpoint_path=out)
    hv.save_vqvae_checkpoint(out, model, enc, cfg, history)
    last = history[-1]
    click.echo(
        f"trained {cfg.epochs} epochs on {len(windows)} windows; "
        f"loss {last['total']:.4f}, codebook usage {last['usage_b']}/{model.codebook_b.size} bottom, "
        f"{last['usage_t']}/{model.codebook_t.size} top -> {out}"
    )


@main.command("train-prior")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--vq", type=click.Path(exists=True), required=True, help="autoencoder checkpoint")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def train_prior_cmd(corpus, vq, config, epochs, batch_size, seed, out):
    """Train the latent diffusion prior over a frozen autoencoder."""
    manifest = ds.load_corpus(corpus)
    ckpt = hv.load_vqvae_checkpoint(vq)
    windows = ds.training_windows(manifest)
    latents, conds = dif.build_latent_corpus(ckpt.model, windows)
    cfg_dict = _load_json(config)
    cfg_dict.setdefault("denoiser", {})
    cfg_dict["denoiser"].setdefault("input_dim", latents.shape[-1])
    cfg_dict["denoiser"].setdefault("cond_dim", conds.shape[-1])
    cfg = dif.PriorTrainConfig.from_dict(cfg_dict)
    if epochs is not None:
        cfg.epochs = epochs
    if batch_size is not None:
        cfg.batch_size = batch_size
    if seed is not None:
        cfg.seed = seed
    prior = dif.train_prior(latents, conds, cfg, checkpoint_path=out)
    click.echo(
        f"trained prior {cfg.epochs} epochs on {latents.shape[0]} windows; "
        f"loss {prior.history[-1]['loss']:.4f} -> {out}"
    )


@main.command("generate")
@click.option("--vq", type=click.Path(exists=True), required=True)
@click.option("--prior", type=click.Path(exists=True), required=True)
@click.option("--music", required=True, help="feature file path or click:BPM")
@click.option("--windows", type=int, default=1, show_default=True, help="click-track windows to synthesize")
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@handle_errors
def generate_cmd(vq, prior, music, windows, steps, seed, out):
    """Sample a dance for the given music; writes motion.dmmo and codes.json."""
    ckpt = hv.load_vqvae_checkpoint(vq)
    prior_obj, _ = dif.load_prior_checkpoint(prior)
    feats = resolve_music_spec(music, prior_obj.denoiser.cfg.cond_dim, windows, dif.WINDOW_FRAMES)
    motion, top, bottom = dif.generate(feats, ckpt.model, prior_obj, num_steps=steps, seed=seed)
    out_dir = Path(out)
    write_array_file(out_dir / "motion.dmmo", MOTION_MAGIC, motion.frames.numpy(), motion.fps)
    codes = LatentCodes(top=top, bottom=bottom, fps=motion.fps, window=dif.WINDOW_FRAMES)
    atomic_write_text(out_dir / "codes.json", codes.to_json())
    click.echo(f"generated {len(motion)} frames -> {out_dir}/motion.dmmo, {out_dir}/codes.json")


@main.command("eval")
@click.option("--vq", type=click.Path(exists=True), required=True)
@click.option("--prior", type=click.Path(exists=True), required=True)
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--generations", type=int, default=40, show_default=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="report JSON path")
@handle_errors
def eval_cmd(vq, prior, corpus, generations, steps, seed, out):
    """Generate against the test split and write a metric report."""
    manifest = ds.load_corpus(corpus)
    ckpt = hv.load_vqvae_checkpoint(vq)
    prior_obj, _ = dif.load_prior_checkpoint(prior)
    report = evaluate_model(
        ckpt.model, prior_obj, manifest, n_generated=generations, num_steps=steps, seed=seed
    )
    atomic_write_text(out, report.to_json())
    click.echo(report.table())
    click.echo(f"report -> {out}")


@main.command("edit")
@click.option("--codes", "codes_path", type=click.Path(exists=True), required=True)
@click.option("--ops", "ops_path", type=click.Path(exists=True), required=True, help="JSON list of edit ops")
@click.option("--vq", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@handle_errors
def edit_cmd(codes_path, ops_path, vq, out):
    """Apply edit ops to a codes file and re-decode the motion."""
    ckpt = hv.load_vqvae_checkpoint(vq)
    codes = LatentCodes.from_json(Path(codes_path).read_text())
    ops_doc = json.loads(Path(ops_path).read_text())
    ops = [EditOp.from_dict(d) for d in ops_doc]
    edited, motion = apply_edits(codes, ops, ckpt.model)
    out_dir = Path(out)
    atomic_write_text(out_dir / "codes.json", edited.to_json())
    write_array_file(out_dir / "motion.dmmo", MOTION_MAGIC, motion.frames.numpy(), motion.fps)
    click.echo(f"applied {len(ops)} ops -> {out_dir}/codes.json, {out_dir}/motion.dmmo")


@main.command("export")
@click.option("--motion", "motion_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(["json"]), default="json", show_default=True)
@click.option("--corpus", type=click.Path(exists=True), default=None, help="manifest supplying the skeleton")
@click.option("--out", type=click.Path(), required=True)
@handle_errors
def export_cmd(motion_path, fmt, corpus, out):
    """Export world joint positions for the viewer."""
    skel = ds.load_corpus(corpus).skeleton if corpus else default_skeleton()
    data, fps = read_array_file(motion_path, MOTION_MAGIC)
    motion = MotionSequence(torch.from_numpy(data), fps=fps)
    joints = forward_kinematics(motion, skel)
    doc = {
        "v": 1,
        "fps": fps,
        "joint_count": skel.joint_count,
        "parents": list(skel.parent_index),
        "foot_joints": list(skel.foot_joint_ids),
        "positions": np.round(joints.numpy(), 6).tolist(),
    }
    atomic_write_text(out, json.dumps(doc))
    click.echo(f"exported {len(motion)} frames -> {out}")


@main.command("serve")
@click.option("--vq", type=click.Path(exists=True), default=None)
@click.option("--prior", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), default=None, help="session store (or DM_DATA_DIR)")
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None, help="editor UI assets")
@handle_errors
def serve_cmd(vq, prior, port, host, data_dir, static_dir):
    """Run the HTTP service for generation, decoding and editing."""
    import uvicorn

    from .service import create_app

    app = create_app(vq_path=vq, prior_path=prior, data_dir=data_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
