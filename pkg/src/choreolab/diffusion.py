"""Latent diffusion prior: cosine schedule, transformer denoiser, DDIM sampling.

The prior models the joint distribution of the two continuous latent streams
(bottom concat at 2w channels, top at w channels nearest-neighbor lifted to
the bottom rate) conditioned on pooled music features. The denoiser predicts
the clean sequence directly; sampling is deterministic DDIM from the clean
prediction. Latents are standardized per channel before diffusion.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from . import fileio
from .hvqvae import HVQVAE, quantize, straight_through
from .motion import MotionSequence
from .music import MusicFeatureSequence

WINDOW_FRAMES = 512
COND_POOL = 4  # motion frames per condition token
CHECKPOINT_VERSION = 1


class InvalidSteps(ValueError):
    """Bad diffusion step count."""


class StepOutOfRange(ValueError):
    """Timestep outside [0, T)."""


class InvalidStepCount(ValueError):
    """Sampling step count outside [1, T]."""


class ShapeMismatch(ValueError):
    """Denoiser input shapes disagree with its configuration."""


class DivergenceDetected(RuntimeError):
    """Training loss became non-finite."""


@dataclass(eq=False)
class NoiseSchedule:
    beta: torch.Tensor       # (T,), each in (0, 0.999]
    alpha_bar: torch.Tensor  # (T,), strictly decreasing cumulative products

    @property
    def steps(self) -> int:
        return self.beta.shape[0]


def build_cosine_schedule(steps: int = 1000, s: float = 0.008) -> NoiseSchedule:
    """Cosine noise schedule; betas clipped to (1e-8, 0.999)."""
    if steps < 2:
        raise InvalidSteps(f"need at least 2 steps, got {steps}")
    t = torch.arange(steps + 1, dtype=torch.float64)
    f = torch.cos(((t / steps + s) / (1 + s)) * math.pi / 2).pow(2)
    abar = f / f[0]
    beta = (1 - abar[1:] / abar[:-1]).clamp(1e-8, 0.999)
    alpha_bar = torch.cumprod(1 - beta, dim=0)
    return NoiseSchedule(beta=beta, alpha_bar=alpha_bar)


def q_sample(schedule: NoiseSchedule, h0: torch.Tensor, t: int, noise: torch.Tensor) -> torch.Tensor:
    """Closed-form forward diffusion: sqrt(ab_t) h0 + sqrt(1 - ab_t) noise."""
    if not 0 <= t < schedule.steps:
        raise StepOutOfRange(f"t={t} outside [0, {schedule.steps})")
    if noise.shape != h0.shape:
        raise ShapeMismatch(f"noise shape {tuple(noise.shape)} != h0 shape {tuple(h0.shape)}")
    ab = schedule.alpha_bar[t].to(h0.dtype)
    return torch.sqrt(ab) * h0 + torch.sqrt(1 - ab) * noise


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embeddings of integer timesteps, (len(t), dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float().unsqueeze(1) * freqs.unsqueeze(0)
    emb = torch.cat((torch.cos(args), torch.sin(args)), dim=1)
    if dim % 2:
        emb = torch.cat((emb, torch.zeros_like(emb[:, :1])), dim=1)
    return emb


def _positional_encoding(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe


@dataclass
class DenoiserConfig:
    layers: int = 8
    heads: int = 8
    latent_dim: int = 512
    feed_forward: int = 1024
    dropout: float = 0.1
    seq_len: int = 128
    input_dim: int = 1536   # 2w bottom concat + w lifted top
    cond_dim: int = 4800


class LatentDenoiser(nn.Module):
    """Transformer encoder predicting the clean latent sequence.

    Music conditioning is projected and added token-wise; the timestep is a
    prepended token built from a sinusoidal embedding.
    """

    def __init__(self, cfg: DenoiserConfig | None = None):
        super().__init__()
        self.cfg = cfg or DenoiserConfig()
        c = self.cfg
        self.in_proj = nn.Linear(c.input_dim, c.latent_dim)
        self.cond_proj = nn.Linear(c.cond_dim, c.latent_dim)
        self.time_mlp = nn.Sequential(
            nn.Linear(c.latent_dim, c.latent_dim),
            nn.SiLU(),
            nn.Linear(c.latent_dim, c.latent_dim),
        )
        layer = nn.TransformerEncoderLayer(
            d_model=c.latent_dim,
            nhead=c.heads,
            dim_feedforward=c.feed_forward,
            dropout=c.dropout,
            activation="gelu",
            batch_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, num_layers=c.layers)
        self.out_proj = nn.Linear(c.latent_dim, c.input_dim)
        self.register_buffer("pos", _positional_encoding(c.seq_len + 1, c.latent_dim))

    def forward(self, h_noisy: torch.Tensor, t: torch.Tensor | int, cond: torch.Tensor) -> torch.Tensor:
        squeeze = h_noisy.dim() == 2
        if squeeze:
            h_noisy = h_noisy.unsqueeze(0)
            cond = cond.unsqueeze(0)
        b, length, width = h_noisy.shape
        if width != self.cfg.input_dim or length > self.cfg.seq_len:
            raise ShapeMismatch(
                f"input ({length}, {width}) incompatible with seq_len={self.cfg.seq_len}, input_dim={self.cfg.input_dim}"
            )
        if cond.shape[1] != length or cond.shape[2] != self.cfg.cond_dim:
            raise ShapeMismatch(
                f"condition {tuple(cond.shape[1:])} incompatible with ({length}, {self.cfg.cond_dim})"
            )
        if isinstance(t, int):
            t = torch.full((b,), t, dtype=torch.long)
        x = self.in_proj(h_noisy) + self.cond_proj(cond) + self.pos[1 : length + 1]
        tok = self.time_mlp(timestep_embedding(t, self.cfg.latent_dim)) + self.pos[0]
        x = torch.cat((tok.unsqueeze(1), x), dim=1)
        out = self.out_proj(self.blocks(x)[:, 1:])
        return out.squeeze(0) if squeeze else out


def pack_latents(hb_prime: torch.Tensor, h_t: torch.Tensor) -> torch.Tensor:
    """Concat bottom-rate channels with the top stream lifted x2 by repetition.

    Inverse of unpack_latents (exact: lifting repeats, unpacking subsamples).
    """
    if hb_prime.shape[0] != 2 * h_t.shape[0]:
        raise ShapeMismatch(f"bottom length {hb_prime.shape[0]} != 2x top length {h_t.shape[0]}")
    lifted = h_t.repeat_interleave(2, dim=0)
    return torch.cat((hb_prime, lifted), dim=1)


def unpack_latents(h: torch.Tensor, bottom_width: int = 1024) -> tuple[torch.Tensor, torch.Tensor]:
    return h[:, :bottom_width], h[::2, bottom_width:]


def pool_condition(features: torch.Tensor, pool: int = COND_POOL) -> torch.Tensor:
    """Average-pool frame-rate music features to the bottom-code rate."""
    n, d = features.shape
    pad = (-n) % pool
    if pad:
        features = torch.cat((features, features[-1:].expand(pad, -1)), dim=0)
    return features.reshape(-1, pool, d).mean(dim=1)


def diffusion_training_loss(
    schedule: NoiseSchedule,
    denoiser,
    h0: torch.Tensor,
    cond: torch.Tensor,
    t: int,
    noise: torch.Tensor,
) -> torch.Tensor:
    """Mean squared error between the clean latents and the denoiser's prediction."""
    return F.mse_loss(denoiser(q_sample(schedule, h0, t, noise), t, cond), h0)


def ddim_step_sequence(total_steps: int, num_steps: int) -> list[int]:
    """Strictly increasing timestep subsequence ending at total_steps - 1."""
    if not 1 <= num_steps <= total_steps:
        raise InvalidStepCount(f"num_steps must be in [1, {total_steps}], got {num_steps}")
    if num_steps == 1:
        return [total_steps - 1]
    raw = torch.linspace(0, total_steps - 1, num_steps).round().to(torch.long)
    return sorted(set(raw.tolist()))


def ddim_sample(
    schedule: NoiseSchedule,
    denoise_fn,
    cond: torch.Tensor,
    shape: tuple[int, ...],
    num_steps: int,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Deterministic DDIM sampling from the clean-sequence predictor.

    denoise_fn(h, t, cond) must return the clean estimate for noisy h at
    integer timestep t. Starting from unit Gaussian noise, each step reuses
    the implied noise direction (eta = 0), so a fixed generator gives
    bit-identical samples.
    """
    steps = ddim_step_sequence(schedule.steps, num_steps)
    h = torch.randn(shape, generator=generator)
    for i in range(len(steps) - 1, -1, -1):
        t = steps[i]
        x0 = denoise_fn(h, t, cond)
        if i == 0:
            return x0
        ab_t = schedule.alpha_bar[t].to(h.dtype)
        ab_prev = schedule.alpha_bar[steps[i - 1]].to(h.dtype)
        eps = (h - torch.sqrt(ab_t) * x0) / torch.sqrt(1 - ab_t)
        h = torch.sqrt(ab_prev) * x0 + torch.sqrt(1 - ab_prev) * eps
    return h


@dataclass
class PriorTrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 4e-4
    seed: int = 0
    diffusion_steps: int = 1000
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)

    @staticmethod
    def from_dict(d: dict) -> "PriorTrainConfig":
        d = dict(d)
        d["denoiser"] = DenoiserConfig(**d.get("denoiser", {}))
        return PriorTrainConfig(**d)


@dataclass(eq=False)
class Prior:
    """Trained prior: denoiser plus its schedule and latent statistics."""

    denoiser: LatentDenoiser
    schedule: NoiseSchedule
    latent_mean: torch.Tensor  # (input_dim,)
    latent_std: torch.Tensor   # (input_dim,)
    config: PriorTrainConfig
    history: list[dict] = field(default_factory=list)

    def standardize(self, h: torch.Tensor) -> torch.Tensor:
        return (h - self.latent_mean) / self.latent_std

    def unstandardize(self, h: torch.Tensor) -> torch.Tensor:
        return h * self.latent_std + self.latent_mean


def build_latent_corpus(
    vq: HVQVAE,
    windows: list[tuple[torch.Tensor, torch.Tensor]],
) -> tuple[torch.Tensor, torch.Tensor]:
    """Run the frozen autoencoder over windows; returns (latents, conditions).

    latents are packed (M, 128, 1536) pre-quantization features; conditions
    are music features average-pooled to the bottom rate (M, 128, D_m).
    """
    latents, conds = [], []
    with torch.no_grad():
        for motion, music in windows:
            h_b, h_t = vq.encode(motion)
            _, e_t = quantize(h_t, vq.codebook_t)
            hb_prime = vq.form_hb_prime(h_b, straight_through(h_t, e_t))
            latents.append(pack_latents(hb_prime, h_t))
            conds.append(pool_condition(music))
    return torch.stack(latents), torch.stack(conds)


def train_prior(
    latents: torch.Tensor,
    conds: torch.Tensor,
    config: PriorTrainConfig | None = None,
    checkpoint_path: str | Path | None = None,
    resume: "Prior | None" = None,
    optimizer_state: dict | None = None,
) -> Prior:
    """Train the denoiser on a packed latent corpus with its pooled conditions.

    Batch order and noise draws are seeded per epoch, so resuming from a
    checkpoint at epoch k replays exactly what a straight run would do at k.
    """
    config = config or PriorTrainConfig()
    torch.manual_seed(config.seed)

    if resume is not None:
        prior = resume
        config = prior.config
    else:
        mean = latents.reshape(-1, latents.shape[-1]).mean(dim=0)
        std = latents.reshape(-1, latents.shape[-1]).std(dim=0).clamp_min(1e-6)
        prior = Prior(
            denoiser=LatentDenoiser(config.denoiser),
            schedule=build_cosine_schedule(config.diffusion_steps),
            latent_mean=mean,
            latent_std=std,
            config=config,
            history=[],
        )
    denoiser = prior.denoiser
    denoiser.train()
    opt = torch.optim.Adam(denoiser.parameters(), lr=config.lr)
    if optimizer_state is not None:
        opt.load_state_dict(optimizer_state)

    data = prior.standardize(latents)
    n = data.shape[0]
    start_epoch = len(prior.history)
    for epoch in range(start_epoch, start_epoch + config.epochs):
        gen = torch.Generator().manual_seed(config.seed * 1_000_003 + epoch)
        order = torch.randperm(n, generator=gen)
        total, batches = 0.0, 0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            h0 = data[idx]
            cond = conds[idx]
            t = int(torch.randint(0, prior.schedule.steps, (1,), generator=gen))
            noise = torch.randn(h0.shape, generator=gen)
            loss = diffusion_training_loss(prior.schedule, denoiser, h0, cond, t, noise)
            if not torch.isfinite(loss):
                if checkpoint_path is not None:
                    save_prior_checkpoint(checkpoint_path, prior, opt.state_dict())
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
            batches += 1
        prior.history.append({"epoch": epoch, "loss": total / batches})

    denoiser.eval()
    if checkpoint_path is not None:
        save_prior_checkpoint(checkpoint_path, prior, opt.state_dict())
    return prior


def generate(
    music: MusicFeatureSequence,
    vq: HVQVAE,
    prior: Prior,
    num_steps: int = 50,
    seed: int = 0,
) -> tuple[MotionSequence, torch.Tensor, torch.Tensor]:
    """Sample latents conditioned on music and decode them to motion.

    The music length must be a multiple of the 512-frame window; windows are
    generated independently and concatenated. Returns (motion, top indices,
    bottom indices); re-decoding the indices reproduces the motion exactly.
    """
    n = len(music)
    if n % WINDOW_FRAMES != 0:
        raise ShapeMismatch(f"music length {n} is not a multiple of {WINDOW_FRAMES}")
    gen = torch.Generator().manual_seed(seed)
    bottom_width = 2 * vq.cfg.width
    frames, tops, bottoms = [], [], []
    with torch.no_grad():
        for w in range(n // WINDOW_FRAMES):
            feats = music.features[w * WINDOW_FRAMES : (w + 1) * WINDOW_FRAMES]
            cond = pool_condition(feats)
            shape = (cond.shape[0], prior.denoiser.cfg.input_dim)
            packed = ddim_sample(prior.schedule, prior.denoiser, cond, shape, num_steps, generator=gen)
            hb_prime, h_t = unpack_latents(prior.unstandardize(packed), bottom_width)
            top_idx, e_t = quantize(h_t, vq.codebook_t)
            bottom_idx, e_b = quantize(vq.project_hb_prime(hb_prime), vq.codebook_b)
            frames.append(vq.decode(e_t, e_b))
            tops.append(top_idx)
            bottoms.append(bottom_idx)
    motion = MotionSequence(torch.cat(frames, dim=0), fps=music.fps)
    return motion, torch.cat(tops), torch.cat(bottoms)


def save_prior_checkpoint(path: str | Path, prior: Prior, optimizer_state: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "diffusion-prior",
        "config": asdict(prior.config),
        "denoiser_state": prior.denoiser.state_dict(),
        "beta": prior.schedule.beta,
        "latent_mean": prior.latent_mean,
        "latent_std": prior.latent_std,
        "history": prior.history,
        "optimizer_state": optimizer_state,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_prior_checkpoint(path: str | Path) -> tuple[Prior, dict | None]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("kind") != "diffusion-prior":
        raise fileio.FormatError(f"{path}: not a prior checkpoint")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise fileio.FormatError(f"{path}: unsupported checkpoint version")
    config = PriorTrainConfig.from_dict(payload["config"])
    denoiser = LatentDenoiser(config.denoiser)
    denoiser.load_state_dict(payload["denoiser_state"])
    denoiser.eval()
    beta = payload["beta"]
    schedule = NoiseSchedule(beta=beta, alpha_bar=torch.cumprod(1 - beta, dim=0))
    prior = Prior(
        denoiser=denoiser,
        schedule=schedule,
        latent_mean=payload["latent_mean"],
        latent_std=payload["latent_std"],
        config=config,
        history=payload["history"],
    )
    return prior, payload.get("optimizer_state")
