"""Two-level vector-quantized motion autoencoder.

The bottom path compresses motion 4x in time and quantizes local pose
content; the top path compresses a further 2x and quantizes longer-range
movement content. The bottom quantizer sees the top code through the top
decoder, so the two levels specialize instead of duplicating information.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from . import fileio
from .motion import (
    FRAME_WIDTH,
    MotionSequence,
    Skeleton,
    SequenceTooShort,
    detect_foot_contacts,
    forward_kinematics,
    temporal_difference,
)
from .music import MusicEncoder

BOTTOM_RATE = 4  # motion frames per bottom-code step
TOP_RATE = 8     # motion frames per top-code step
CHECKPOINT_VERSION = 1


class BadLength(ValueError):
    """Sequence length not divisible by the total downsample factor."""


class DimMismatch(ValueError):
    """Feature dimension does not match the codebook dimension."""


class LengthMismatch(ValueError):
    """Temporal lengths of two latent sequences are incompatible."""


class DivergenceDetected(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class LossWeights:
    """Weights of the training objective."""

    alpha: float = 0.02   # bottom commit
    beta: float = 0.02    # top commit
    gamma: float = 1.0    # velocity
    phi: float = 1.0      # acceleration
    psi: float = 1.0      # foot contact
    lambda_aux: float = 1.0
    lambda_ma: float = 0.1


@dataclass
class HVQVAEConfig:
    frame_width: int = FRAME_WIDTH
    width: int = 512          # code feature dimension (both levels)
    bottom_codebook: int = 512
    top_codebook: int = 128
    bottom_blocks: int = 2
    top_blocks: int = 1


class ResBlock1d(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv1d(channels, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv1d(channels, channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.relu(self.conv1(F.relu(x))))


class Codebook(nn.Module):
    """K prototype vectors of dimension D with nearest-neighbor lookup."""

    def __init__(self, size: int, dim: int):
        super().__init__()
        if size < 2:
            raise ValueError(f"codebook needs at least 2 entries, got {size}")
        self.entries = nn.Parameter(torch.empty(size, dim).uniform_(-1.0 / size, 1.0 / size))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


def quantize(h: torch.Tensor, codebook: Codebook) -> tuple[torch.Tensor, torch.Tensor]:
    """Nearest codebook entry per timestep; ties break to the lowest index.

    Returns (indices, vectors). vectors are exact codebook rows; gradients
    w.r.t. them reach the codebook, not h. Use straight_through() where the
    downstream graph must backpropagate into h.
    """
    if h.shape[-1] != codebook.dim:
        raise DimMismatch(f"feature dim {h.shape[-1]} != codebook dim {codebook.dim}")
    flat = h.reshape(-1, codebook.dim)
    entries = codebook.entries
    d2 = (
        flat.pow(2).sum(dim=1, keepdim=True)
        - 2.0 * flat @ entries.t()
        + entries.pow(2).sum(dim=1)
    )
    indices = torch.argmin(d2, dim=1)
    vectors = entries[indices].reshape(h.shape)
    return indices.reshape(h.shape[:-1]), vectors


def straight_through(h: torch.Tensor, vectors: torch.Tensor) -> torch.Tensor:
    """Quantized values in the forward pass, identity gradient to h backward."""
    return h + (vectors - h).detach()


def _to_conv(x: torch.Tensor) -> torch.Tensor:
    return x.transpose(1, 2)  # (B, T, C) -> (B, C, T)


def _from_conv(x: torch.Tensor) -> torch.Tensor:
    return x.transpose(1, 2)


class BottomEncoder(nn.Module):
    """Motion frames -> bottom features at 1/4 temporal rate."""

    def __init__(self, cfg: HVQVAEConfig):
        super().__init__()
        w = cfg.width
        self.net = nn.Sequential(
            nn.Conv1d(cfg.frame_width, w, kernel_size=4, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv1d(w, w, kernel_size=4, stride=2, padding=1),
            *[ResBlock1d(w) for _ in range(cfg.bottom_blocks)],
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return _from_conv(self.net(_to_conv(x)))


class TopEncoder(nn.Module):
    """Bottom features -> top features at a further 1/2 temporal rate."""

    def __init__(self, cfg: HVQVAEConfig):
        super().__init__()
        w = cfg.width
        self.net = nn.Sequential(
            nn.Conv1d(w, w, kernel_size=4, stride=2, padding=1),
            *[ResBlock1d(w) for _ in range(cfg.top_blocks)],
        )

    def forward(self, h_b: torch.Tensor) -> torch.Tensor:
        return _from_conv(self.net(_to_conv(h_b)))


def _upsample_conv(c_in: int, c_out: int) -> nn.Sequential:
    # nearest-neighbor lift + conv avoids transposed-conv checkerboard jitter
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv1d(c_in, c_out, kernel_size=3, padding=1),
    )


class TopDecoder(nn.Module):
    """Top code -> bottom rate. The first (upsampling) stage is reused when
    lifting top codes for the final decoder's channel concat."""

    def __init__(self, cfg: HVQVAEConfig):
        super().__init__()
        w = cfg.width
        self.up = _upsample_conv(w, w)
        self.res = nn.Sequential(*[ResBlock1d(w) for _ in range(cfg.top_blocks)])

    def forward(self, e_t: torch.Tensor) -> torch.Tensor:
        return _from_conv(self.res(self.up(_to_conv(e_t))))

    def upsample(self, e_t: torch.Tensor) -> torch.Tensor:
        return _from_conv(self.up(_to_conv(e_t)))


class BottomDecoder(nn.Module):
    """Concatenated (lifted top, bottom) codes -> motion frames."""

    def __init__(self, cfg: HVQVAEConfig):
        super().__init__()
        w = cfg.width
        self.net = nn.Sequential(
            *[ResBlock1d(2 * w) for _ in range(cfg.bottom_blocks)],
            _upsample_conv(2 * w, w),
            nn.ReLU(),
            _upsample_conv(w, w),
            nn.ReLU(),
            nn.Conv1d(w, cfg.frame_width, kernel_size=3, padding=1),
        )

    def forward(self, codes: torch.Tensor) -> torch.Tensor:
        return _from_conv(self.net(_to_conv(codes)))


@dataclass(eq=False)
class ReconstructionBundle:
    """Everything the losses need from one pass through the autoencoder.

    hb_prime is the raw 2w-channel concat; hb_proj is its projection to the
    codebook width (quantization and the related loss terms act on hb_proj).
    e_t / e_b are exact codebook rows; *_st are their straight-through twins.
    """

    x: torch.Tensor
    x_hat: torch.Tensor
    h_b: torch.Tensor
    h_t: torch.Tensor
    e_t_indices: torch.Tensor
    e_t: torch.Tensor
    e_t_st: torch.Tensor
    hb_prime: torch.Tensor
    hb_proj: torch.Tensor
    e_b_indices: torch.Tensor
    e_b: torch.Tensor
    e_b_st: torch.Tensor


class HVQVAE(nn.Module):
    def __init__(self, cfg: HVQVAEConfig | None = None):
        super().__init__()
        self.cfg = cfg or HVQVAEConfig()
        w = self.cfg.width
        self.encoder_b = BottomEncoder(self.cfg)
        self.encoder_t = TopEncoder(self.cfg)
        self.decoder_t = TopDecoder(self.cfg)
        self.decoder_b = BottomDecoder(self.cfg)
        self.project = nn.Conv1d(2 * w, w, kernel_size=1)
        self.codebook_b = Codebook(self.cfg.bottom_codebook, w)
        self.codebook_t = Codebook(self.cfg.top_codebook, w)

    @staticmethod
    def _batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
        return (x.unsqueeze(0), True) if x.dim() == 2 else (x, False)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Motion frames (N, 147) or (B, N, 147) -> (h_b at N/4, h_t at N/8)."""
        x, squeeze = self._batched(x)
        if x.shape[1] % TOP_RATE != 0:
            raise BadLength(f"sequence length {x.shape[1]} not divisible by {TOP_RATE}")
        h_b = self.encoder_b(x)
        h_t = self.encoder_t(h_b)
        if squeeze:
            return h_b.squeeze(0), h_t.squeeze(0)
        return h_b, h_t

    def form_hb_prime(self, h_b: torch.Tensor, e_t: torch.Tensor) -> torch.Tensor:
        """Channel concat of the decoded top code and h_b: (..., N/4, 2w)."""
        h_b, squeeze = self._batched(h_b)
        e_t, _ = self._batched(e_t)
        if h_b.shape[1] != 2 * e_t.shape[1]:
            raise LengthMismatch(f"h_b length {h_b.shape[1]} != 2x top length {e_t.shape[1]}")
        out = torch.cat((self.decoder_t(e_t), h_b), dim=2)
        return out.squeeze(0) if squeeze else out

    def project_hb_prime(self, hb_prime: torch.Tensor) -> torch.Tensor:
        hb_prime, squeeze = self._batched(hb_prime)
        if hb_prime.shape[-1] != 2 * self.cfg.width:
            raise DimMismatch(f"expected {2 * self.cfg.width} channels, got {hb_prime.shape[-1]}")
        out = _from_conv(self.project(_to_conv(hb_prime)))
        return out.squeeze(0) if squeeze else out

    def quantize_bottom(self, hb_prime: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Project the 2w-channel concat to w channels, then quantize."""
        return quantize(self.project_hb_prime(hb_prime), self.codebook_b)

    def decode(self, e_t: torch.Tensor, e_b: torch.Tensor) -> torch.Tensor:
        """Code vector sequences -> motion frames (length 8 x |e_t|)."""
        e_t, squeeze = self._batched(e_t)
        e_b, _ = self._batched(e_b)
        if e_b.shape[1] != 2 * e_t.shape[1]:
            raise LengthMismatch(f"bottom length {e_b.shape[1]} != 2x top length {e_t.shape[1]}")
        x_hat = self.decoder_b(torch.cat((self.decoder_t.upsample(e_t), e_b), dim=2))
        return x_hat.squeeze(0) if squeeze else x_hat

    def decode_indices(self, top: torch.Tensor, bottom: torch.Tensor) -> torch.Tensor:
        """Decode integer code sequences by embedding them first."""
        return self.decode(self.codebook_t.entries[top], self.codebook_b.entries[bottom])

    def forward(self, x: torch.Tensor) -> ReconstructionBundle:
        x, squeeze = self._batched(x)
        h_b, h_t = self.encode(x)
        e_t_idx, e_t = quantize(h_t, self.codebook_t)
        e_t_st = straight_through(h_t, e_t)
        hb_prime = self.form_hb_prime(h_b, e_t_st)
        hb_proj = self.project_hb_prime(hb_prime)
        e_b_idx, e_b = quantize(hb_proj, self.codebook_b)
        e_b_st = straight_through(hb_proj, e_b)
        x_hat = self.decode(e_t_st, e_b_st)
        bundle = ReconstructionBundle(
            x=x, x_hat=x_hat, h_b=h_b, h_t=h_t,
            e_t_indices=e_t_idx, e_t=e_t, e_t_st=e_t_st,
            hb_prime=hb_prime, hb_proj=hb_proj,
            e_b_indices=e_b_idx, e_b=e_b, e_b_st=e_b_st,
        )
        if squeeze:
            for name in vars(bundle):
                setattr(bundle, name, getattr(bundle, name).squeeze(0))
        return bundle

    def encode_to_indices(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Motion -> (top indices, bottom indices), no gradients."""
        with torch.no_grad():
            bundle = self.forward(x)
        return bundle.e_t_indices, bundle.e_b_indices

    def reconstruct(self, motion: MotionSequence) -> MotionSequence:
        """Encode to indices and decode the exact codebook rows (inference path)."""
        top, bottom = self.encode_to_indices(motion.frames)
        with torch.no_grad():
            frames = self.decode_indices(top, bottom)
        return MotionSequence(frames, fps=motion.fps)


def vq_loss(x: torch.Tensor, bundle: ReconstructionBundle, weights: LossWeights | None = None) -> torch.Tensor:
    """Reconstruction plus codebook/commit terms with explicit gradient blocking.

    The two undamped terms move only the codebooks (their feature argument is
    detached); the alpha/beta commit terms move only the encoder side; the
    reconstruction term reaches the encoders through the straight-through path.
    All squared norms are mean-reduced over every axis.
    """
    w = weights or LossWeights()
    return (
        F.mse_loss(bundle.e_b, bundle.hb_proj.detach())
        + w.alpha * F.mse_loss(bundle.hb_proj, bundle.e_b.detach())
        + F.mse_loss(bundle.e_t, bundle.h_t.detach())
        + w.beta * F.mse_loss(bundle.h_t, bundle.e_t.detach())
        + F.mse_loss(bundle.x_hat, x)
    )


@dataclass
class AuxLossTerms:
    pos: torch.Tensor
    vel: torch.Tensor
    acc: torch.Tensor
    contact: torch.Tensor
    total: torch.Tensor


def aux_loss(
    x: MotionSequence,
    x_hat: MotionSequence,
    contacts: torch.Tensor,
    skel: Skeleton,
    weights: LossWeights | None = None,
) -> AuxLossTerms:
    """Physical-plausibility terms: positions, velocities, accelerations, contact.

    contacts are binary labels for the ground-truth clip; the contact term
    penalizes predicted foot displacement on frames labeled in contact.
    """
    if len(x) < 3:
        raise SequenceTooShort("aux loss needs at least 3 frames")
    w = weights or LossWeights()
    fk_x = forward_kinematics(x, skel)
    fk_hat = forward_kinematics(x_hat, skel)
    pos = F.mse_loss(fk_hat, fk_x)
    vel = F.mse_loss(temporal_difference(x_hat.frames), temporal_difference(x.frames))
    acc = F.mse_loss(
        temporal_difference(temporal_difference(x_hat.frames)),
        temporal_difference(temporal_difference(x.frames)),
    )
    feet = fk_hat[:, list(skel.foot_joint_ids)]
    disp = temporal_difference(feet)
    mask = contacts[:-1].to(disp.dtype).unsqueeze(-1)
    contact = (disp * mask).pow(2).mean()
    total = pos + w.gamma * vel + w.phi * acc + w.psi * contact
    return AuxLossTerms(pos=pos, vel=vel, acc=acc, contact=contact, total=total)


def modality_alignment_loss(e_t: torch.Tensor, encoded_music: torch.Tensor) -> torch.Tensor:
    """Mean squared distance between top codes and encoded music features."""
    if e_t.shape != encoded_music.shape:
        raise LengthMismatch(f"shape {tuple(e_t.shape)} != {tuple(encoded_music.shape)}")
    return F.mse_loss(e_t, encoded_music)


def total_loss(
    vq: torch.Tensor,
    aux_total: torch.Tensor,
    ma: torch.Tensor,
    weights: LossWeights | None = None,
) -> torch.Tensor:
    w = weights or LossWeights()
    return vq + w.lambda_aux * aux_total + w.lambda_ma * ma


def codebook_perplexity(counts: torch.Tensor) -> float:
    """exp(entropy) of a code-usage histogram; K when uniform, 1 when collapsed."""
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts.to(torch.float64) / total
    nz = p[p > 0]
    return float(torch.exp(-(nz * nz.log()).sum()))


@dataclass
class VQVAETrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-4
    seed: int = 0
    dead_code_epochs: int = 5
    model: HVQVAEConfig = field(default_factory=HVQVAEConfig)
    weights: LossWeights = field(default_factory=LossWeights)

    @staticmethod
    def from_dict(d: dict) -> "VQVAETrainConfig":
        d = dict(d)
        d["model"] = HVQVAEConfig(**d.get("model", {}))
        d["weights"] = LossWeights(**d.get("weights", {}))
        return VQVAETrainConfig(**d)


def _reseed_dead_codes(
    codebook: Codebook,
    stale: torch.Tensor,
    source_rows: torch.Tensor,
    generator: torch.Generator,
) -> None:
    dead = torch.nonzero(stale, as_tuple=False).flatten()
    if dead.numel() == 0 or source_rows.shape[0] == 0:
        return
    pick = torch.randint(0, source_rows.shape[0], (dead.numel(),), generator=generator)
    with torch.no_grad():
        noise = 0.01 * torch.randn(dead.numel(), codebook.dim, generator=generator)
        codebook.entries[dead] = source_rows[pick] + noise


def train_vqvae(
    windows: list[tuple[torch.Tensor, torch.Tensor]],
    skel: Skeleton,
    config: VQVAETrainConfig | None = None,
    checkpoint_path: str | Path | None = None,
) -> tuple[HVQVAE, MusicEncoder, list[dict]]:
    """Train the autoencoder (and the music encoder) on paired windows.

    windows: list of (motion (512, 147), music (512, D_m)) tensor pairs.
    Returns (model, music_encoder, per-epoch history). Raises
    DivergenceDetected on a non-finite loss, writing a checkpoint first when
    checkpoint_path is given.
    """
    if not windows:
        raise ValueError("no training windows")
    config = config or VQVAETrainConfig()
    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)

    feature_dim = windows[0][1].shape[1]
    model = HVQVAE(config.model)
    music_encoder = MusicEncoder(feature_dim, out_dim=config.model.width)
    opt = torch.optim.Adam(
        list(model.parameters()) + list(music_encoder.parameters()), lr=config.lr
    )

    motions = torch.stack([m for m, _ in windows])
    musics = torch.stack([s for _, s in windows])
    contacts = torch.stack([
        detect_foot_contacts(forward_kinematics(MotionSequence(m), skel), skel)
        for m, _ in windows
    ])

    # Seed codebooks from real encoder outputs so early training does not
    # collapse onto a handful of near-zero entries.
    with torch.no_grad():
        h_b, h_t = model.encode(motions)
        _init_codebook_from_rows(model.codebook_t, h_t.reshape(-1, h_t.shape[-1]), gen)
        hb_proj = model.project_hb_prime(
            model.form_hb_prime(h_b, straight_through(h_t, quantize(h_t, model.codebook_t)[1]))
        )
        _init_codebook_from_rows(model.codebook_b, hb_proj.reshape(-1, hb_proj.shape[-1]), gen)

    n = motions.shape[0]
    stale_b = torch.zeros(model.codebook_b.size, dtype=torch.long)
    stale_t = torch.zeros(model.codebook_t.size, dtype=torch.long)
    history: list[dict] = []

    for epoch in range(config.epochs):
        order = torch.randperm(n, generator=gen)
        counts_b = torch.zeros(model.codebook_b.size, dtype=torch.long)
        counts_t = torch.zeros(model.codebook_t.size, dtype=torch.long)
        sums = {"total": 0.0, "vq": 0.0, "aux": 0.0, "ma": 0.0}
        batches = 0
        last_h_t = last_hb_proj = None

        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_x = motions[idx]
            bundle = model(batch_x)
            vq = vq_loss(batch_x, bundle, config.weights)

            aux_totals = []
            for k, i in enumerate(idx.tolist()):
                terms = aux_loss(
                    MotionSequence(batch_x[k]),
                    MotionSequence(bundle.x_hat[k]),
                    contacts[i],
                    skel,
                    config.weights,
                )
                aux_totals.append(terms.total)
            aux_total = torch.stack(aux_totals).mean()

            encoded = music_encoder(musics[idx])
            ma = modality_alignment_loss(bundle.e_t_st, encoded)
            loss = total_loss(vq, aux_total, ma, config.weights)

            if not torch.isfinite(loss):
                if checkpoint_path is not None:
                    save_vqvae_checkpoint(checkpoint_path, model, music_encoder, config, history)
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")

            opt.zero_grad()
            loss.backward()
            opt.step()

            counts_b += torch.bincount(bundle.e_b_indices.flatten(), minlength=model.codebook_b.size)
            counts_t += torch.bincount(bundle.e_t_indices.flatten(), minlength=model.codebook_t.size)
            last_h_t = bundle.h_t.reshape(-1, bundle.h_t.shape[-1]).detach()
            last_hb_proj = bundle.hb_proj.reshape(-1, bundle.hb_proj.shape[-1]).detach()
            sums["total"] += float(loss.detach())
            sums["vq"] += float(vq.detach())
            sums["aux"] += float(aux_total.detach())
            sums["ma"] += float(ma.detach())
            batches += 1

        stale_b = torch.where(counts_b > 0, torch.zeros_like(stale_b), stale_b + 1)
        stale_t = torch.where(counts_t > 0, torch.zeros_like(stale_t), stale_t + 1)
        if last_hb_proj is not None:
            _reseed_dead_codes(model.codebook_b, stale_b >= config.dead_code_epochs, last_hb_proj, gen)
            _reseed_dead_codes(model.codebook_t, stale_t >= config.dead_code_epochs, last_h_t, gen)
        stale_b[stale_b >= config.dead_code_epochs] = 0
        stale_t[stale_t >= config.dead_code_epochs] = 0

        history.append({
            "epoch": epoch,
            "total": sums["total"] / batches,
            "vq": sums["vq"] / batches,
            "aux": sums["aux"] / batches,
            "ma": sums["ma"] / batches,
            "perplexity_b": codebook_perplexity(counts_b),
            "perplexity_t": codebook_perplexity(counts_t),
            "usage_b": int((counts_b > 0).sum()),
            "usage_t": int((counts_t > 0).sum()),
        })

    return model, music_encoder, history


def _init_codebook_from_rows(codebook: Codebook, rows: torch.Tensor, gen: torch.Generator) -> None:
    pick = torch.randint(0, rows.shape[0], (codebook.size,), generator=gen)
    with torch.no_grad():
        noise = 0.01 * torch.randn(codebook.size, codebook.dim, generator=gen)
        codebook.entries.copy_(rows[pick] + noise)


def mpjpe(a: MotionSequence, b: MotionSequence, skel: Skeleton) -> float:
    """Mean per-joint position error (meters) between two motions."""
    pa = forward_kinematics(a, skel)
    pb = forward_kinematics(b, skel)
    return float((pa - pb).norm(dim=-1).mean())


def measure_receptive_field(model: HVQVAE, level: str, units: int = 32, trials: int = 3) -> tuple[int, int]:
    """Empirical decoder receptive field of one code step, in output frames.

    Decodes random code sequences, perturbs the code at the center position,
    and reports (lo, hi) frame offsets relative to the edited step's first
    output frame such that all changes fall in [first+lo, first+hi).
    """
    if level not in ("top", "bottom"):
        raise ValueError("level must be 'top' or 'bottom'")
    rate = TOP_RATE if level == "top" else BOTTOM_RATE
    length = units if level == "bottom" else units // 2
    center = length // 2
    anchor = center * rate
    lo, hi = 0, rate
    gen = torch.Generator().manual_seed(1234)
    with torch.no_grad():
        for _ in range(trials):
            e_t = torch.randn(units // 2, model.cfg.width, generator=gen)
            e_b = torch.randn(units, model.cfg.width, generator=gen)
            base = model.decode(e_t, e_b)
            if level == "top":
                e_t2 = e_t.clone()
                e_t2[center] = torch.randn(model.cfg.width, generator=gen)
                changed = model.decode(e_t2, e_b)
            else:
                e_b2 = e_b.clone()
                e_b2[center] = torch.randn(model.cfg.width, generator=gen)
                changed = model.decode(e_t, e_b2)
            diff = (base - changed).abs().amax(dim=1)
            frames = torch.nonzero(diff > 1e-9, as_tuple=False).flatten()
            if frames.numel():
                lo = min(lo, int(frames.min()) - anchor)
                hi = max(hi, int(frames.max()) + 1 - anchor)
    return lo, hi


def save_vqvae_checkpoint(
    path: str | Path,
    model: HVQVAE,
    music_encoder: MusicEncoder,
    config: VQVAETrainConfig,
    history: list[dict],
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "hvqvae",
        "config": asdict(config),
        "music_feature_dim": music_encoder.feature_dim,
        "model_state": model.state_dict(),
        "music_encoder_state": music_encoder.state_dict(),
        "history": history,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


@dataclass(eq=False)
class VQVAECheckpoint:
    model: HVQVAE
    music_encoder: MusicEncoder
    config: VQVAETrainConfig
    history: list[dict]


def load_vqvae_checkpoint(path: str | Path) -> VQVAECheckpoint:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("kind") != "hvqvae":
        raise fileio.FormatError(f"{path}: not an autoencoder checkpoint")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise fileio.FormatError(f"{path}: unsupported checkpoint version")
    config = VQVAETrainConfig.from_dict(payload["config"])
    model = HVQVAE(config.model)
    model.load_state_dict(payload["model_state"])
    model.eval()
    music_encoder = MusicEncoder(payload["music_feature_dim"], out_dim=config.model.width)
    music_encoder.load_state_dict(payload["music_encoder_state"])
    music_encoder.eval()
    return VQVAECheckpoint(model=model, music_encoder=music_encoder, config=config, history=payload["history"])
