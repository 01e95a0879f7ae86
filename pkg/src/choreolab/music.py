"""Music conditioning: feature files, synthetic click tracks, beat extraction.

Real per-frame music features are loaded from disk (any upstream audio model
can produce them); the synthetic click generator provides an unambiguous beat
signal at desk scale. Both go through the same binary format so they are
interchangeable everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .fileio import MUSIC_MAGIC, read_array_file, write_array_file

DEFAULT_FEATURE_DIM = 4800
TOP_RATE_FACTOR = 8  # motion frames per top-code step
MIN_BPM, MAX_BPM = 30, 300


class InvalidTempo(ValueError):
    """bpm outside the supported range."""


@dataclass(eq=False)
class MusicFeatureSequence:
    """Per-frame music features at the motion frame rate."""

    features: torch.Tensor  # (N_m, D_m) float32
    fps: int = 60

    def __post_init__(self) -> None:
        if self.features.dim() != 2:
            raise ValueError(f"features must be 2-D, got shape {tuple(self.features.shape)}")
        if not bool(torch.isfinite(self.features).all()):
            raise ValueError("features contain non-finite values")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def save_music_features(path: str | Path, m: MusicFeatureSequence) -> None:
    write_array_file(path, MUSIC_MAGIC, m.features.cpu().numpy(), m.fps)


def load_music_features(path: str | Path) -> MusicFeatureSequence:
    data, fps = read_array_file(path, MUSIC_MAGIC)
    return MusicFeatureSequence(torch.from_numpy(data), fps=fps)


def synth_click_features(
    bpm: float,
    duration_s: float,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    fps: int = 60,
    seed: int = 0,
) -> tuple[MusicFeatureSequence, list[float]]:
    """Click-track features: a decaying impulse group at each beat plus noise.

    Beats are spaced 60/bpm seconds apart starting at t=0. A block of leading
    channels carries the impulse envelope, one channel encodes the tempo, and
    the rest hold low-amplitude noise so magnitudes are not degenerate.
    """
    if not MIN_BPM <= bpm <= MAX_BPM:
        raise InvalidTempo(f"bpm must be in [{MIN_BPM}, {MAX_BPM}], got {bpm}")
    if duration_s <= 0:
        raise InvalidTempo(f"duration must be positive, got {duration_s}")
    n = int(round(duration_s * fps))
    beats = [k * 60.0 / bpm for k in range(int(np.ceil(duration_s * bpm / 60.0)))]
    beats = [t for t in beats if t < duration_s]

    group = max(1, min(feature_dim, max(4, feature_dim // 16)))
    feats = np.zeros((n, feature_dim), dtype=np.float32)
    decay = np.exp(-0.5 * np.arange(n, dtype=np.float32))
    for t in beats:
        f = int(round(t * fps))
        if f < n:
            env = decay[: n - f]
            feats[f:, :group] = np.maximum(feats[f:, :group], env[:, None])
    if group < feature_dim:
        feats[:, group] = bpm / MAX_BPM
    if group + 1 < feature_dim:
        rng = np.random.default_rng(seed)
        feats[:, group + 1 :] = 0.01 * rng.standard_normal((n, feature_dim - group - 1)).astype(np.float32)
    return MusicFeatureSequence(torch.from_numpy(feats), fps=fps), beats


def extract_beats(
    m: MusicFeatureSequence,
    rel_thresh: float = 0.3,
    min_gap_frames: int = 10,
) -> list[float]:
    """Beat times from local maxima of an onset envelope.

    The envelope is the half-wave-rectified first difference of the per-frame
    L2 feature magnitude (silence assumed before frame 0). Peaks must exceed
    rel_thresh times the envelope maximum and be min_gap_frames apart.
    """
    mag = m.features.norm(dim=1).cpu().numpy()
    n = mag.shape[0]
    if n < 2:
        return []
    env = np.empty(n, dtype=np.float64)
    env[0] = max(float(mag[0]), 0.0)
    env[1:] = np.clip(np.diff(mag), 0.0, None)
    peak = env.max()
    if peak <= 0:
        return []
    thresh = rel_thresh * peak

    beats: list[int] = []
    for i in range(n):
        if env[i] <= thresh:
            continue
        left_ok = i == 0 or env[i] >= env[i - 1]
        right_ok = i == n - 1 or env[i] >= env[i + 1]
        if not (left_ok and right_ok):
            continue
        if beats and i - beats[-1] < min_gap_frames:
            continue
        beats.append(i)
    return [i / m.fps for i in beats]


class MusicEncoder(nn.Module):
    """Learnable map from raw music features to the top-code rate and width.

    A strided temporal convolution pools by TOP_RATE_FACTOR, then a linear
    layer maps to the top-code feature width.
    """

    def __init__(self, feature_dim: int, out_dim: int = 512, pool: int = TOP_RATE_FACTOR):
        super().__init__()
        self.feature_dim = feature_dim
        self.out_dim = out_dim
        self.pool = pool
        self.conv = nn.Conv1d(feature_dim, out_dim, kernel_size=pool, stride=pool)
        self.proj = nn.Linear(out_dim, out_dim)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """(N_m, D_m) or (B, N_m, D_m) -> (..., ceil(N_m/pool), out_dim)."""
        squeeze = features.dim() == 2
        if squeeze:
            features = features.unsqueeze(0)
        n = features.shape[1]
        pad = (-n) % self.pool
        if pad:  # edge-replicate to a multiple of the pooling factor
            features = torch.cat((features, features[:, -1:].expand(-1, pad, -1)), dim=1)
        x = self.conv(features.transpose(1, 2)).transpose(1, 2)
        out = self.proj(x)
        return out.squeeze(0) if squeeze else out


def encode_music(m: MusicFeatureSequence, encoder: MusicEncoder) -> torch.Tensor:
    """Run the encoder over a feature sequence; returns (ceil(N_m/8), 512)."""
    return encoder(m.features)


def resolve_music_spec(
    spec: str,
    feature_dim: int,
    windows: int = 1,
    window_frames: int = 512,
) -> MusicFeatureSequence:
    """Turn a CLI/API music argument into features trimmed to whole windows.

    spec is either "click:BPM" (synthesized at feature_dim) or a feature-file
    path, which is truncated to the largest multiple of window_frames.
    """
    if spec.startswith("click:"):
        bpm = float(spec.split(":", 1)[1])
        frames = window_frames * windows
        music, _ = synth_click_features(bpm, frames / 60.0, feature_dim=feature_dim)
        return music
    music = load_music_features(spec)
    usable = (len(music) // window_frames) * window_frames
    if usable == 0:
        raise ValueError(f"music file has {len(music)} frames; need at least {window_frames}")
    return MusicFeatureSequence(music.features[:usable], fps=music.fps)
