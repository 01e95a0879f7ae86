"""Corpus management: synthetic clips, windowing, manifest round trips.

The synthetic corpus gives the two code levels something distinct to learn at
desk scale: each clip hops between a small set of shared joint-angle pose
clusters (a pose vocabulary for the bottom level) with transitions
phase-locked to a click track of a per-clip tempo (movement timing for the
top level). Music and ground-truth beats are generated alongside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .fileio import MOTION_MAGIC, atomic_write_text, read_array_file, write_array_file
from .motion import (
    FRAME_WIDTH,
    JOINT_COUNT,
    MotionSequence,
    Skeleton,
    default_skeleton,
)
from .music import MusicFeatureSequence, load_music_features, save_music_features, synth_click_features

MANIFEST_VERSION = 1
WINDOW_FRAMES = 512
WINDOW_STRIDE = 40


class InvariantViolation(ValueError):
    """A clip fails a structural invariant; the message names the clip."""


class ClipTooShort(ValueError):
    """Clip shorter than one window."""


@dataclass
class WindowSpec:
    length: int = WINDOW_FRAMES
    stride: int = WINDOW_STRIDE

    def __post_init__(self) -> None:
        if self.length % 8 != 0:
            raise ValueError(f"window length {self.length} must be divisible by 8")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass(eq=False)
class MotionClip:
    id: str
    motion: MotionSequence
    music: MusicFeatureSequence
    beats: list[float]
    split: str = "train"

    def validate(self) -> None:
        if len(self.motion) != len(self.music):
            raise InvariantViolation(
                f"clip {self.id!r}: motion has {len(self.motion)} frames, music has {len(self.music)}"
            )
        if self.motion.fps != 60 or self.music.fps != 60:
            raise InvariantViolation(f"clip {self.id!r}: fps must be 60")
        if self.split not in ("train", "test"):
            raise InvariantViolation(f"clip {self.id!r}: bad split {self.split!r}")
        duration = self.motion.duration
        last = -1.0
        for t in self.beats:
            if t <= last or t > duration:
                raise InvariantViolation(f"clip {self.id!r}: beat times must be increasing and within the clip")
            last = t


@dataclass(eq=False)
class DatasetManifest:
    skeleton: Skeleton
    clips: list[MotionClip] = field(default_factory=list)

    def split(self, which: str) -> list[MotionClip]:
        return [c for c in self.clips if c.split == which]


def window_starts(n_frames: int, spec: WindowSpec) -> list[int]:
    if n_frames < spec.length:
        raise ClipTooShort(f"clip has {n_frames} frames, need {spec.length}")
    return list(range(0, n_frames - spec.length + 1, spec.stride))


def window_iterator(clip: MotionClip, spec: WindowSpec | None = None):
    """Yield (motion window, music window) tensor pairs of exactly spec.length frames."""
    spec = spec or WindowSpec()
    for start in window_starts(len(clip.motion), spec):
        yield (
            clip.motion.frames[start : start + spec.length],
            clip.music.features[start : start + spec.length],
        )


def training_windows(manifest: DatasetManifest, spec: WindowSpec | None = None, split: str = "train"):
    """All windows of all clips in a split, as a flat list."""
    out = []
    for clip in manifest.split(split):
        out.extend(window_iterator(clip, spec))
    return out


def _axis_angle_rot6d(axis: np.ndarray, angle: float) -> np.ndarray:
    """First two columns of the Rodrigues rotation for one joint."""
    axis = axis / (np.linalg.norm(axis) + 1e-12)
    kx, ky, kz = axis
    k_cross = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    rot = np.eye(3) + np.sin(angle) * k_cross + (1 - np.cos(angle)) * (k_cross @ k_cross)
    return np.concatenate((rot[:, 0], rot[:, 1]))


def _pose_clusters(rng: np.random.Generator, count: int, angle_lo: float, angle_hi: float) -> np.ndarray:
    """Distinct joint-angle centroids (count, 24, 6); root varies in yaw only."""
    centroids = np.zeros((count, JOINT_COUNT, 6))
    for c in range(count):
        yaw = rng.uniform(-0.6, 0.6)
        centroids[c, 0] = _axis_angle_rot6d(np.array([0.0, 0.0, 1.0]), yaw)
        for j in range(1, JOINT_COUNT):
            axis = rng.standard_normal(3)
            angle = rng.uniform(angle_lo, angle_hi) * rng.choice((-1.0, 1.0))
            centroids[c, j] = _axis_angle_rot6d(axis, angle)
    return centroids


def min_centroid_distance(centroids: np.ndarray) -> float:
    flat = centroids.reshape(centroids.shape[0], -1)
    dists = np.linalg.norm(flat[:, None] - flat[None, :], axis=2)
    return float(dists[np.triu_indices(len(flat), k=1)].min())


INTRA_CLUSTER_NOISE = 0.02  # per-component jitter applied to each pose visit


def generate_synthetic_corpus(
    seed: int,
    n_clips: int = 8,
    pose_cluster_count: int = 8,
    tempo_set: tuple[int, ...] = (60, 90, 120, 180),
    feature_dim: int = 32,
    min_windows: int = 2,
    max_windows: int = 4,
    test_fraction: float = 0.25,
) -> DatasetManifest:
    """Deterministic desk-scale corpus of pose-hopping, click-locked clips."""
    for bpm in tempo_set:
        if 3600 % bpm != 0:
            raise ValueError(f"tempo {bpm} does not give an integer frame period at 60 fps")
    rng = np.random.default_rng([seed, 0])

    noise_scale = INTRA_CLUSTER_NOISE * np.sqrt(JOINT_COUNT * 6)
    for attempt in range(20):
        centroids = _pose_clusters(rng, pose_cluster_count, 0.25, 0.55)
        if min_centroid_distance(centroids) >= 5.0 * noise_scale:
            break
    else:
        raise RuntimeError("could not draw separated pose clusters")

    clips: list[MotionClip] = []
    for i in range(n_clips):
        crng = np.random.default_rng([seed, 1, i])
        bpm = int(crng.choice(tempo_set))
        period = 3600 // bpm
        n_windows = int(crng.integers(min_windows, max_windows + 1))
        n = WINDOW_FRAMES + WINDOW_STRIDE * (n_windows - 1)
        n_beats = n // period + 2

        order = [int(crng.integers(pose_cluster_count))]
        for _ in range(n_beats - 1):
            step = int(crng.integers(1, pose_cluster_count))
            order.append((order[-1] + step) % pose_cluster_count)
        targets = centroids[order] + INTRA_CLUSTER_NOISE * crng.standard_normal((n_beats, JOINT_COUNT, 6))
        roots = np.zeros((n_beats, 3))
        roots[:, :2] = 0.1 * crng.standard_normal((n_beats, 2))

        frames = np.zeros((n, FRAME_WIDTH), dtype=np.float64)
        t_idx = np.arange(n)
        k = t_idx // period
        u = (t_idx % period) / period
        s = (1.0 - np.cos(np.pi * u)) / 2.0
        frames[:, :3] = (1 - s[:, None]) * roots[k] + s[:, None] * roots[k + 1]
        pose = (1 - s[:, None, None]) * targets[k] + s[:, None, None] * targets[k + 1]
        frames[:, 3:] = pose.reshape(n, -1)

        music, beats = synth_click_features(
            bpm, n / 60.0, feature_dim=feature_dim, seed=int(crng.integers(2**31))
        )
        clips.append(MotionClip(
            id=f"clip{i:03d}_bpm{bpm}",
            motion=MotionSequence(torch.from_numpy(frames.astype(np.float32))),
            music=music,
            beats=beats,
        ))

    test_count = max(1, round(test_fraction * n_clips)) if n_clips > 1 else 0
    test_ids = set(rng.choice(n_clips, size=test_count, replace=False).tolist())
    for i, clip in enumerate(clips):
        clip.split = "test" if i in test_ids else "train"
        clip.validate()
    return DatasetManifest(skeleton=default_skeleton(), clips=clips)


def _skeleton_to_dict(skel: Skeleton) -> dict:
    return {
        "parent_index": list(skel.parent_index),
        "rest_offset": skel.rest_offset.tolist(),
        "foot_joint_ids": list(skel.foot_joint_ids),
    }


def _skeleton_from_dict(d: dict) -> Skeleton:
    return Skeleton(
        parent_index=tuple(d["parent_index"]),
        rest_offset=torch.tensor(d["rest_offset"], dtype=torch.float32),
        foot_joint_ids=tuple(d["foot_joint_ids"]),
    )


def save_corpus(manifest: DatasetManifest, out_dir: str | Path) -> Path:
    """Write manifest.json plus binary motion/music payloads under out_dir."""
    out_dir = Path(out_dir)
    entries = []
    for clip in manifest.clips:
        clip.validate()
        motion_path = f"motion/{clip.id}.dmmo"
        music_path = f"music/{clip.id}.dmft"
        write_array_file(out_dir / motion_path, MOTION_MAGIC, clip.motion.frames.numpy(), clip.motion.fps)
        save_music_features(out_dir / music_path, clip.music)
        entries.append({
            "id": clip.id,
            "motion_path": motion_path,
            "music_path": music_path,
            "beats": clip.beats,
            "split": clip.split,
        })
    doc = {
        "version": MANIFEST_VERSION,
        "skeleton": _skeleton_to_dict(manifest.skeleton),
        "clips": entries,
    }
    path = out_dir / "manifest.json"
    atomic_write_text(path, json.dumps(doc, indent=2))
    return path


def load_corpus(manifest_path: str | Path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    if doc.get("version") != MANIFEST_VERSION:
        raise InvariantViolation(f"unsupported manifest version {doc.get('version')}")
    base = manifest_path.parent
    skeleton = _skeleton_from_dict(doc["skeleton"])
    clips = []
    for entry in doc["clips"]:
        motion_file = base / entry["motion_path"]
        music_file = base / entry["music_path"]
        for p in (motion_file, music_file):
            if not p.exists():
                raise FileNotFoundError(f"clip {entry['id']!r}: missing file {p}")
        data, fps = read_array_file(motion_file, MOTION_MAGIC)
        clip = MotionClip(
            id=entry["id"],
            motion=MotionSequence(torch.from_numpy(data), fps=fps),
            music=load_music_features(music_file),
            beats=list(entry["beats"]),
            split=entry["split"],
        )
        clip.validate()
        clips.append(clip)
    return DatasetManifest(skeleton=skeleton, clips=clips)


def convert_external_clip(
    clip_id: str,
    motion_frames: np.ndarray,
    music_features: np.ndarray,
    beats: list[float],
    split: str = "train",
    center_root: bool = False,
) -> MotionClip:
    """Map externally sourced arrays into a corpus clip.

    motion_frames must already be in the package's 147-wide layout (root
    translation + 24 6D blocks) at 60 fps. center_root subtracts the first
    frame's horizontal root position from the whole clip. This converter is a
    thin adapter for external datasets and ships untested against any of them.
    """
    frames = torch.as_tensor(np.asarray(motion_frames, dtype=np.float32))
    if center_root:
        frames = frames.clone()
        frames[:, 0] -= frames[0, 0].clone()
        frames[:, 1] -= frames[0, 1].clone()
    clip = MotionClip(
        id=clip_id,
        motion=MotionSequence(frames),
        music=MusicFeatureSequence(torch.as_tensor(np.asarray(music_features, dtype=np.float32))),
        beats=list(beats),
        split=split,
    )
    clip.validate()
    return clip
