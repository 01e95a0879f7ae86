"""Evaluation battery: kinetic/geometric features, Fréchet distance, diversity,
beat alignment, and a physical foot-contact score.

Feature definitions are pinned here so values are deterministic:
  - kinetic: per-joint mean squared world velocity (m/s), 24 values.
  - geometric: frame-averages of the 16 relational pose predicates listed in
    GEOMETRIC_PREDICATES. Every predicate compares joints to each other, so
    all features are invariant to global translation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .motion import JOINT, MotionSequence, Skeleton, forward_kinematics


class TooFewSamples(ValueError):
    """Distribution metrics need at least two samples per side."""


class NoMusicBeats(ValueError):
    """Beat alignment is undefined without music beats."""


def _positions(motion: MotionSequence, skel: Skeleton) -> np.ndarray:
    return forward_kinematics(motion, skel).detach().cpu().numpy()


def kinetic_features(motion: MotionSequence, skel: Skeleton) -> np.ndarray:
    """Per-joint mean squared velocity over the clip, (24,) in (m/s)^2."""
    pos = _positions(motion, skel)
    vel = np.diff(pos, axis=0) * motion.fps
    return (vel ** 2).sum(axis=2).mean(axis=0)


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle in degrees between stacked vectors (N, 3)."""
    num = (a * b).sum(axis=1)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) + 1e-12
    return np.degrees(np.arccos(np.clip(num / den, -1.0, 1.0)))


def _joint_angle(pos: np.ndarray, parent: str, mid: str, child: str) -> np.ndarray:
    p, m, c = pos[:, JOINT[parent]], pos[:, JOINT[mid]], pos[:, JOINT[child]]
    return _angle(p - m, c - m)


GEOMETRIC_PREDICATES: tuple[str, ...] = (
    "left_hand_above_head",
    "right_hand_above_head",
    "left_hand_above_pelvis",
    "right_hand_above_pelvis",
    "hands_close",          # wrist distance < 0.3 m
    "arms_wide",            # wrist distance > 0.8 m
    "left_elbow_bent",      # interior angle < 120 deg
    "right_elbow_bent",
    "left_knee_bent",
    "right_knee_bent",
    "feet_apart",           # horizontal ankle distance > 0.4 m
    "feet_crossed",         # left ankle on the right side of the right ankle
    "left_foot_raised",     # left ankle 0.1 m above right
    "right_foot_raised",
    "torso_tilted",         # pelvis-to-neck axis > 20 deg from vertical
    "crouched",             # pelvis less than 0.7 m above the lower ankle
)


def geometric_features(motion: MotionSequence, skel: Skeleton) -> np.ndarray:
    """Frame-averaged truth values of the 16 pose predicates, (16,) in [0, 1]."""
    pos = _positions(motion, skel)
    z = pos[..., 2]
    lw, rw = pos[:, JOINT["l_wrist"]], pos[:, JOINT["r_wrist"]]
    la, ra = pos[:, JOINT["l_ankle"]], pos[:, JOINT["r_ankle"]]
    wrist_dist = np.linalg.norm(lw - rw, axis=1)
    ankle_xy = np.linalg.norm((la - ra)[:, :2], axis=1)
    torso = pos[:, JOINT["neck"]] - pos[:, JOINT["pelvis"]]
    up = np.zeros_like(torso)
    up[:, 2] = 1.0
    preds = np.stack(
        [
            z[:, JOINT["l_wrist"]] > z[:, JOINT["head"]],
            z[:, JOINT["r_wrist"]] > z[:, JOINT["head"]],
            z[:, JOINT["l_wrist"]] > z[:, JOINT["pelvis"]],
            z[:, JOINT["r_wrist"]] > z[:, JOINT["pelvis"]],
            wrist_dist < 0.3,
            wrist_dist > 0.8,
            _joint_angle(pos, "l_shoulder", "l_elbow", "l_wrist") < 120.0,
            _joint_angle(pos, "r_shoulder", "r_elbow", "r_wrist") < 120.0,
            _joint_angle(pos, "l_hip", "l_knee", "l_ankle") < 120.0,
            _joint_angle(pos, "r_hip", "r_knee", "r_ankle") < 120.0,
            ankle_xy > 0.4,
            la[:, 0] < ra[:, 0],
            z[:, JOINT["l_ankle"]] > z[:, JOINT["r_ankle"]] + 0.1,
            z[:, JOINT["r_ankle"]] > z[:, JOINT["l_ankle"]] + 0.1,
            _angle(torso, up) > 20.0,
            z[:, JOINT["pelvis"]] - np.minimum(z[:, JOINT["l_ankle"]], z[:, JOINT["r_ankle"]]) < 0.7,
        ],
        axis=1,
    )
    return preds.astype(np.float64).mean(axis=0)


def frechet_distance(set_a: np.ndarray, set_b: np.ndarray, jitter: float = 1e-6) -> float:
    """Fréchet distance between Gaussian fits of two feature sets (n, d)."""
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise TooFewSamples("each set needs at least 2 samples")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    eye = np.eye(a.shape[1])
    cov_a = np.cov(a, rowvar=False) + jitter * eye
    cov_b = np.cov(b, rowvar=False) + jitter * eye

    # tr sqrt(cov_a cov_b) via the symmetric form sqrt(A^1/2 B A^1/2),
    # clipping negative eigenvalues introduced by roundoff.
    vals_a, vecs_a = linalg.eigh(cov_a)
    half_a = vecs_a @ np.diag(np.sqrt(np.clip(vals_a, 0.0, None))) @ vecs_a.T
    inner = half_a @ cov_b @ half_a
    vals = linalg.eigh((inner + inner.T) / 2.0, eigvals_only=True)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()

    fid = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(fid, 0.0)


def diversity(features: np.ndarray) -> float:
    """Mean pairwise Euclidean distance over all unordered pairs."""
    feats = np.asarray(features, dtype=np.float64)
    n = feats.shape[0]
    if n < 2:
        raise TooFewSamples("diversity needs at least 2 samples")
    dists = np.linalg.norm(feats[:, None, :] - feats[None, :, :], axis=2)
    iu = np.triu_indices(n, k=1)
    return float(dists[iu].mean())


def mean_joint_speed_profile(motion: MotionSequence, skel: Skeleton) -> np.ndarray:
    """Mean over joints of world speed (m/s) per velocity sample, (N-1,)."""
    pos = _positions(motion, skel)
    vel = np.diff(pos, axis=0) * motion.fps
    return np.linalg.norm(vel, axis=2).mean(axis=1)


def motion_beats(motion: MotionSequence, skel: Skeleton, smooth_window: int = 5) -> list[float]:
    """Beat times at local minima of the smoothed mean joint speed."""
    speed = mean_joint_speed_profile(motion, skel)
    if speed.shape[0] < 3:
        return []
    pad = smooth_window // 2
    padded = np.pad(speed, pad, mode="edge")
    kernel = np.ones(smooth_window) / smooth_window
    smooth = np.convolve(padded, kernel, mode="valid")
    beats = []
    for i in range(1, len(smooth) - 1):
        if smooth[i] <= smooth[i - 1] and smooth[i] <= smooth[i + 1] and (
            smooth[i] < smooth[i - 1] or smooth[i] < smooth[i + 1]
        ):
            beats.append(i / motion.fps)
    return beats


def beat_alignment(motion_beat_times: list[float], music_beat_times: list[float], sigma: float = 0.1) -> float:
    """Mean Gaussian agreement between each music beat and its nearest motion beat."""
    if not music_beat_times:
        raise NoMusicBeats("no music beats")
    if not motion_beat_times:
        return 0.0
    mb = np.asarray(motion_beat_times, dtype=np.float64)
    score = 0.0
    for t in music_beat_times:
        d2 = float(((t - mb) ** 2).min())
        score += math.exp(-d2 / (2.0 * sigma * sigma))
    return score / len(music_beat_times)


def pfc(motion: MotionSequence, skel: Skeleton) -> float:
    """Physical foot-contact score; lower is better, 0 for a static clip.

    Horizontal center-of-mass acceleration (joint-mean proxy) is unjustified
    when no foot is planted, so each acceleration sample is scaled by the
    product of the foot speeds; accelerations and per-foot speeds are each
    normalized by their clip maxima.
    """
    pos = _positions(motion, skel)
    if pos.shape[0] < 3:
        return 0.0
    fps2 = motion.fps * motion.fps
    com = pos.mean(axis=1)
    acc = np.diff(com, n=2, axis=0) * fps2
    acc_mag = np.linalg.norm(acc[:, :2], axis=1)  # horizontal components
    acc_max = acc_mag.max()
    if acc_max <= 0:
        return 0.0

    feet = pos[:, list(skel.foot_joint_ids)]
    vel = np.linalg.norm(np.diff(feet, axis=0), axis=2) * motion.fps  # (N-1, F)
    vmax = vel.max(axis=0)
    scaled = np.where(vmax > 0, vel[: acc_mag.shape[0]] / np.where(vmax > 0, vmax, 1.0), 0.0)
    return float((acc_mag / acc_max * scaled.prod(axis=1)).mean())


REPORT_VERSION = 1


@dataclass
class MetricReport:
    fid_k: float
    fid_g: float
    div_k: float
    div_g: float
    bas: float
    pfc: float

    def to_json(self) -> str:
        return json.dumps({"v": REPORT_VERSION, **asdict(self)}, indent=2)

    @staticmethod
    def from_json(text: str) -> "MetricReport":
        data = json.loads(text)
        if data.pop("v", None) != REPORT_VERSION:
            raise ValueError("unsupported report version")
        return MetricReport(**data)

    def table(self) -> str:
        rows = [("FID_k", self.fid_k), ("FID_g", self.fid_g), ("Div_k", self.div_k),
                ("Div_g", self.div_g), ("BeatAlign", self.bas), ("PFC", self.pfc)]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:.4f}" for name, value in rows)
