"""Skeleton geometry: 6D rotations, forward kinematics, derivatives, foot contacts.

Conventions used throughout the package:
  - z is up, distances are meters, 24 joints, 60 fps.
  - A motion frame is 147 floats: root translation (3) followed by 24 blocks
    of 6 values, each block the first two columns of that joint's local
    rotation matrix.
All functions are pure and operate on torch tensors so downstream losses can
differentiate through them.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

JOINT_COUNT = 24
FRAME_WIDTH = 3 + JOINT_COUNT * 6  # 147
DEFAULT_FPS = 60


class DegenerateRotation(ValueError):
    """6D rotation whose axis vectors are near zero or near parallel."""


class NotARotation(ValueError):
    """Matrix is not orthonormal with determinant +1."""


class SequenceTooShort(ValueError):
    """Temporal operation applied to a sequence with too few frames."""


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Rigid joint tree: per-joint parent index and rest offset from parent.

    parent_index[0] is -1 (root); every other joint's parent precedes it,
    so a single forward pass over joints visits parents first.
    """

    parent_index: tuple[int, ...]
    rest_offset: torch.Tensor  # (joint_count, 3), meters
    foot_joint_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.parent_index) != JOINT_COUNT:
            raise ValueError(f"expected {JOINT_COUNT} joints, got {len(self.parent_index)}")
        if self.parent_index[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j, p in enumerate(self.parent_index[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"joint {j} has invalid parent {p} (must be < {j})")
        if tuple(self.rest_offset.shape) != (JOINT_COUNT, 3):
            raise ValueError(f"rest_offset must be ({JOINT_COUNT}, 3)")
        for f in self.foot_joint_ids:
            if not 0 <= f < JOINT_COUNT:
                raise ValueError(f"foot joint id {f} out of range")

    @property
    def joint_count(self) -> int:
        return JOINT_COUNT

    def rest_positions(self) -> torch.Tensor:
        """World positions of all joints in the rest pose, (joint_count, 3)."""
        pos = torch.zeros(JOINT_COUNT, 3, dtype=self.rest_offset.dtype)
        for j, p in enumerate(self.parent_index):
            pos[j] = self.rest_offset[j] if p < 0 else pos[p] + self.rest_offset[j]
        return pos

    def height(self) -> float:
        """Vertical extent of the rest pose."""
        z = self.rest_positions()[:, 2]
        return float(z.max() - z.min())


# Joint order of the built-in humanoid:
# 0 pelvis, 1 l_hip, 2 r_hip, 3 spine1, 4 l_knee, 5 r_knee, 6 spine2,
# 7 l_ankle, 8 r_ankle, 9 spine3, 10 l_toe, 11 r_toe, 12 neck, 13 l_collar,
# 14 r_collar, 15 head, 16 l_shoulder, 17 r_shoulder, 18 l_elbow, 19 r_elbow,
# 20 l_wrist, 21 r_wrist, 22 l_hand, 23 r_hand
_DEFAULT_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)
_DEFAULT_OFFSETS = (
    (0.00, 0.00, 0.98),   # pelvis above ground
    (0.09, 0.00, -0.06),  # l_hip
    (-0.09, 0.00, -0.06),
    (0.00, 0.00, 0.11),   # spine1
    (0.00, 0.00, -0.42),  # l_knee
    (0.00, 0.00, -0.42),
    (0.00, 0.00, 0.12),   # spine2
    (0.00, 0.00, -0.46),  # l_ankle
    (0.00, 0.00, -0.46),
    (0.00, 0.00, 0.12),   # spine3
    (0.00, 0.14, -0.04),  # l_toe
    (0.00, 0.14, -0.04),
    (0.00, 0.00, 0.10),   # neck
    (0.08, 0.00, 0.06),   # l_collar
    (-0.08, 0.00, 0.06),
    (0.00, 0.00, 0.25),   # head (crown)
    (0.10, 0.00, 0.02),   # l_shoulder
    (-0.10, 0.00, 0.02),
    (0.26, 0.00, 0.00),   # l_elbow (arms out in a T pose)
    (-0.26, 0.00, 0.00),
    (0.25, 0.00, 0.00),   # l_wrist
    (-0.25, 0.00, 0.00),
    (0.08, 0.00, 0.00),   # l_hand
    (-0.08, 0.00, 0.00),
)
_DEFAULT_FEET = (7, 8, 10, 11)  # ankles (heels) and toes

# Named indices used by metrics and tests.
JOINT = {
    "pelvis": 0, "l_hip": 1, "r_hip": 2, "spine1": 3, "l_knee": 4, "r_knee": 5,
    "spine2": 6, "l_ankle": 7, "r_ankle": 8, "spine3": 9, "l_toe": 10, "r_toe": 11,
    "neck": 12, "l_collar": 13, "r_collar": 14, "head": 15, "l_shoulder": 16,
    "r_shoulder": 17, "l_elbow": 18, "r_elbow": 19, "l_wrist": 20, "r_wrist": 21,
    "l_hand": 22, "r_hand": 23,
}


def default_skeleton(dtype: torch.dtype = torch.float32) -> Skeleton:
    """Built-in ~1.7 m humanoid standing on the z=0 ground plane."""
    return Skeleton(
        parent_index=_DEFAULT_PARENTS,
        rest_offset=torch.tensor(_DEFAULT_OFFSETS, dtype=dtype),
        foot_joint_ids=_DEFAULT_FEET,
    )


@dataclass(eq=False)
class MotionSequence:
    """N x 147 frame sequence: root translation followed by 24 6D rotation blocks."""

    frames: torch.Tensor
    fps: int = DEFAULT_FPS

    def __post_init__(self) -> None:
        if self.frames.dim() != 2 or self.frames.shape[1] != FRAME_WIDTH:
            raise ValueError(f"frames must be (N, {FRAME_WIDTH}), got {tuple(self.frames.shape)}")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fps


def identity_rot6d(dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.tensor([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], dtype=dtype)


def rest_motion(n_frames: int, dtype: torch.dtype = torch.float32) -> MotionSequence:
    """Motion holding the rest pose (identity rotations, zero translation)."""
    frames = torch.zeros(n_frames, FRAME_WIDTH, dtype=dtype)
    frames[:, 3:] = identity_rot6d(dtype).repeat(JOINT_COUNT)
    return MotionSequence(frames)


_EPS = 1e-8


def rot6d_to_matrix(r: torch.Tensor) -> torch.Tensor:
    """Gram-Schmidt a (..., 6) representation into (..., 3, 3) rotation matrices.

    The 6 values are the first two columns of the matrix; the first is
    normalized, the second orthogonalized against it, the third is their
    cross product. Scale therefore does not matter.
    """
    if r.shape[-1] != 6:
        raise ValueError(f"expected last dimension 6, got {r.shape[-1]}")
    a1, a2 = r[..., :3], r[..., 3:]
    n1 = a1.norm(dim=-1, keepdim=True)
    if bool((n1 < _EPS).any()):
        raise DegenerateRotation("first axis vector has near-zero norm")
    b1 = a1 / n1
    u2 = a2 - (b1 * a2).sum(dim=-1, keepdim=True) * b1
    n2 = u2.norm(dim=-1, keepdim=True)
    if bool((n2 < _EPS).any()):
        raise DegenerateRotation("axis vectors are parallel")
    b2 = u2 / n2
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack((b1, b2, b3), dim=-1)


def matrix_to_rot6d(m: torch.Tensor, tol: float = 1e-4) -> torch.Tensor:
    """Inverse of rot6d_to_matrix: take the first two columns of (..., 3, 3)."""
    if m.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3), got {tuple(m.shape)}")
    eye = torch.eye(3, dtype=m.dtype, device=m.device)
    err = (m.transpose(-1, -2) @ m - eye).abs().amax()
    if float(err) > tol:
        raise NotARotation(f"matrix not orthonormal within {tol}: max error {float(err):.3g}")
    if bool((torch.det(m) < 0).any()):
        raise NotARotation("matrix has determinant -1 (reflection)")
    return torch.cat((m[..., :, 0], m[..., :, 1]), dim=-1)


def forward_kinematics(motion: MotionSequence, skel: Skeleton) -> torch.Tensor:
    """World joint positions (N, 24, 3) from a motion sequence.

    Each joint sits at its parent's position plus the parent's world rotation
    applied to the joint's rest offset; the root sits at translation + its
    own rest offset. Differentiable w.r.t. all 147 inputs per frame.
    """
    frames = motion.frames
    n = frames.shape[0]
    trans = frames[:, :3]
    local = rot6d_to_matrix(frames[:, 3:].reshape(n, JOINT_COUNT, 6))
    offsets = skel.rest_offset.to(dtype=frames.dtype, device=frames.device)

    # Accumulate translation-free positions, then add the root translation
    # once at the end so global translation commutes with FK exactly.
    pos: list[torch.Tensor] = [torch.empty(0)] * JOINT_COUNT
    world: list[torch.Tensor] = [torch.empty(0)] * JOINT_COUNT
    for j, p in enumerate(skel.parent_index):
        if p < 0:
            pos[j] = offsets[j].expand(n, 3)
            world[j] = local[:, j]
        else:
            pos[j] = pos[p] + (world[p] @ offsets[j])
            world[j] = world[p] @ local[:, j]
    return torch.stack(pos, dim=1) + trans.unsqueeze(1)


def temporal_difference(series: torch.Tensor) -> torch.Tensor:
    """Forward differences along the first axis: out[i] = series[i+1] - series[i]."""
    if series.shape[0] < 2:
        raise SequenceTooShort(f"need at least 2 frames, got {series.shape[0]}")
    return series[1:] - series[:-1]


def detect_foot_contacts(
    positions: torch.Tensor,
    skel: Skeleton,
    vel_thresh: float = 0.01,
    height_thresh: float = 0.05,
) -> torch.Tensor:
    """Binary contact labels (N, n_feet) from world joint positions.

    A foot joint is in contact at frame i when its displacement to frame i+1
    is below vel_thresh (m/frame) and its height above the lowest foot height
    observed in the clip is below height_thresh. The final frame copies the
    previous frame's labels.
    """
    if positions.shape[0] < 2:
        raise SequenceTooShort("contact detection needs at least 2 frames")
    feet = positions[:, list(skel.foot_joint_ids)]
    speed = temporal_difference(feet).norm(dim=-1)  # (N-1, F), m/frame
    height = feet[..., 2] - feet[..., 2].min()
    labels = (speed < vel_thresh) & (height[:-1] < height_thresh)
    return torch.cat((labels, labels[-1:]), dim=0).to(torch.uint8)
