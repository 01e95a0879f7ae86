"""Latent-code editing: unit edits, level transfer, fix/vary probes.

Code sequences come in a 1:2 top:bottom ratio. The atomic edit granule is the
"unit": one top step with its two aligned bottom steps (8 motion frames).
Insert, delete and reorder act on units so the ratio is preserved; replace
and the level swaps act on one level and leave lengths unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from .hvqvae import HVQVAE, TOP_RATE
from .motion import MotionSequence, Skeleton, forward_kinematics

CODES_VERSION = 1


class IndexOutOfRange(ValueError):
    """Edit target or payload index outside the valid range."""


class RatioViolation(ValueError):
    """Edit would break the 1:2 top:bottom length ratio."""


@dataclass(frozen=True, eq=False)
class LatentCodes:
    """Discrete code index sequences for one motion clip."""

    top: torch.Tensor     # (T,) long
    bottom: torch.Tensor  # (2T,) long
    fps: int = 60
    window: int = 512

    def __post_init__(self) -> None:
        if self.bottom.shape[0] != 2 * self.top.shape[0]:
            raise RatioViolation(
                f"bottom length {self.bottom.shape[0]} != 2x top length {self.top.shape[0]}"
            )

    @property
    def units(self) -> int:
        return self.top.shape[0]

    def to_json(self) -> str:
        return json.dumps({
            "version": CODES_VERSION,
            "top": self.top.tolist(),
            "bottom": self.bottom.tolist(),
            "fps": self.fps,
            "window": self.window,
        })

    @staticmethod
    def from_json(text: str) -> "LatentCodes":
        data = json.loads(text)
        return LatentCodes(
            top=torch.tensor(data["top"], dtype=torch.long),
            bottom=torch.tensor(data["bottom"], dtype=torch.long),
            fps=data.get("fps", 60),
            window=data.get("window", 512),
        )


EDIT_KINDS = ("insert", "delete", "replace", "reorder", "swap_top", "swap_bottom")


@dataclass(frozen=True)
class EditOp:
    """One edit step.

    replace: level in {top, bottom}; range and payload indexed at that level.
    insert/delete/reorder: unit-aligned; range in unit coordinates. insert
    payload is {"top": [...], "bottom": [...]} with two bottom indices per
    top index; reorder payload is a permutation of the unit range.
    swap_top/swap_bottom: payload replaces the whole level (donor codes).

    Wire format: {"kind": ..., "target": {"level": ..., "range": [a, b]},
    "payload": ...}; target.level is null for unit-aligned kinds.
    """

    kind: str
    range: tuple[int, int] = (0, 0)
    level: str | None = None
    payload: object = None

    @staticmethod
    def from_dict(d: dict) -> "EditOp":
        kind = d.get("kind")
        if kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {kind!r}")
        target = d.get("target") or {}
        if not isinstance(target, dict):
            raise ValueError(f"target must be an object, got {target!r}")
        rng = target.get("range", (0, 0))
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            raise ValueError(f"target.range must be a [start, stop] pair, got {rng!r}")
        return EditOp(
            kind=kind,
            range=(int(rng[0]), int(rng[1])),
            level=target.get("level"),
            payload=d.get("payload"),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target": {"level": self.level, "range": list(self.range)},
            "payload": self.payload,
        }


def _check_range(a: int, b: int, length: int, what: str) -> None:
    if not (0 <= a <= b <= length):
        raise IndexOutOfRange(f"{what} range [{a}, {b}) invalid for length {length}")


def _check_payload_values(values: list[int], size: int, what: str) -> None:
    for v in values:
        if not 0 <= int(v) < size:
            raise IndexOutOfRange(f"{what} code index {v} outside [0, {size})")


def _apply_one(codes: LatentCodes, op: EditOp, top_size: int, bottom_size: int) -> LatentCodes:
    top = codes.top
    bottom = codes.bottom
    a, b = op.range

    if op.kind == "replace":
        if op.level not in ("top", "bottom"):
            raise ValueError(f"replace needs level top|bottom, got {op.level!r}")
        seq = top if op.level == "top" else bottom
        size = top_size if op.level == "top" else bottom_size
        _check_range(a, b, seq.shape[0], op.level)
        payload = list(op.payload or [])
        if len(payload) != b - a:
            raise RatioViolation(f"replace payload length {len(payload)} != range length {b - a}")
        _check_payload_values(payload, size, op.level)
        seq = seq.clone()
        seq[a:b] = torch.tensor(payload, dtype=torch.long)
        return LatentCodes(
            top=seq if op.level == "top" else top,
            bottom=seq if op.level == "bottom" else bottom,
            fps=codes.fps, window=codes.window,
        )

    if op.kind == "delete":
        _check_range(a, b, codes.units, "unit")
        return LatentCodes(
            top=torch.cat((top[:a], top[b:])),
            bottom=torch.cat((bottom[: 2 * a], bottom[2 * b :])),
            fps=codes.fps, window=codes.window,
        )

    if op.kind == "insert":
        if not 0 <= a <= codes.units:
            raise IndexOutOfRange(f"insert position {a} invalid for {codes.units} units")
        payload = op.payload or {}
        if not isinstance(payload, dict) or "top" not in payload or "bottom" not in payload:
            raise RatioViolation('insert payload must be {"top": [...], "bottom": [...]}')
        new_top = [int(v) for v in payload["top"]]
        new_bottom = [int(v) for v in payload["bottom"]]
        if len(new_bottom) != 2 * len(new_top):
            raise RatioViolation(
                f"insert payload has {len(new_top)} top and {len(new_bottom)} bottom indices (need 1:2)"
            )
        _check_payload_values(new_top, top_size, "top")
        _check_payload_values(new_bottom, bottom_size, "bottom")
        return LatentCodes(
            top=torch.cat((top[:a], torch.tensor(new_top, dtype=torch.long), top[a:])),
            bottom=torch.cat((bottom[: 2 * a], torch.tensor(new_bottom, dtype=torch.long), bottom[2 * a :])),
            fps=codes.fps, window=codes.window,
        )

    if op.kind == "reorder":
        _check_range(a, b, codes.units, "unit")
        perm = [int(v) for v in (op.payload or [])]
        if sorted(perm) != list(range(b - a)):
            raise IndexOutOfRange(f"reorder payload must be a permutation of 0..{b - a - 1}")
        top = top.clone()
        bottom = bottom.clone()
        top[a:b] = top[a:b][perm]
        pairs = bottom[2 * a : 2 * b].reshape(-1, 2)
        bottom[2 * a : 2 * b] = pairs[perm].reshape(-1)
        return LatentCodes(top=top, bottom=bottom, fps=codes.fps, window=codes.window)

    if op.kind in ("swap_top", "swap_bottom"):
        level = "top" if op.kind == "swap_top" else "bottom"
        seq = top if level == "top" else bottom
        size = top_size if level == "top" else bottom_size
        payload = [int(v) for v in (op.payload or [])]
        if len(payload) != seq.shape[0]:
            raise RatioViolation(f"{op.kind} payload length {len(payload)} != sequence length {seq.shape[0]}")
        _check_payload_values(payload, size, level)
        new = torch.tensor(payload, dtype=torch.long)
        return LatentCodes(
            top=new if level == "top" else top,
            bottom=new if level == "bottom" else bottom,
            fps=codes.fps, window=codes.window,
        )

    raise ValueError(f"unknown edit kind {op.kind!r}")


def apply_edits(codes: LatentCodes, ops: list[EditOp], vq: HVQVAE) -> tuple[LatentCodes, MotionSequence]:
    """Apply ops in order and re-decode; inputs are never mutated."""
    out = codes
    for op in ops:
        out = _apply_one(out, op, vq.codebook_t.size, vq.codebook_b.size)
    with torch.no_grad():
        frames = vq.decode_indices(out.top, out.bottom)
    return out, MotionSequence(frames, fps=codes.fps)


def transfer_codes(source: LatentCodes, donor: LatentCodes, level: str) -> LatentCodes:
    """Replace one whole level of source with the donor's."""
    if level not in ("top", "bottom"):
        raise ValueError(f"level must be top|bottom, got {level!r}")
    donor_seq = donor.top if level == "top" else donor.bottom
    source_seq = source.top if level == "top" else source.bottom
    if donor_seq.shape[0] != source_seq.shape[0]:
        raise RatioViolation(
            f"donor {level} length {donor_seq.shape[0]} != source length {source_seq.shape[0]}"
        )
    return LatentCodes(
        top=donor.top.clone() if level == "top" else source.top,
        bottom=donor.bottom.clone() if level == "bottom" else source.bottom,
        fps=source.fps, window=source.window,
    )


def encode_to_codes(vq: HVQVAE, motion: MotionSequence) -> LatentCodes:
    top, bottom = vq.encode_to_indices(motion.frames)
    return LatentCodes(top=top, bottom=bottom, fps=motion.fps, window=len(motion))


def pose_dispersion(motions: list[MotionSequence], skel: Skeleton) -> float:
    """Mean per-frame joint-position variance across a set of equal-length clips."""
    stacked = torch.stack([forward_kinematics(m, skel) for m in motions])  # (S, N, J, 3)
    return float(stacked.var(dim=0, unbiased=False).mean())


def fix_bottom_vary_top(
    bottom_index: int,
    top_samples: list[torch.Tensor],
    vq: HVQVAE,
    skel: Skeleton,
) -> tuple[list[MotionSequence], float]:
    """Decode each top sample over one repeated bottom index; score the spread.

    Returns the decoded motions and their pose dispersion. A small dispersion
    relative to varying the bottom index means the bottom level pins the pose.
    """
    if len(top_samples) < 2:
        raise ValueError("need at least 2 top samples")
    if not 0 <= bottom_index < vq.codebook_b.size:
        raise IndexOutOfRange(f"bottom index {bottom_index} outside [0, {vq.codebook_b.size})")
    motions = []
    with torch.no_grad():
        for top in top_samples:
            bottom = torch.full((2 * top.shape[0],), bottom_index, dtype=torch.long)
            motions.append(MotionSequence(vq.decode_indices(top.to(torch.long), bottom)))
    return motions, pose_dispersion(motions, skel)


def fix_top_replace_bottom(
    motion: MotionSequence,
    bottom_index: int,
    vq: HVQVAE,
) -> tuple[LatentCodes, MotionSequence]:
    """Encode, overwrite every bottom index with one value, re-decode.

    Returns the original codes and the constrained motion; the top code is
    untouched, so movement trends should survive the pose clamp.
    """
    if not 0 <= bottom_index < vq.codebook_b.size:
        raise IndexOutOfRange(f"bottom index {bottom_index} outside [0, {vq.codebook_b.size})")
    codes = encode_to_codes(vq, motion)
    clamped = torch.full_like(codes.bottom, bottom_index)
    with torch.no_grad():
        frames = vq.decode_indices(codes.top, clamped)
    return codes, MotionSequence(frames, fps=motion.fps)


def mean_joint_speed(motion: MotionSequence, skel: Skeleton) -> float:
    """Clip-average of the mean joint speed (m/s)."""
    pos = forward_kinematics(motion, skel)
    vel = (pos[1:] - pos[:-1]) * motion.fps
    return float(vel.norm(dim=-1).mean())


def per_unit_velocity_trend(motion: MotionSequence, skel: Skeleton) -> np.ndarray:
    """Mean world-velocity direction of all joints per top-code unit, (units, 3)."""
    pos = forward_kinematics(motion, skel).detach().cpu().numpy()
    vel = np.diff(pos, axis=0)
    units = pos.shape[0] // TOP_RATE
    trends = np.zeros((units, 3))
    for u in range(units):
        seg = vel[u * TOP_RATE : min((u + 1) * TOP_RATE, vel.shape[0])]
        trends[u] = seg.mean(axis=(0, 1))
    return trends
