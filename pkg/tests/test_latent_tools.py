"""Latent-code editing: op semantics, locality, transfer, fix/vary probes."""

import pytest
import torch

from choreolab.hvqvae import HVQVAE, HVQVAEConfig, measure_receptive_field
from choreolab.latent_tools import (
    EditOp,
    IndexOutOfRange,
    LatentCodes,
    RatioViolation,
    apply_edits,
    encode_to_codes,
    fix_bottom_vary_top,
    fix_top_replace_bottom,
    pose_dispersion,
    transfer_codes,
)
from choreolab.motion import MotionSequence, default_skeleton, rest_motion

SMALL = HVQVAEConfig(width=32, bottom_codebook=16, top_codebook=8, bottom_blocks=1, top_blocks=1)


@pytest.fixture()
def model():
    torch.manual_seed(0)
    return HVQVAE(SMALL)


def make_codes(units=16, seed=0, top_size=8, bottom_size=16):
    gen = torch.Generator().manual_seed(seed)
    return LatentCodes(
        top=torch.randint(0, top_size, (units,), generator=gen),
        bottom=torch.randint(0, bottom_size, (2 * units,), generator=gen),
    )


class TestLatentCodes:
    def test_ratio_enforced(self):
        with pytest.raises(RatioViolation):
            LatentCodes(top=torch.zeros(4, dtype=torch.long), bottom=torch.zeros(7, dtype=torch.long))

    def test_json_round_trip(self):
        codes = make_codes()
        back = LatentCodes.from_json(codes.to_json())
        assert torch.equal(back.top, codes.top)
        assert torch.equal(back.bottom, codes.bottom)
        assert back.fps == codes.fps and back.window == codes.window

    def test_edit_op_schema(self):
        op = EditOp.from_dict(
            {"kind": "replace", "target": {"level": "top", "range": [3, 4]}, "payload": [5]}
        )
        assert op.kind == "replace" and op.level == "top" and op.range == (3, 4) and op.payload == [5]
        assert op.to_dict() == {"kind": "replace", "target": {"level": "top", "range": [3, 4]}, "payload": [5]}
        with pytest.raises(ValueError):
            EditOp.from_dict({"kind": "explode"})


class TestApplyEdits:
    def test_empty_ops_identity(self, model):
        codes = make_codes()
        out, motion = apply_edits(codes, [], model)
        assert torch.equal(out.top, codes.top) and torch.equal(out.bottom, codes.bottom)
        _, motion2 = apply_edits(codes, [], model)
        assert torch.equal(motion.frames, motion2.frames)

    def test_inputs_never_mutated(self, model):
        codes = make_codes()
        top_before = codes.top.clone()
        bottom_before = codes.bottom.clone()
        apply_edits(codes, [EditOp("replace", (0, 1), "top", [3])], model)
        apply_edits(codes, [EditOp("delete", (2, 4))], model)
        assert torch.equal(codes.top, top_before)
        assert torch.equal(codes.bottom, bottom_before)

    def test_delete_then_reinsert_restores(self, model):
        codes = make_codes()
        k = 5
        unit = {"top": [int(codes.top[k])], "bottom": codes.bottom[2 * k : 2 * k + 2].tolist()}
        deleted, _ = apply_edits(codes, [EditOp("delete", (k, k + 1))], model)
        assert deleted.units == codes.units - 1
        restored, _ = apply_edits(deleted, [EditOp("insert", (k, k), payload=unit)], model)
        assert torch.equal(restored.top, codes.top)
        assert torch.equal(restored.bottom, codes.bottom)

    def test_replace_unit_is_local(self, model):
        lo_t, hi_t = measure_receptive_field(model, "top")
        lo_b, hi_b = measure_receptive_field(model, "bottom")
        lo = min(lo_t, lo_b)
        hi = max(hi_t, hi_b)
        codes = make_codes(units=16, seed=3)
        k = 8
        ops = [
            EditOp("replace", (k, k + 1), "top", [(int(codes.top[k]) + 1) % SMALL.top_codebook]),
            EditOp("replace", (2 * k, 2 * k + 2), "bottom",
                   [(int(codes.bottom[2 * k]) + 1) % SMALL.bottom_codebook,
                    (int(codes.bottom[2 * k + 1]) + 1) % SMALL.bottom_codebook]),
        ]
        _, base = apply_edits(codes, [], model)
        _, edited = apply_edits(codes, ops, model)
        diff = (base.frames - edited.frames).abs().amax(dim=1)
        anchor = 8 * k
        outside = torch.cat((diff[: max(anchor + lo, 0)], diff[anchor + hi :]))
        assert float(outside.max()) < 1e-6

    def test_reorder_units(self, model):
        codes = make_codes()
        out, _ = apply_edits(codes, [EditOp("reorder", (2, 5), payload=[2, 0, 1])], model)
        assert torch.equal(out.top[2:5], codes.top[torch.tensor([4, 2, 3])])
        pairs = codes.bottom.reshape(-1, 2)
        assert torch.equal(out.bottom.reshape(-1, 2)[2:5], pairs[torch.tensor([4, 2, 3])])
        assert out.units == codes.units

    def test_swap_levels(self, model):
        codes = make_codes(seed=1)
        donor = make_codes(seed=2)
        out, _ = apply_edits(codes, [EditOp("swap_top", payload=donor.top.tolist())], model)
        assert torch.equal(out.top, donor.top)
        assert torch.equal(out.bottom, codes.bottom)

    def test_ratio_preserved_after_op_chain(self, model):
        codes = make_codes()
        ops = [
            EditOp("delete", (0, 2)),
            EditOp("insert", (1, 1), payload={"top": [1, 2], "bottom": [0, 1, 2, 3]}),
            EditOp("reorder", (0, 4), payload=[3, 1, 0, 2]),
            EditOp("replace", (0, 1), "top", [0]),
        ]
        out, motion = apply_edits(codes, ops, model)
        assert out.bottom.shape[0] == 2 * out.top.shape[0]
        assert len(motion) == 8 * out.units

    def test_error_paths(self, model):
        codes = make_codes()
        with pytest.raises(IndexOutOfRange):
            apply_edits(codes, [EditOp("delete", (10, 99))], model)
        with pytest.raises(IndexOutOfRange):
            apply_edits(codes, [EditOp("replace", (0, 1), "top", [SMALL.top_codebook])], model)
        with pytest.raises(RatioViolation):
            apply_edits(codes, [EditOp("replace", (0, 2), "top", [1])], model)
        with pytest.raises(RatioViolation):
            apply_edits(codes, [EditOp("insert", (0, 0), payload={"top": [1], "bottom": [1]})], model)
        with pytest.raises(IndexOutOfRange):
            apply_edits(codes, [EditOp("reorder", (0, 2), payload=[1, 2])], model)


class TestTransfer:
    def test_donor_equals_source_identity(self):
        codes = make_codes(seed=5)
        out = transfer_codes(codes, codes, "top")
        assert torch.equal(out.top, codes.top) and torch.equal(out.bottom, codes.bottom)

    def test_top_then_bottom_gives_donor(self):
        source = make_codes(seed=6)
        donor = make_codes(seed=7)
        out = transfer_codes(transfer_codes(source, donor, "top"), donor, "bottom")
        assert torch.equal(out.top, donor.top)
        assert torch.equal(out.bottom, donor.bottom)

    def test_level_validation(self):
        source = make_codes()
        with pytest.raises(ValueError):
            transfer_codes(source, source, "middle")

    def test_length_mismatch(self):
        with pytest.raises(RatioViolation):
            transfer_codes(make_codes(units=8), make_codes(units=9), "top")


class TestProbes:
    def test_fix_bottom_identical_tops_zero_dispersion(self, model):
        skel = default_skeleton()
        top = torch.randint(0, SMALL.top_codebook, (8,))
        motions, disp = fix_bottom_vary_top(3, [top, top.clone(), top.clone()], model, skel)
        assert len(motions) == 3
        assert disp == 0.0

    def test_fix_bottom_varied_tops_positive_dispersion(self, model):
        skel = default_skeleton()
        gen = torch.Generator().manual_seed(4)
        tops = [torch.randint(0, SMALL.top_codebook, (8,), generator=gen) for _ in range(4)]
        motions, disp = fix_bottom_vary_top(0, tops, model, skel)
        assert len(motions) == 4
        assert disp >= 0.0

    def test_fix_bottom_needs_two_samples(self, model):
        skel = default_skeleton()
        with pytest.raises(ValueError):
            fix_bottom_vary_top(0, [torch.zeros(4, dtype=torch.long)], model, skel)

    def test_fix_top_replace_bottom_keeps_top(self, model):
        torch.manual_seed(2)
        motion = MotionSequence(rest_motion(64).frames + 0.05 * torch.randn(64, 147))
        codes, modified = fix_top_replace_bottom(motion, 5, model)
        recoded = encode_to_codes(model, motion)
        assert torch.equal(codes.top, recoded.top)  # edit touches only bottom
        assert len(modified) == len(motion)

    def test_noop_edit_equals_reconstruction(self, model):
        torch.manual_seed(3)
        motion = MotionSequence(rest_motion(64).frames + 0.05 * torch.randn(64, 147))
        codes = encode_to_codes(model, motion)
        _, redecoded = apply_edits(codes, [], model)
        recon = model.reconstruct(motion)
        assert torch.equal(redecoded.frames, recon.frames)

    def test_pose_dispersion_zero_for_identical(self):
        skel = default_skeleton()
        m = rest_motion(8)
        assert pose_dispersion([m, MotionSequence(m.frames.clone())], skel) == 0.0
