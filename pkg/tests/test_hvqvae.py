"""Autoencoder tests: quantizer contracts, rate bookkeeping, losses, training.

Nearest-neighbor expectations come from a brute-force loop, gradient-routing
expectations from autograd/finite differences, loss fixtures from hand
arithmetic over explicitly constructed clips.
"""

import pytest
import torch

from choreolab.hvqvae import (
    BadLength,
    Codebook,
    DimMismatch,
    DivergenceDetected,
    HVQVAE,
    HVQVAEConfig,
    LengthMismatch,
    LossWeights,
    VQVAETrainConfig,
    aux_loss,
    load_vqvae_checkpoint,
    measure_receptive_field,
    modality_alignment_loss,
    quantize,
    save_vqvae_checkpoint,
    straight_through,
    total_loss,
    train_vqvae,
    vq_loss,
)
from choreolab.motion import MotionSequence, default_skeleton, forward_kinematics, rest_motion
from choreolab.music import MusicEncoder

SMALL = HVQVAEConfig(width=32, bottom_codebook=16, top_codebook=8, bottom_blocks=1, top_blocks=1)


def small_model(seed=0, cfg=SMALL):
    torch.manual_seed(seed)
    return HVQVAE(cfg)


class TestQuantize:
    def test_nearest_neighbor_basic(self):
        cb = Codebook(2, 2)
        with torch.no_grad():
            cb.entries.copy_(torch.tensor([[0.0, 0.0], [1.0, 1.0]]))
        idx, vec = quantize(torch.tensor([[0.9, 1.2]]), cb)
        assert idx.tolist() == [1]
        assert torch.equal(vec, torch.tensor([[1.0, 1.0]]))

    def test_exact_entry_idempotent(self):
        torch.manual_seed(0)
        cb = Codebook(8, 4)
        idx, vec = quantize(cb.entries[3].unsqueeze(0), cb)
        assert idx.tolist() == [3]
        assert torch.equal(vec[0], cb.entries[3])
        idx2, vec2 = quantize(vec, cb)
        assert torch.equal(idx, idx2) and torch.equal(vec, vec2)

    def test_tie_breaks_to_lowest_index(self):
        cb = Codebook(2, 2)
        with torch.no_grad():
            cb.entries.copy_(torch.tensor([[0.0, 0.0], [1.0, 1.0]], dtype=torch.float64).float())
        idx, _ = quantize(torch.tensor([[0.5, 0.5]]), cb)
        assert idx.tolist() == [0]

    def test_matches_brute_force_on_1000_random_inputs(self):
        torch.manual_seed(7)
        cb = Codebook(32, 8)
        inputs = torch.randn(1000, 8)
        idx, vec = quantize(inputs, cb)
        entries = cb.entries.detach()
        for i in range(1000):
            d = ((inputs[i] - entries) ** 2).sum(dim=1)
            best = int(torch.argmin(d))
            assert int(idx[i]) == best, f"row {i}"
        assert torch.equal(vec, entries[idx])

    def test_dim_mismatch(self):
        cb = Codebook(4, 8)
        with pytest.raises(DimMismatch):
            quantize(torch.randn(3, 5), cb)

    def test_quantization_idempotence_batched(self):
        torch.manual_seed(3)
        cb = Codebook(16, 6)
        _, vec = quantize(torch.randn(4, 10, 6), cb)
        idx2, vec2 = quantize(vec, cb)
        assert torch.equal(vec, vec2)
        assert torch.equal(cb.entries[idx2], vec)


class TestGradientRouting:
    def test_codebook_terms_send_no_gradient_to_encoder(self):
        torch.manual_seed(1)
        cb = Codebook(8, 4)
        h = torch.randn(6, 4, requires_grad=True)
        _, vec = quantize(h, cb)
        codebook_term = torch.nn.functional.mse_loss(vec, h.detach())
        grad_h = torch.autograd.grad(codebook_term, h, allow_unused=True)[0]
        assert grad_h is None or float(grad_h.abs().max()) < 1e-8

    def test_encoder_gradient_invariant_to_codebook_perturbation(self):
        torch.manual_seed(2)
        h0 = torch.randn(6, 4)
        grads = []
        for perturb in (0.0, 1e-3):
            cb = Codebook(8, 4)
            with torch.no_grad():
                torch.manual_seed(5)
                cb.entries.copy_(torch.randn(8, 4) + perturb)
            h = h0.clone().requires_grad_(True)
            _, vec = quantize(h, cb)
            loss = torch.nn.functional.mse_loss(vec, h.detach())
            g = torch.autograd.grad(loss, h, allow_unused=True)[0]
            grads.append(torch.zeros_like(h0) if g is None else g)
        assert float((grads[0] - grads[1]).abs().max()) < 1e-8

    def test_commit_term_sends_no_gradient_to_codebook(self):
        torch.manual_seed(3)
        cb = Codebook(8, 4)
        h = torch.randn(6, 4, requires_grad=True)
        _, vec = quantize(h, cb)
        commit = torch.nn.functional.mse_loss(h, vec.detach())
        grad_cb = torch.autograd.grad(commit, cb.entries, allow_unused=True)[0]
        assert grad_cb is None or float(grad_cb.abs().max()) < 1e-8

    def test_codebook_gradient_matches_finite_differences(self):
        # sanity that the codebook path is live: FD of the codebook term
        # w.r.t. the selected entry matches autograd
        cb = Codebook(4, 3)
        with torch.no_grad():
            cb.entries.copy_(torch.tensor([[0.0, 0, 0], [5.0, 5, 5], [9.0, 9, 9], [-7.0, 7, 7]]).float())
        h = torch.tensor([[0.2, -0.1, 0.05]])
        _, vec = quantize(h, cb)
        loss = torch.nn.functional.mse_loss(vec, h.detach())
        grad = torch.autograd.grad(loss, cb.entries)[0]
        eps = 1e-4
        for col in range(3):
            with torch.no_grad():
                cb.entries[0, col] += eps
                up = torch.nn.functional.mse_loss(quantize(h, cb)[1], h)
                cb.entries[0, col] -= 2 * eps
                down = torch.nn.functional.mse_loss(quantize(h, cb)[1], h)
                cb.entries[0, col] += eps
            fd = float((up - down) / (2 * eps))
            assert abs(float(grad[0, col]) - fd) < 1e-3

    def test_straight_through_passes_values_and_gradients(self):
        h = torch.randn(5, 3, requires_grad=True)
        vec = torch.randn(5, 3)
        st = straight_through(h, vec)
        assert torch.allclose(st, vec, atol=1e-7)
        grad = torch.autograd.grad(st.sum(), h)[0]
        assert torch.equal(grad, torch.ones_like(h))


class TestRateBookkeeping:
    def test_default_shapes_at_512(self):
        model = HVQVAE()  # full-size config
        x = torch.randn(512, 147) * 0.1
        bundle = model(x)
        assert bundle.h_b.shape == (128, 512)
        assert bundle.h_t.shape == (64, 512)
        assert bundle.e_b.shape == (128, 512)
        assert bundle.e_t.shape == (64, 512)
        assert bundle.e_b_indices.shape == (128,)
        assert bundle.e_t_indices.shape == (64,)
        assert bundle.hb_prime.shape == (128, 1024)
        assert bundle.x_hat.shape == (512, 147)

    def test_minimal_window(self):
        model = small_model()
        h_b, h_t = model.encode(torch.randn(8, 147))
        assert h_b.shape[0] == 2 and h_t.shape[0] == 1

    def test_bad_length(self):
        model = small_model()
        with pytest.raises(BadLength):
            model.encode(torch.randn(511, 147))

    @pytest.mark.parametrize("n", [8, 16, 64, 128])
    def test_rate_invariant_and_decode_restores_length(self, n):
        model = small_model()
        bundle = model(torch.randn(n, 147))
        assert bundle.e_b_indices.shape[0] == n // 4
        assert bundle.e_t_indices.shape[0] == n // 8
        assert bundle.x_hat.shape == (n, 147)

    def test_decode_length_mismatch(self):
        model = small_model()
        with pytest.raises(LengthMismatch):
            model.decode(torch.randn(8, 32), torch.randn(15, 32))


class TestFormHbPrime:
    def test_zero_top_decoder_keeps_h_b_in_last_channels(self):
        model = small_model()
        with torch.no_grad():
            for p in model.decoder_t.parameters():
                p.zero_()
        h_b = torch.randn(16, 32)
        e_t = torch.zeros(8, 32)
        out = model.form_hb_prime(h_b, e_t)
        assert out.shape == (16, 64)
        assert bool((out[:, :32] == 0).all())
        assert torch.equal(out[:, 32:], h_b)

    def test_full_size_shape(self):
        model = HVQVAE()
        out = model.form_hb_prime(torch.randn(128, 512), torch.randn(64, 512))
        assert out.shape == (128, 1024)

    def test_length_mismatch(self):
        model = small_model()
        with pytest.raises(LengthMismatch):
            model.form_hb_prime(torch.randn(16, 32), torch.randn(9, 32))


class TestQuantizeBottom:
    def test_projection_selecting_last_channels_recovers_h_b_entries(self):
        model = small_model()
        w = model.cfg.width
        with torch.no_grad():
            model.project.weight.zero_()
            model.project.bias.zero_()
            for k in range(w):
                model.project.weight[k, w + k, 0] = 1.0
        torch.manual_seed(4)
        h_b = torch.randn(16, w)
        with torch.no_grad():
            model.codebook_b.entries.copy_(h_b)
        hb_prime = torch.cat((torch.randn(16, w), h_b), dim=1)
        idx, vec = model.quantize_bottom(hb_prime)
        assert idx.tolist() == list(range(16))
        assert torch.allclose(vec, h_b)

    def test_zero_input_zero_entry(self):
        model = small_model()
        with torch.no_grad():
            model.project.bias.zero_()
            model.codebook_b.entries.add_(1.0)  # push all entries away from 0
            model.codebook_b.entries[7].zero_()
        idx, _ = model.quantize_bottom(torch.zeros(10, 64))
        assert idx.tolist() == [7] * 10

    def test_temporal_length_preserved(self):
        model = small_model()
        idx, vec = model.quantize_bottom(torch.randn(12, 64))
        assert idx.shape == (12,) and vec.shape == (12, 32)


class TestDecode:
    def test_deterministic(self):
        model = small_model()
        e_t, e_b = torch.randn(8, 32), torch.randn(16, 32)
        with torch.no_grad():
            a = model.decode(e_t, e_b)
            b = model.decode(e_t, e_b)
        assert torch.equal(a, b)

    def test_bottom_edit_is_local(self):
        model = small_model()
        lo, hi = measure_receptive_field(model, "bottom")
        assert hi - lo <= 64  # finite, conv-sized window
        torch.manual_seed(9)
        e_t, e_b = torch.randn(16, 32), torch.randn(32, 32)
        k = 9
        e_b2 = e_b.clone()
        e_b2[k] = torch.randn(32)
        with torch.no_grad():
            diff = (model.decode(e_t, e_b) - model.decode(e_t, e_b2)).abs().amax(dim=1)
        anchor = 4 * k
        outside = torch.cat((diff[: max(anchor + lo, 0)], diff[anchor + hi :]))
        assert float(outside.max()) < 1e-6

    def test_top_edit_is_local(self):
        model = small_model()
        lo, hi = measure_receptive_field(model, "top")
        torch.manual_seed(10)
        e_t, e_b = torch.randn(16, 32), torch.randn(32, 32)
        k = 11
        e_t2 = e_t.clone()
        e_t2[k] = torch.randn(32)
        with torch.no_grad():
            diff = (model.decode(e_t, e_b) - model.decode(e_t2, e_b)).abs().amax(dim=1)
        anchor = 8 * k
        outside = torch.cat((diff[: max(anchor + lo, 0)], diff[anchor + hi :]))
        assert float(outside.max()) < 1e-6


def perfect_bundle(n=16):
    """Bundle where the autoencoder is exact and codes equal features."""
    from choreolab.hvqvae import ReconstructionBundle

    torch.manual_seed(0)
    x = torch.randn(n, 147)
    h_t = torch.randn(n // 8, 32)
    hb_proj = torch.randn(n // 4, 32)
    return ReconstructionBundle(
        x=x, x_hat=x.clone(),
        h_b=torch.randn(n // 4, 32), h_t=h_t,
        e_t_indices=torch.zeros(n // 8, dtype=torch.long), e_t=h_t.clone(), e_t_st=h_t.clone(),
        hb_prime=torch.randn(n // 4, 64), hb_proj=hb_proj,
        e_b_indices=torch.zeros(n // 4, dtype=torch.long), e_b=hb_proj.clone(), e_b_st=hb_proj.clone(),
    )


class TestVqLoss:
    def test_perfect_autoencoder_zero(self):
        bundle = perfect_bundle()
        assert float(vq_loss(bundle.x, bundle)) == 0.0

    def test_top_offset_gives_one_plus_beta_term(self):
        bundle = perfect_bundle()
        delta = 0.25 * torch.randn_like(bundle.h_t)
        bundle.h_t = bundle.e_t + delta
        w = LossWeights()
        expected = (1 + w.beta) * float(delta.pow(2).mean())
        assert float(vq_loss(bundle.x, bundle, w)) == pytest.approx(expected, rel=1e-6)

    def test_nonnegative_on_random_bundles(self):
        model = small_model()
        for seed in range(3):
            torch.manual_seed(seed)
            bundle = model(torch.randn(16, 147))
            assert float(vq_loss(bundle.x, bundle).detach()) >= 0.0


class TestAuxLoss:
    def test_identical_motions_zero(self):
        skel = default_skeleton()
        x = rest_motion(10)
        contacts = torch.ones(10, 4, dtype=torch.uint8)
        terms = aux_loss(x, MotionSequence(x.frames.clone()), contacts, skel)
        assert float(terms.total) == 0.0

    def test_constant_root_shift(self):
        skel = default_skeleton()
        x = rest_motion(10)
        shift = torch.tensor([0.3, -0.4, 0.12])
        x_hat = MotionSequence(x.frames.clone())
        x_hat.frames[:, :3] += shift
        contacts = torch.ones(10, 4, dtype=torch.uint8)
        terms = aux_loss(x, x_hat, contacts, skel)
        assert float(terms.vel) == 0.0
        assert float(terms.acc) == 0.0
        assert float(terms.contact) == 0.0
        expected_pos = float(shift.pow(2).sum()) / 3.0  # mean over xyz components
        assert float(terms.pos) == pytest.approx(expected_pos, rel=1e-5)

    def test_sliding_stance_contact_fixture(self):
        skel = default_skeleton()
        n = 10
        x = rest_motion(n)
        x_hat = MotionSequence(x.frames.clone())
        x_hat.frames[:, 0] += 0.1 * torch.arange(n)  # root slides 0.1 m/frame
        contacts = torch.ones(n, len(skel.foot_joint_ids), dtype=torch.uint8)
        terms = aux_loss(x, x_hat, contacts, skel)

        # independent sum over the masked foot displacements of FK(x_hat)
        feet = forward_kinematics(x_hat, skel)[:, list(skel.foot_joint_ids)]
        acc = 0.0
        count = 0
        for i in range(n - 1):
            for f in range(feet.shape[1]):
                for c in range(3):
                    acc += float(feet[i + 1, f, c] - feet[i, f, c]) ** 2
                    count += 1
        assert float(terms.contact) == pytest.approx(acc / count, rel=1e-6)
        assert float(terms.contact) == pytest.approx(0.1**2 / 3.0, rel=1e-4)

    def test_uncontacted_slide_not_penalized(self):
        skel = default_skeleton()
        n = 10
        x = rest_motion(n)
        x_hat = MotionSequence(x.frames.clone())
        x_hat.frames[:, 0] += 0.1 * torch.arange(n)
        contacts = torch.zeros(n, len(skel.foot_joint_ids), dtype=torch.uint8)
        terms = aux_loss(x, x_hat, contacts, skel)
        assert float(terms.contact) == 0.0

    def test_too_short(self):
        skel = default_skeleton()
        x = rest_motion(2)
        with pytest.raises(Exception):
            aux_loss(x, x, torch.ones(2, 4, dtype=torch.uint8), skel)


class TestTotalAndMaLoss:
    def test_ma_equal_inputs_zero(self):
        e = torch.randn(8, 16)
        assert float(modality_alignment_loss(e, e.clone())) == 0.0

    def test_ma_offset(self):
        e = torch.randn(8, 16)
        delta = 0.1 * torch.randn_like(e)
        assert float(modality_alignment_loss(e + delta, e)) == pytest.approx(
            float(delta.pow(2).mean()), rel=1e-5
        )

    def test_ma_zero_music(self):
        e = torch.randn(8, 16)
        assert float(modality_alignment_loss(e, torch.zeros_like(e))) == pytest.approx(
            float(e.pow(2).mean()), rel=1e-6
        )

    def test_ma_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            modality_alignment_loss(torch.randn(8, 16), torch.randn(7, 16))

    def test_total_loss_weighted_arithmetic(self):
        out = total_loss(torch.tensor(2.0), torch.tensor(3.0), torch.tensor(10.0))
        assert float(out) == pytest.approx(2 + 1 * 3 + 0.1 * 10, abs=1e-9)

    def test_total_loss_zero(self):
        z = torch.tensor(0.0)
        assert float(total_loss(z, z, z)) == 0.0

    def test_total_loss_gradient_is_weighted_sum(self):
        a = torch.tensor(1.5, requires_grad=True)
        b = torch.tensor(-0.7, requires_grad=True)
        c = torch.tensor(2.0, requires_grad=True)
        w = LossWeights()
        out = total_loss(a * a, b * b, c * c, w)
        ga, gb, gc = torch.autograd.grad(out, (a, b, c))
        assert float(ga) == pytest.approx(2 * 1.5, rel=1e-6)
        assert float(gb) == pytest.approx(w.lambda_aux * 2 * -0.7, rel=1e-6)
        assert float(gc) == pytest.approx(w.lambda_ma * 2 * 2.0, rel=1e-6)


def tiny_windows(n_windows=6, frames=64, feature_dim=8, seed=0):
    torch.manual_seed(seed)
    windows = []
    for _ in range(n_windows):
        motion = rest_motion(frames).frames + 0.05 * torch.randn(frames, 147)
        music = torch.randn(frames, feature_dim)
        windows.append((motion, music))
    return windows


class TestTraining:
    def test_epoch0_loss_reproducible(self):
        skel = default_skeleton()
        cfg = VQVAETrainConfig(epochs=1, batch_size=3, model=SMALL, seed=11)
        _, _, hist1 = train_vqvae(tiny_windows(), skel, cfg)
        _, _, hist2 = train_vqvae(tiny_windows(), skel, cfg)
        assert hist1[0]["total"] == hist2[0]["total"]

    def test_history_and_perplexity_logged(self):
        skel = default_skeleton()
        cfg = VQVAETrainConfig(epochs=3, batch_size=3, model=SMALL, seed=1)
        model, enc, hist = train_vqvae(tiny_windows(), skel, cfg)
        assert len(hist) == 3
        for row in hist:
            assert {"epoch", "total", "vq", "aux", "ma", "perplexity_b", "perplexity_t"} <= set(row)
            assert row["perplexity_b"] >= 1.0
        assert isinstance(enc, MusicEncoder)

    def test_divergence_aborts_with_checkpoint(self, tmp_path):
        skel = default_skeleton()
        windows = tiny_windows()
        poisoned = windows[0][0].clone()
        poisoned[0, 0] = float("nan")
        windows[0] = (poisoned, windows[0][1])
        cfg = VQVAETrainConfig(epochs=2, batch_size=6, model=SMALL, seed=0)
        ckpt = tmp_path / "aborted.pt"
        with pytest.raises(DivergenceDetected):
            train_vqvae(windows, skel, cfg, checkpoint_path=ckpt)
        assert ckpt.exists()
        assert load_vqvae_checkpoint(ckpt).config == cfg

    def test_checkpoint_round_trip(self, tmp_path):
        skel = default_skeleton()
        cfg = VQVAETrainConfig(epochs=1, batch_size=3, model=SMALL, seed=2)
        model, enc, hist = train_vqvae(tiny_windows(), skel, cfg)
        path = tmp_path / "vq.pt"
        save_vqvae_checkpoint(path, model, enc, cfg, hist)
        loaded = load_vqvae_checkpoint(path)
        for (name, a), (_, b) in zip(model.state_dict().items(), loaded.model.state_dict().items()):
            assert torch.equal(a, b), name
        x = torch.randn(64, 147)
        with torch.no_grad():
            assert torch.equal(model(x).x_hat, loaded.model(x).x_hat)
        assert loaded.config == cfg
        assert loaded.history == hist
