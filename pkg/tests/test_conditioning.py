import math

import numpy as np
import pytest
import torch

from conftest import tiny_denoiser_config
from vgcdm.conditioning import (
    AttentionScores,
    ConditionEncoder,
    ConditionEncoderConfig,
    ConfigError,
    GuidanceBlock,
    MultiHeadAttention,
    attention,
    extract_attention_map,
    read_attention_dump,
    write_attention_dump,
    zero_conv1d,
)
from vgcdm.unet import DenoiserNet


class TestAttentionFunction:
    def test_rows_sum_to_one(self):
        q = torch.randn(2, 5, 8)
        k = torch.randn(2, 7, 8)
        v = torch.randn(2, 7, 8)
        _, _, probs = attention(q, k, v)
        assert torch.allclose(probs.sum(-1), torch.ones(2, 5), atol=1e-5)

    def test_repeated_key_gives_value_row(self):
        # All keys identical -> uniform attention -> output is mean of values,
        # and with identical values the output equals that single value row.
        q = torch.randn(1, 4, 8)
        k = torch.ones(1, 3, 8)
        v = torch.ones(1, 3, 8) * 2.5
        out, _, _ = attention(q, k, v)
        assert torch.allclose(out, torch.full((1, 4, 8), 2.5), atol=1e-6)

    def test_hand_computed_two_by_three(self):
        # Single head, d_k = 2, worked out with from-scratch arithmetic.
        q = torch.tensor([[[1.0, 0.0], [0.0, 2.0]]])
        k = torch.tensor([[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]])
        v = torch.tensor([[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]])
        out, logits, probs = attention(q, k, v)
        scale = 1.0 / math.sqrt(2.0)
        want_logits = np.array([
            [1.0 * scale, 0.0, 1.0 * scale],
            [0.0, 2.0 * scale, 2.0 * scale],
        ])
        assert np.allclose(logits[0].numpy(), want_logits, atol=1e-6)
        for row in range(2):
            e = np.exp(want_logits[row] - want_logits[row].max())
            p = e / e.sum()
            want_out = p @ v[0].numpy()
            assert np.allclose(out[0, row].numpy(), want_out, atol=1e-6)

    def test_logit_shift_preserves_argmax(self):
        q = torch.randn(1, 6, 4)
        k = torch.randn(1, 5, 4)
        v = torch.randn(1, 5, 4)
        _, logits, probs = attention(q, k, v)
        shifted = torch.softmax(logits + 3.21, dim=-1)
        assert torch.equal(shifted.argmax(-1), probs.argmax(-1))

    def test_key_permutation_permutes_columns(self):
        q = torch.randn(1, 3, 4)
        k = torch.randn(1, 4, 4)
        v = torch.randn(1, 4, 4)
        perm = torch.tensor([2, 0, 3, 1])
        out1, _, probs1 = attention(q, k, v)
        out2, _, probs2 = attention(q, k[:, perm], v[:, perm])
        assert torch.allclose(probs2, probs1[:, :, perm], atol=1e-6)
        assert torch.allclose(out2, out1, atol=1e-6)


class TestConditionEncoder:
    def test_zero_input_finite(self):
        enc = ConditionEncoder(ConditionEncoderConfig(depth=2, inner_dim=16, n_heads=2))
        out = enc(torch.zeros(1, 1, 64))
        assert torch.isfinite(out).all()

    def test_output_length(self):
        cfg = ConditionEncoderConfig(depth=2, inner_dim=16, n_heads=2)
        enc = ConditionEncoder(cfg)
        out = enc(torch.randn(3, 1, 64))
        assert out.shape == (3, 16, 64 // 2 ** 3)

    def test_distinguishes_pulse_counts(self):
        enc = ConditionEncoder(ConditionEncoderConfig(depth=1, inner_dim=16, n_heads=2))
        c1 = torch.zeros(1, 1, 64)
        c1[0, 0, 10:14] = 1.0
        c2 = torch.zeros(1, 1, 64)
        for start in (5, 25, 45):
            c2[0, 0, start:start + 4] = 1.0
        a = enc(c1).flatten()
        b = enc(c2).flatten()
        cos = float(a @ b / (a.norm() * b.norm()))
        assert cos < 1.0 - 1e-4

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ConditionEncoderConfig(depth=0, inner_dim=16, n_heads=2)
        with pytest.raises(ConfigError):
            ConditionEncoderConfig(depth=1, inner_dim=15, n_heads=2)


class TestGuidanceBlock:
    def test_identity_at_zero_init(self):
        block = GuidanceBlock(channels=8, inner_dim=16, n_heads=2)
        h = torch.randn(2, 8, 32)
        c_tokens = torch.randn(2, 10, 16)
        out = block(h, c_tokens)
        assert torch.equal(out, h)

    def test_zero_branch_is_identity(self):
        conv = zero_conv1d(16, 8)
        x = torch.randn(2, 16, 32)
        assert torch.count_nonzero(conv(x)) == 0

    def test_branch_activates_after_training(self):
        torch.manual_seed(1)
        block = GuidanceBlock(channels=4, inner_dim=8, n_heads=2)
        opt = torch.optim.Adam(block.parameters(), lr=1e-2)
        h = torch.randn(4, 4, 16)
        c_tokens = torch.randn(4, 6, 8)
        target = torch.randn(4, 4, 16)
        for _ in range(100):
            loss = ((block(h, c_tokens) - target) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
        delta = (block(h, c_tokens) - h).norm()
        assert delta > 0


class TestAttentionExtraction:
    def _model(self):
        torch.manual_seed(0)
        return DenoiserNet(tiny_denoiser_config())

    def test_scores_shapes_and_row_sums(self):
        model = self._model()
        x = torch.randn(1, 1, 64)
        c = torch.randn(1, 1, 64)
        scores = extract_attention_map(model, x, 0, c, "test")
        assert scores.channel_summary.shape == (32, 64)
        assert np.allclose(scores.probs.sum(-1), 1.0, atol=1e-5)
        assert np.all(scores.probs >= 0)

    def test_unconditional_model_rejected(self):
        model = DenoiserNet(tiny_denoiser_config(condition_enabled=False))
        with pytest.raises(ConfigError):
            extract_attention_map(model, torch.randn(1, 1, 64), 0,
                                  torch.randn(1, 1, 64))

    def test_standstill_differs_from_steady(self):
        model = self._model()
        x = torch.randn(1, 1, 64)
        standstill = torch.zeros(1, 1, 64)
        steady = torch.zeros(1, 1, 64)
        steady[0, 0, ::8] = 1.0
        a = extract_attention_map(model, x, 0, standstill)
        b = extract_attention_map(model, x, 0, steady)
        assert np.linalg.norm(a.logits - b.logits) > 1e-3

    def test_dump_round_trip_bit_exact(self, tmp_path):
        model = self._model()
        scores = extract_attention_map(
            model, torch.randn(1, 1, 64), 5, torch.randn(1, 1, 64), "cond-a"
        )
        path = tmp_path / "scores.attn"
        write_attention_dump(scores, path)
        back = read_attention_dump(path)
        assert np.array_equal(back.logits, scores.logits)
        assert np.array_equal(back.probs, scores.probs)
        assert np.array_equal(back.channel_summary, scores.channel_summary)
        assert back.t == 5
        assert back.condition_id == "cond-a"


class TestMultiHeadAttention:
    def test_projections_bias_free(self):
        mha = MultiHeadAttention(16, 2)
        assert mha.wq.bias is None
        assert mha.wk.bias is None
        assert mha.wv.bias is None
