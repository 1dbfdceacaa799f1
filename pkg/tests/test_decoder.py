import numpy as np
import pytest

from structgen.autodiff import Tape, Tensor
from structgen.data import SOS_ID
from structgen.decoder import (dual_attention, field_attention,
                               relevance_score, word_attention)
from structgen.gradcheck import grad_check
from structgen.model import random_model


def softmax_oracle(v):
    e = np.exp(v - v.max())
    return e / e.sum()


class TestRelevanceScore:
    def test_zero_projections_give_zero(self):
        rng = np.random.default_rng(0)
        p = Tensor(np.zeros((4, 3)))
        q = Tensor(np.zeros((5, 3)))
        for _ in range(5):
            s = relevance_score(Tape(record=False),
                                Tensor(rng.normal(size=4)), Tensor(rng.normal(size=5)), p, q)
            assert s.item() == 0.0

    def test_orthogonal_projections_give_zero(self):
        # tanh(v @ P) = (1-ish, 0), tanh(s @ Q) = (0, 1-ish): disjoint support
        p = Tensor([[5.0, 0.0]])
        q = Tensor([[0.0, 5.0]])
        s = relevance_score(Tape(record=False), Tensor([1.0]), Tensor([1.0]), p, q)
        assert abs(s.item()) < 1e-15

    def test_matches_elementwise_sum_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = rng.normal(size=(4, 3))
            q = rng.normal(size=(6, 3))
            v = rng.normal(size=4)
            s = rng.normal(size=6)
            got = relevance_score(Tape(record=False), Tensor(v), Tensor(s),
                                  Tensor(p), Tensor(q)).item()
            expected = float(sum(np.tanh(v @ p)[k] * np.tanh(s @ q)[k] for k in range(3)))
            assert abs(got - expected) < 1e-12


def make_attention_fixture(seed=0, table_len=4, attention="dual"):
    model, tokens, dec_input, targets = random_model(
        dict(vocab=12, fields=5, word_dim=5, field_dim=3, pos_dim=2,
             hidden=8, att_dim=6, table_len=table_len, steps=3),
        seed=seed, attention_mode=attention)
    tape = Tape(record=False)
    enc = model.encode(tape, tokens)
    ctx = model.attention_context(tape, enc)
    s, c = model.initial_state(tape, enc)
    return model, tape, enc, ctx, s, c


class TestWordAttention:
    def test_equal_scores_give_uniform_mean(self):
        model, tape, enc, ctx, s, _ = make_attention_fixture()
        model.params.att_state_proj.data[:] = 0.0  # every score becomes 0
        ctx2 = model.attention_context(tape, enc)
        w, a = word_attention(tape, model.params, ctx2, s, enc)
        L = enc.H.shape[0]
        assert np.abs(w.data - 1.0 / L).max() < 1e-15
        assert np.abs(a.data - enc.H.data.mean(axis=0)).max() < 1e-12

    def test_dominant_score_saturates(self):
        model, tape, enc, ctx, s, _ = make_attention_fixture(seed=1)
        q = np.tanh(s.data @ model.params.att_state_proj.data)
        scores = ctx.enc_proj.data @ q
        boosted = scores.copy()
        boosted[2] += 50.0
        w = softmax_oracle(boosted)
        assert w[2] > 1.0 - 1e-15
        assert w.sum() - w[2] < 1e-20

    def test_matches_weighted_sum_oracle(self):
        model, tape, enc, ctx, s, _ = make_attention_fixture(seed=2)
        w, a = word_attention(tape, model.params, ctx, s, enc)
        q = np.tanh(s.data @ model.params.att_state_proj.data)
        scores = np.tanh(enc.H.data @ model.params.att_enc_proj.data) @ q
        expected_w = softmax_oracle(scores)
        expected_a = sum(expected_w[i] * enc.H.data[i] for i in range(enc.H.shape[0]))
        assert np.abs(w.data - expected_w).max() < 1e-12
        assert np.abs(a.data - expected_a).max() < 1e-12


class TestFieldAttention:
    def test_equal_scores_give_uniform(self):
        model, tape, enc, ctx, s, _ = make_attention_fixture(seed=3)
        model.params.att_field_state_proj.data[:] = 0.0
        ctx2 = model.attention_context(tape, enc)
        w = field_attention(tape, model.params, ctx2, s)
        assert np.abs(w.data - 1.0 / enc.H.shape[0]).max() < 1e-15

    def test_matches_oracle(self):
        model, tape, enc, ctx, s, _ = make_attention_fixture(seed=4)
        w = field_attention(tape, model.params, ctx, s)
        q = np.tanh(s.data @ model.params.att_field_state_proj.data)
        scores = np.tanh(enc.Z.data @ model.params.att_field_proj.data) @ q
        assert np.abs(w.data - softmax_oracle(scores)).max() < 1e-12


class TestDualAttention:
    def test_uniform_field_weights_reduce_to_word_weights(self):
        model, tape, enc, ctx, s, _ = make_attention_fixture(seed=5)
        w, a = word_attention(tape, model.params, ctx, s, enc)
        L = w.shape[0]
        uniform = Tape(record=False).softmax(Tensor(np.zeros(L)))
        g, ctx_vec = dual_attention(tape, w, uniform, enc)
        assert np.array_equal(g.data, w.data)
        assert np.array_equal(ctx_vec.data, a.data)

    def test_matching_one_hots(self):
        model, tape, enc, _, _, _ = make_attention_fixture(seed=6)
        one_hot = np.zeros(enc.H.shape[0])
        one_hot[1] = 1.0
        g, a = dual_attention(tape, Tensor(one_hot), Tensor(one_hot), enc)
        assert np.array_equal(g.data, one_hot)
        assert np.abs(a.data - enc.H.data[1]).max() < 1e-15

    def test_hand_computed_renormalization(self):
        model, tape, enc, _, _, _ = make_attention_fixture(seed=7, table_len=2)
        g, _ = dual_attention(tape, Tensor([0.5, 0.5]), Tensor([0.9, 0.1]), enc)
        assert np.abs(g.data - [0.9, 0.1]).max() < 1e-12

    def test_zero_product_falls_back_to_word_weights(self):
        model, tape, enc, _, _, _ = make_attention_fixture(seed=8, table_len=3)
        w = Tensor([1.0, 0.0, 0.0])
        f = Tensor([0.0, 0.0, 1.0])
        g, a = dual_attention(tape, w, f, enc)
        assert np.array_equal(g.data, w.data)
        assert np.abs(a.data - enc.H.data[0]).max() < 1e-15

    def test_argmax_consistency(self):
        rng = np.random.default_rng(9)
        model, tape, enc, _, _, _ = make_attention_fixture(seed=10, table_len=5)
        for _ in range(100):
            w = softmax_oracle(rng.normal(size=5))
            f = softmax_oracle(rng.normal(size=5))
            g, _ = dual_attention(tape, Tensor(w), Tensor(f), enc)
            assert np.argmax(g.data) == np.argmax(w * f)

    def test_dual_argmax_can_differ_from_word_argmax(self):
        # reachability: field weights can move the focus off the word argmax
        model, tape, enc, _, _, _ = make_attention_fixture(seed=11, table_len=3)
        w = Tensor([0.5, 0.4, 0.1])
        f = Tensor([0.1, 0.8, 0.1])
        g, _ = dual_attention(tape, w, f, enc)
        assert np.argmax(g.data) == 1 != np.argmax(w.data)


class TestDecodeStep:
    def test_distribution_is_strict_probability_vector(self):
        model, tape, enc, ctx, s, c = make_attention_fixture(seed=12)
        dist, s2, c2, attn = model.step(tape, SOS_ID, s, c, enc, ctx)
        assert np.all(dist.data > 0.0)
        assert abs(dist.data.sum() - 1.0) < 1e-12

    def test_uniform_field_scores_match_word_mode(self):
        # zero field projections make field attention uniform, so the dual
        # context must equal the word-attention context exactly
        model, tape, enc, ctx, s, c = make_attention_fixture(seed=13, attention="dual")
        model.params.att_field_state_proj.data[:] = 0.0
        ctx_dual = model.attention_context(tape, enc)
        dist_dual, _, _, attn = model.step(tape, SOS_ID, s, c, enc, ctx_dual)

        import dataclasses
        word_config = dataclasses.replace(model.config, attention_mode="word")
        from structgen.decoder import decode_step
        dist_word, _, _, _ = decode_step(
            tape, model.params, word_config, SOS_ID, s, c, enc)
        assert np.array_equal(dist_dual.data, dist_word.data)
        assert np.abs(attn.field_weights - attn.field_weights[0]).max() < 1e-15

    def test_full_step_matches_unrolled_oracle(self):
        model, tape, enc, ctx, s, c = make_attention_fixture(seed=14, table_len=5)
        p = model.params
        dist, s2, c2, attn = model.step(tape, 7, s, c, enc, ctx)

        # oracle: replay all the formulas with plain numpy
        x = p.word_emb.data[7]
        n = model.config.hidden
        pre = np.concatenate([x, s.data]) @ p.dec_cell_w.data + p.dec_cell_b.data
        sig = lambda v: 1.0 / (1.0 + np.exp(-v))
        i, f, o = sig(pre[:n]), sig(pre[n:2 * n]), sig(pre[2 * n:3 * n])
        c_new = f * c.data + i * np.tanh(pre[3 * n:])
        s_new = o * np.tanh(c_new)
        qw = np.tanh(s_new @ p.att_state_proj.data)
        alpha = softmax_oracle(np.tanh(enc.H.data @ p.att_enc_proj.data) @ qw)
        qf = np.tanh(s_new @ p.att_field_state_proj.data)
        beta = softmax_oracle(np.tanh(enc.Z.data @ p.att_field_proj.data) @ qf)
        gamma = alpha * beta / (alpha * beta).sum()
        context = gamma @ enc.H.data
        blend = np.tanh(np.concatenate([s_new, context]) @ p.out_blend.data)
        expected = softmax_oracle(blend @ p.out_proj.data)

        assert np.abs(s2.data - s_new).max() < 1e-12
        assert np.abs(attn.word_weights - alpha).max() < 1e-12
        assert np.abs(attn.field_weights - beta).max() < 1e-12
        assert np.abs(attn.dual_weights - gamma).max() < 1e-12
        assert np.abs(dist.data - expected).max() < 1e-12

    def test_invalid_token_id(self):
        model, tape, enc, ctx, s, c = make_attention_fixture(seed=15)
        with pytest.raises(IndexError):
            model.step(tape, len(model.word_vocab), s, c, enc, ctx)

    def test_simplex_property_over_many_random_steps(self):
        count = 0
        for seed in range(20):
            model, tape, enc, ctx, s, c = make_attention_fixture(seed=seed)
            rng = np.random.default_rng(seed)
            for _ in range(50):
                w = int(rng.integers(0, len(model.word_vocab)))
                _, s, c, attn = model.step(tape, w, s, c, enc, ctx)
                for vec in (attn.word_weights, attn.field_weights, attn.dual_weights):
                    assert vec.min() >= 0.0
                    assert abs(vec.sum() - 1.0) < 1e-9
                count += 1
        assert count == 1000

    def test_end_to_end_gradients(self):
        model, tokens, dec_input, targets = random_model(
            dict(vocab=12, fields=5, word_dim=4, field_dim=3, pos_dim=2,
                 hidden=6, att_dim=5, table_len=4, steps=3), seed=16)

        def build_loss(tape):
            total, count = model.example_nll(tape, tokens, dec_input, targets)
            return tape.scale(total, 1.0 / count)

        report = grad_check(build_loss, model.params.as_dict(), tol=1e-4)
        assert report.ok, report.format()
