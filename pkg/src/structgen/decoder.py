"""Description decoder: an LSTM over generated words with word-level,
field-level and combined (dual) attention over the encoded table.

Relevance between a decoder state and an encoder-side vector is the inner
product of their tanh-squashed projections. Word-level weights attend over
hidden states, field-level weights over field vectors, and the dual weights
are their renormalized elementwise product; the context vector is always a
weighted sum of encoder hidden states.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import lstm_cell
from .params import ATTENTION_MODES, decoder_embedding


@dataclass
class AttentionStep:
    """Attention weights of one decode step, as plain arrays for tracing.

    ``field_weights`` and ``dual_weights`` are None in word-attention mode.
    The weights used to pick the context are ``dual_weights`` when present,
    else ``word_weights``; UNK replacement uses the same rule.
    """
    word_weights: np.ndarray
    field_weights: object
    dual_weights: object
    context: np.ndarray

    @property
    def copy_weights(self):
        return self.dual_weights if self.dual_weights is not None else self.word_weights


@dataclass
class AttentionContext:
    """Per-table projections shared by every decode step."""
    enc_proj: object    # (L, att_dim) tanh-projected hidden states
    field_proj: object  # (L, att_dim) tanh-projected field vectors, or None


def prepare_attention(tape, params, config, enc_out):
    field_proj = None
    if config.attention_mode == "dual":
        field_proj = tape.tanh(tape.matmul(enc_out.Z, params.att_field_proj))
    return AttentionContext(
        enc_proj=tape.tanh(tape.matmul(enc_out.H, params.att_enc_proj)),
        field_proj=field_proj,
    )


def relevance_score(tape, v, state, enc_proj_w, state_proj_w):
    """Scalar relevance of one encoder-side vector to the decoder state:
    inner product of tanh(v @ P) and tanh(state @ Q)."""
    return tape.matmul(
        tape.tanh(tape.matmul(v, enc_proj_w)),
        tape.tanh(tape.matmul(state, state_proj_w)),
    )


def attention_weights(tape, projected, state, state_proj_w):
    """Softmax relevance weights of every projected row against ``state``."""
    q = tape.tanh(tape.matmul(state, state_proj_w))
    return tape.softmax(tape.matmul(projected, q))


def word_attention(tape, params, ctx, state, enc_out):
    """Word-level weights over table positions and their context vector."""
    weights = attention_weights(tape, ctx.enc_proj, state, params.att_state_proj)
    return weights, tape.matmul(weights, enc_out.H)


def field_attention(tape, params, ctx, state):
    """Field-level weights over table positions."""
    return attention_weights(tape, ctx.field_proj, state, params.att_field_state_proj)


def dual_attention(tape, word_weights, field_weights, enc_out):
    """Renormalized elementwise product of word- and field-level weights
    and its context vector.

    A constant field-weight vector renormalizes to exactly the word
    weights, so that case short-circuits to them; the step then behaves as
    word attention in every respect, gradients included (the product's
    true gradient contribution is only defined off that manifold anyway).
    If the product underflows to an exact zero everywhere (disjoint
    saturated weights), the word weights are likewise used unchanged."""
    fw = field_weights.data
    if np.all(fw == fw.max()):
        weights = word_weights
    else:
        prod = tape.mul(word_weights, field_weights)
        total = tape.sum(prod)
        if total.item() == 0.0:
            weights = word_weights
        else:
            weights = tape.smul(prod, tape.reciprocal(total))
    return weights, tape.matmul(weights, enc_out.H)


def decode_step_logits(tape, params, config, w_prev, s_prev, c_prev, enc_out, ctx=None):
    """One decoder step from previous token id and state, to output logits.

    Returns (logits, state, cell, AttentionStep). The blend of state and
    attention context goes through tanh before the output projection.
    """
    if config.attention_mode not in ATTENTION_MODES:
        raise ValueError(f"unknown attention mode {config.attention_mode!r}")
    if ctx is None:
        ctx = prepare_attention(tape, params, config, enc_out)
    x = tape.row(decoder_embedding(params), w_prev)
    s, c = lstm_cell(tape, x, s_prev, c_prev, params.dec_cell_w, params.dec_cell_b)
    word_w, word_ctx = word_attention(tape, params, ctx, s, enc_out)
    if config.attention_mode == "dual":
        field_w = field_attention(tape, params, ctx, s)
        dual_w, context = dual_attention(tape, word_w, field_w, enc_out)
        attn = AttentionStep(
            word_weights=word_w.data.copy(),
            field_weights=field_w.data.copy(),
            dual_weights=dual_w.data.copy(),
            context=context.data.copy(),
        )
    else:
        context = word_ctx
        attn = AttentionStep(
            word_weights=word_w.data.copy(),
            field_weights=None,
            dual_weights=None,
            context=context.data.copy(),
        )
    blend = tape.tanh(tape.matmul(tape.concat(s, context), params.out_blend))
    logits = tape.matmul(blend, params.out_proj)
    return logits, s, c, attn


def decode_step(tape, params, config, w_prev, s_prev, c_prev, enc_out, ctx=None):
    """Like ``decode_step_logits`` but returns the softmax distribution."""
    logits, s, c, attn = decode_step_logits(
        tape, params, config, w_prev, s_prev, c_prev, enc_out, ctx)
    return tape.softmax(logits), s, c, attn
