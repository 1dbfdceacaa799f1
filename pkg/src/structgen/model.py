"""The generation model: parameters + vocabularies + forward passes."""

import numpy as np

from . import decoder, encoder
from .autodiff import zeros
from .data import (FIELD_RESERVED, SOS_ID, WORD_RESERVED, PositionedToken,
                   Vocabulary)
from .gradcheck import grad_check
from .params import ModelConfig, init_params


class Seq2SeqModel:
    """Bundles config, vocabularies and parameters, and runs the encoder,
    single decode steps, and the teacher-forced sequence loss."""

    def __init__(self, config, word_vocab, field_vocab, params=None, seed=0):
        self.config = config
        self.word_vocab = word_vocab
        self.field_vocab = field_vocab
        if params is None:
            params = init_params(config, len(word_vocab), len(field_vocab),
                                 np.random.default_rng(seed))
        self.params = params

    @property
    def vocab_size(self):
        return len(self.word_vocab)

    def encode(self, tape, tokens):
        return encoder.encode_table(tape, self.params, self.config, tokens)

    def attention_context(self, tape, enc_out):
        return decoder.prepare_attention(tape, self.params, self.config, enc_out)

    def initial_state(self, tape, enc_out):
        """Decoder start state: the encoder's final (hidden, cell), or zeros
        when the config opts out of conditioning on the table summary."""
        if self.config.init_decoder_from_encoder:
            return enc_out.final_hidden, enc_out.final_cell
        n = self.config.hidden
        return zeros(n), zeros(n)

    def step_logits(self, tape, w_prev, s_prev, c_prev, enc_out, ctx=None):
        return decoder.decode_step_logits(
            tape, self.params, self.config, w_prev, s_prev, c_prev, enc_out, ctx)

    def step(self, tape, w_prev, s_prev, c_prev, enc_out, ctx=None):
        return decoder.decode_step(
            tape, self.params, self.config, w_prev, s_prev, c_prev, enc_out, ctx)

    def example_nll(self, tape, tokens, dec_input, targets):
        """Summed cross entropy of ``targets`` under teacher forcing.

        ``dec_input`` and ``targets`` are aligned id sequences (gold
        previous token and gold next token). Returns (loss sum, count).
        """
        enc_out = self.encode(tape, tokens)
        ctx = self.attention_context(tape, enc_out)
        s, c = self.initial_state(tape, enc_out)
        total = None
        count = 0
        for w_prev, target in zip(dec_input, targets):
            logits, s, c, _ = self.step_logits(tape, int(w_prev), s, c, enc_out, ctx)
            ce = tape.cross_entropy(logits, int(target))
            total = ce if total is None else tape.add(total, ce)
            count += 1
        return total, count


# --------------------------------------------------------- gradcheck presets

GRADCHECK_PRESETS = {
    # vocab, fields, word_dim, field_dim, pos_dim, hidden, att, table len, decode steps
    "tiny": dict(vocab=20, fields=5, word_dim=6, field_dim=4, pos_dim=2,
                 hidden=8, att_dim=7, table_len=6, steps=3),
    "small": dict(vocab=30, fields=7, word_dim=10, field_dim=6, pos_dim=3,
                  hidden=12, att_dim=10, table_len=8, steps=4),
}


def _synthetic_vocabs(vocab, fields):
    words = [f"w{i}" for i in range(vocab - len(WORD_RESERVED))]
    fnames = [f"f{i}" for i in range(fields - len(FIELD_RESERVED))]
    return (Vocabulary(words, reserved=WORD_RESERVED),
            Vocabulary(fnames, reserved=FIELD_RESERVED))


def random_model(dims, seed=0, encoder_mode="fieldgate", attention_mode="dual"):
    """A randomly initialized model at the given preset dims, with a random
    table and description to drive it. Used by gradcheck and tests."""
    d = dict(GRADCHECK_PRESETS[dims]) if isinstance(dims, str) else dict(dims)
    rng = np.random.default_rng(seed)
    wv, fv = _synthetic_vocabs(d["vocab"], d["fields"])
    config = ModelConfig(
        word_dim=d["word_dim"], field_dim=d["field_dim"], pos_dim=d["pos_dim"],
        hidden=d["hidden"], att_dim=d["att_dim"],
        encoder_mode=encoder_mode, attention_mode=attention_mode)
    model = Seq2SeqModel(config, wv, fv, seed=rng.integers(2**31))

    n_fields = len(fv)
    table_len = d["table_len"]
    # split the table into two records to exercise both position embeddings
    first = max(1, table_len // 2)
    tokens = []
    for rec_len, field_id in ((first, 2 % n_fields), (table_len - first, (3 % n_fields) or 1)):
        for i in range(rec_len):
            tokens.append(PositionedToken(
                word=int(rng.integers(0, len(wv))),
                field=field_id,
                pos_begin=min(i + 1, config.pos_cap),
                pos_end=min(rec_len - i, config.pos_cap),
            ))
    steps = d["steps"]
    desc = [int(rng.integers(4, len(wv))) for _ in range(steps)]
    dec_input = [SOS_ID] + desc[:-1]
    return model, tuple(tokens), tuple(dec_input), tuple(desc)


def model_grad_check(dims="tiny", seed=0, tol=1e-4, step=1e-5,
                     encoder_mode="fieldgate", attention_mode="dual"):
    """Finite-difference check of every parameter gradient through the full
    encoder + a few teacher-forced decode steps."""
    model, tokens, dec_input, targets = random_model(
        dims, seed=seed, encoder_mode=encoder_mode, attention_mode=attention_mode)

    def build_loss(tape):
        total, count = model.example_nll(tape, tokens, dec_input, targets)
        return tape.scale(total, 1.0 / count)

    return grad_check(build_loss, model.params.as_dict(), tol=tol, step=step)
