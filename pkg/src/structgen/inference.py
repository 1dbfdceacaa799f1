"""Greedy and beam-search decoding with attention-based UNK replacement.

Scores are raw cumulative log-probabilities; an optional length-norm
exponent divides by length**exponent when set above zero. Decoding a table
never mutates the model, so distinct tables may be decoded in parallel over
a frozen parameter set.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .data import EOS_ID, SOS_ID, encode_table_tokens


@dataclass
class Hypothesis:
    """One (possibly finished) decode path.

    ``tokens`` are the generated ids including the final EOS when ``ended``;
    ``logprob`` is the sum of the chosen tokens' log-probabilities; ``trace``
    holds one AttentionStep per generated token.
    """
    tokens: tuple
    logprob: float
    ended: bool
    trace: tuple
    state: tuple = None  # (s, c) tensors of the last step; None once finished

    @property
    def output_tokens(self):
        """Generated ids with the terminating EOS stripped."""
        if self.ended and self.tokens and self.tokens[-1] == EOS_ID:
            return self.tokens[:-1]
        return self.tokens

    def score(self, length_norm=0.0):
        if length_norm > 0.0 and self.tokens:
            return self.logprob / (len(self.tokens) ** length_norm)
        return self.logprob


def greedy_decode(model, tokens, max_len):
    """Feed back the argmax token from SOS until EOS or ``max_len`` output
    tokens. Returns (generated ids, attention trace), EOS excluded."""
    tape = Tape(record=False)
    enc = model.encode(tape, tokens)
    ctx = model.attention_context(tape, enc)
    s, c = model.initial_state(tape, enc)
    out = []
    trace = []
    prev = SOS_ID
    for _ in range(max_len):
        dist, s, c, attn = model.step(tape, prev, s, c, enc, ctx)
        choice = int(np.argmax(dist.data))
        if choice == EOS_ID:
            break
        out.append(choice)
        trace.append(attn)
        prev = choice
    return out, trace


def beam_decode(model, tokens, beam_size, max_len, n_best=None, length_norm=0.0):
    """Standard beam search over per-step log-probabilities.

    Each live hypothesis expands with its ``beam_size`` best tokens, the
    global best ``beam_size`` survive, EOS moves a hypothesis to the done
    set, and at ``max_len`` the remaining live hypotheses compete with the
    done ones. Ties break toward lower token ids, so ``beam_size=1``
    reproduces greedy decoding exactly.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    if n_best is None:
        n_best = beam_size
    tape = Tape(record=False)
    enc = model.encode(tape, tokens)
    ctx = model.attention_context(tape, enc)
    s, c = model.initial_state(tape, enc)
    live = [Hypothesis(tokens=(), logprob=0.0, ended=False, trace=(), state=(s, c))]
    done = []
    for _ in range(max_len):
        candidates = []
        for hyp in live:
            prev = hyp.tokens[-1] if hyp.tokens else SOS_ID
            dist, s2, c2, attn = model.step(tape, int(prev), *hyp.state, enc, ctx)
            with np.errstate(divide="ignore"):
                logp = np.log(dist.data)  # exact-zero probs rank last as -inf
            top = np.argsort(-logp, kind="stable")[:beam_size]
            for tok in top:
                tok = int(tok)
                candidates.append(Hypothesis(
                    tokens=hyp.tokens + (tok,),
                    logprob=hyp.logprob + float(logp[tok]),
                    ended=tok == EOS_ID,
                    trace=hyp.trace + (attn,),
                    state=(s2, c2),
                ))
        candidates.sort(key=lambda h: -h.logprob)
        live = []
        for hyp in candidates[:beam_size]:
            if hyp.ended:
                hyp.state = None
                done.append(hyp)
            else:
                live.append(hyp)
        if not live:
            break
    for hyp in live:
        hyp.state = None
    finished = done + live
    finished.sort(key=lambda h: -h.score(length_norm))
    return finished[:n_best]


def rescore(model, tokens, generated):
    """Independent log-probability of a generated id sequence (including its
    EOS, if any) under the model, via teacher forcing."""
    tape = Tape(record=False)
    enc = model.encode(tape, tokens)
    ctx = model.attention_context(tape, enc)
    s, c = model.initial_state(tape, enc)
    prev = SOS_ID
    total = 0.0
    for tok in generated:
        dist, s, c, _ = model.step(tape, int(prev), s, c, enc, ctx)
        with np.errstate(divide="ignore"):
            total += float(np.log(dist.data[int(tok)]))
        prev = tok
    return total


def unk_replace(tokens, trace, table, unk_token="<unk>"):
    """Replace generated UNK surface tokens by the table word holding the
    most attention at that step (dual weights when present, else word
    weights; ties go to the earliest table position)."""
    flat = table.flat_tokens()
    if not flat:
        if any(t == unk_token for t in tokens):
            warnings.warn("cannot replace UNK tokens: table is empty")
        return list(tokens)
    out = []
    for i, tok in enumerate(tokens):
        if tok == unk_token:
            weights = trace[i].copy_weights
            out.append(flat[int(np.argmax(weights))].token)
        else:
            out.append(tok)
    return out


@dataclass
class GenerationResult:
    """Decoded sentence for one table, before and after UNK replacement."""
    tokens: list            # surface tokens after optional UNK replacement
    raw_tokens: list        # surface tokens as decoded
    ids: list
    trace: tuple
    score: float

    @property
    def text(self):
        return " ".join(self.tokens)

    @property
    def raw_text(self):
        return " ".join(self.raw_tokens)


def generate(model, table, beam_size=1, max_len=60, replace_unk=True, length_norm=0.0):
    """Decode one table to a sentence. ``beam_size=1`` is greedy."""
    tokens = encode_table_tokens(table, model.word_vocab, model.field_vocab,
                                 model.config.pos_cap)
    if beam_size == 1:
        ids, trace = greedy_decode(model, tokens, max_len)
        score = rescore(model, tokens, ids)
    else:
        best = beam_decode(model, tokens, beam_size, max_len, n_best=1,
                           length_norm=length_norm)[0]
        ids = list(best.output_tokens)
        trace = best.trace[:len(ids)]
        score = best.logprob
    raw = [model.word_vocab.token(i) for i in ids]
    final = unk_replace(raw, trace, table) if replace_unk else list(raw)
    return GenerationResult(tokens=final, raw_tokens=list(raw), ids=list(ids),
                            trace=tuple(trace), score=score)
