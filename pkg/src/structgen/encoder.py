"""Table encoder: a word-level LSTM whose cell state can take an extra
field-gate contribution carrying field and position information.

Per-token inputs are (word id, field id, pos_begin, pos_end). The field
vector z_t concatenates the field embedding with both position embeddings
and is returned for every token regardless of encoder mode, since field
attention consumes it downstream.
"""

from dataclasses import dataclass

from .autodiff import zeros
from .params import ENCODER_MODES


def lstm_cell(tape, x, h_prev, c_prev, w, b):
    """One LSTM step.

    Preactivation is ``[x; h_prev] @ w + b`` with gate layout (input,
    forget, output, candidate); the new cell is forget*c_prev +
    input*candidate and the output is the output gate times tanh(cell).
    """
    n = h_prev.shape[0]
    pre = tape.add(tape.matmul(tape.concat(x, h_prev), w), b)
    gate_in = tape.sigmoid(tape.narrow(pre, 0, n))
    gate_forget = tape.sigmoid(tape.narrow(pre, n, n))
    gate_out = tape.sigmoid(tape.narrow(pre, 2 * n, n))
    cand = tape.tanh(tape.narrow(pre, 3 * n, n))
    c = tape.add(tape.mul(gate_forget, c_prev), tape.mul(gate_in, cand))
    h = tape.mul(gate_out, tape.tanh(c))
    return h, c


def field_gated_cell(tape, x, z, h_prev, c_prev, w, b, gate_w, gate_b):
    """LSTM step with a field gate adding a field-derived value to the cell.

    The field vector z drives an extra sigmoid gate and tanh value through
    ``z @ gate_w + gate_b``; the gated value is added on top of the vanilla
    cell update, so zero gate weights reduce exactly to ``lstm_cell``.
    """
    n = h_prev.shape[0]
    pre = tape.add(tape.matmul(tape.concat(x, h_prev), w), b)
    gate_in = tape.sigmoid(tape.narrow(pre, 0, n))
    gate_forget = tape.sigmoid(tape.narrow(pre, n, n))
    gate_out = tape.sigmoid(tape.narrow(pre, 2 * n, n))
    cand = tape.tanh(tape.narrow(pre, 3 * n, n))
    zpre = tape.add(tape.matmul(z, gate_w), gate_b)
    gate_field = tape.sigmoid(tape.narrow(zpre, 0, n))
    field_value = tape.tanh(tape.narrow(zpre, n, n))
    c = tape.add(
        tape.add(tape.mul(gate_forget, c_prev), tape.mul(gate_in, cand)),
        tape.mul(gate_field, field_value),
    )
    h = tape.mul(gate_out, tape.tanh(c))
    return h, c


@dataclass
class EncoderOutput:
    """Hidden states and field vectors for one encoded table."""
    H: object          # (L, hidden) tensor
    Z: object          # (L, field_vec_dim) tensor
    final_hidden: object
    final_cell: object

    @property
    def length(self):
        return self.H.shape[0]


def field_vector(tape, params, token):
    """Concatenated (field, pos_begin, pos_end) embedding for one token."""
    f = tape.row(params.field_emb, token.field)
    pb = tape.row(params.pos_begin_emb, token.pos_begin - 1)
    pe = tape.row(params.pos_end_emb, token.pos_end - 1)
    return tape.concat(tape.concat(f, pb), pe)


def encode_table(tape, params, config, tokens):
    """Run the configured encoder over a PositionedToken sequence.

    Modes: ``word`` feeds word embeddings to a vanilla cell; ``concat``
    appends the field vector to the input; ``fieldgate`` feeds word
    embeddings and routes the field vector through the cell-state gate;
    ``fieldgate-concat`` does both. h_0 and c_0 are zero.
    """
    if config.encoder_mode not in ENCODER_MODES:
        raise ValueError(f"unknown encoder mode {config.encoder_mode!r}")
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot encode an empty table")
    n = config.hidden
    h = zeros(n)
    c = zeros(n)
    hs = []
    zs = []
    for tok in tokens:
        z = field_vector(tape, params, tok)
        x = tape.row(params.word_emb, tok.word)
        if config.encoder_mode in ("concat", "fieldgate-concat"):
            x = tape.concat(x, z)
        if config.uses_field_gate:
            h, c = field_gated_cell(
                tape, x, z, h, c,
                params.enc_cell_w, params.enc_cell_b,
                params.field_gate_w, params.field_gate_b)
        else:
            h, c = lstm_cell(tape, x, h, c, params.enc_cell_w, params.enc_cell_b)
        hs.append(h)
        zs.append(z)
    return EncoderOutput(
        H=tape.stack(hs),
        Z=tape.stack(zs),
        final_hidden=h,
        final_cell=c,
    )
