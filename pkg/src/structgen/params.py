"""Model configuration and the named trainable-parameter registry."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

ENCODER_MODES = ("word", "concat", "fieldgate", "fieldgate-concat")
ATTENTION_MODES = ("word", "dual")

INIT_SCALE = 0.08
FORGET_BIAS = 1.0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters (vocabulary sizes live in the model)."""
    word_dim: int = 400
    field_dim: int = 50
    pos_dim: int = 5
    hidden: int = 500
    att_dim: int = 500
    pos_cap: int = 30
    encoder_mode: str = "fieldgate"
    attention_mode: str = "dual"
    tie_embeddings: bool = True
    init_decoder_from_encoder: bool = True

    @property
    def field_vec_dim(self):
        """Width of the per-token field vector: field + both position embeddings."""
        return self.field_dim + 2 * self.pos_dim

    @property
    def encoder_input_dim(self):
        if self.encoder_mode in ("concat", "fieldgate-concat"):
            return self.word_dim + self.field_vec_dim
        return self.word_dim

    @property
    def uses_field_gate(self):
        return self.encoder_mode in ("fieldgate", "fieldgate-concat")


class ModelParams:
    """Every trainable tensor, addressable by name and as an attribute."""

    def __init__(self):
        self._by_name = {}

    def add(self, name, tensor):
        if name in self._by_name:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor.name = name
        self._by_name[name] = tensor
        setattr(self, name, tensor)
        return tensor

    def names(self):
        return list(self._by_name)

    def items(self):
        return self._by_name.items()

    def as_dict(self):
        return dict(self._by_name)

    def __getitem__(self, name):
        return self._by_name[name]

    def __contains__(self, name):
        return name in self._by_name

    def __len__(self):
        return len(self._by_name)

    def zero_grad(self):
        for t in self._by_name.values():
            t.zero_grad()

    def n_scalars(self):
        return sum(t.size for t in self._by_name.values())


def _lstm_bias(n):
    """Zero bias with the forget-gate slice preset to FORGET_BIAS.

    Gate layout along the preactivation is (input, forget, output,
    candidate)."""
    b = np.zeros(4 * n, dtype=np.float64)
    b[n:2 * n] = FORGET_BIAS
    return Tensor(b)


def init_params(config, vocab_size, field_vocab_size, rng):
    """Fresh parameters: weights uniform(-0.08, 0.08), biases zero except the
    forget gates. Layout depends on encoder/attention mode, so only tensors
    the configured model uses are allocated."""
    n = config.hidden
    a = config.att_dim
    zdim = config.field_vec_dim

    def uniform(shape):
        return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape))

    p = ModelParams()
    p.add("word_emb", uniform((vocab_size, config.word_dim)))
    p.add("field_emb", uniform((field_vocab_size, config.field_dim)))
    p.add("pos_begin_emb", uniform((config.pos_cap, config.pos_dim)))
    p.add("pos_end_emb", uniform((config.pos_cap, config.pos_dim)))

    p.add("enc_cell_w", uniform((config.encoder_input_dim + n, 4 * n)))
    p.add("enc_cell_b", _lstm_bias(n))
    if config.uses_field_gate:
        p.add("field_gate_w", uniform((zdim, 2 * n)))
        p.add("field_gate_b", Tensor([0.0] * (2 * n)))

    if not config.tie_embeddings:
        p.add("dec_word_emb", uniform((vocab_size, config.word_dim)))
    p.add("dec_cell_w", uniform((config.word_dim + n, 4 * n)))
    p.add("dec_cell_b", _lstm_bias(n))

    p.add("att_enc_proj", uniform((n, a)))
    p.add("att_state_proj", uniform((n, a)))
    if config.attention_mode == "dual":
        p.add("att_field_proj", uniform((zdim, a)))
        p.add("att_field_state_proj", uniform((n, a)))

    p.add("out_blend", uniform((2 * n, n)))
    p.add("out_proj", uniform((n, vocab_size)))
    return p


def decoder_embedding(params):
    """Decoder input embedding; the encoder matrix when tied."""
    return getattr(params, "dec_word_emb", params.word_emb)
