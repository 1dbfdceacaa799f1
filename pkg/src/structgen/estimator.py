"""Scikit-learn style estimator wrapping the full generation pipeline.

``TableToTextGenerator`` is fit on (tables, descriptions) pairs and predicts
descriptions for new tables, so it composes with sklearn idioms: ``clone``,
``get_params`` / ``set_params`` grids, and pipeline-style reuse. Tables may
be ``InfoboxTable`` objects, ``(field, value)`` pair lists, or lines in the
tab-separated ``field_k:token`` format; descriptions may be strings or token
sequences.
"""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import (InfoboxTable, build_vocabularies, make_example,
                   parse_box_record_line)
from .inference import generate
from .metrics import bleu4
from .training import TrainConfig, train


def as_infobox_table(obj, index=0):
    """Coerce one estimator input to an InfoboxTable."""
    if isinstance(obj, InfoboxTable):
        return obj
    if isinstance(obj, str):
        return parse_box_record_line(obj, line_no=index + 1)
    try:
        pairs = [(name, value.split() if isinstance(value, str) else list(value))
                 for name, value in obj]
    except (TypeError, ValueError):
        raise ValueError(
            f"X[{index}] is not a table: expected InfoboxTable, a field_k:token "
            f"line, or (field, value) pairs, got {type(obj).__name__}")
    if not pairs:
        raise ValueError(f"X[{index}] has no records")
    return InfoboxTable.from_records(pairs)


def as_tokens(obj, index=0):
    """Coerce one target description to a lowercased token tuple."""
    if isinstance(obj, str):
        return tuple(obj.lower().split())
    try:
        return tuple(str(t).lower() for t in obj)
    except TypeError:
        raise ValueError(f"y[{index}] is not a sentence: got {type(obj).__name__}")


class TableToTextGenerator(BaseEstimator):
    """Structure-aware sequence-to-sequence table-to-text generator.

    The encoder is an LSTM over table tokens whose cell state can take a
    gated field/position contribution; the decoder attends over both the
    encoded tokens and their field vectors. ``fit`` builds vocabularies and
    trains by teacher forcing; ``predict`` decodes new tables (greedy by
    default, beam search when ``beam_size`` > 1) and replaces any generated
    unknown tokens with the most-attended table word.

    Parameters mirror the training configuration; ``score`` returns corpus
    BLEU-4 / 100 against reference descriptions.
    """

    def __init__(self, word_dim=64, field_dim=16, pos_dim=4, hidden=64,
                 att_dim=None, pos_cap=30, encoder_mode="fieldgate",
                 attention_mode="dual", batch_size=32, learning_rate=0.002,
                 epochs=30, seed=0, grad_clip=5.0, word_limit=20000,
                 field_min_count=0, max_decode_len=60, beam_size=1,
                 length_norm=0.0, replace_unk=True, tie_embeddings=True,
                 init_decoder_from_encoder=True, stop_at_train_loss=None,
                 validation_fraction=0.0):
        self.word_dim = word_dim
        self.field_dim = field_dim
        self.pos_dim = pos_dim
        self.hidden = hidden
        self.att_dim = att_dim
        self.pos_cap = pos_cap
        self.encoder_mode = encoder_mode
        self.attention_mode = attention_mode
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.grad_clip = grad_clip
        self.word_limit = word_limit
        self.field_min_count = field_min_count
        self.max_decode_len = max_decode_len
        self.beam_size = beam_size
        self.length_norm = length_norm
        self.replace_unk = replace_unk
        self.tie_embeddings = tie_embeddings
        self.init_decoder_from_encoder = init_decoder_from_encoder
        self.stop_at_train_loss = stop_at_train_loss
        self.validation_fraction = validation_fraction

    def _train_config(self):
        return TrainConfig(
            word_dim=self.word_dim, field_dim=self.field_dim, pos_dim=self.pos_dim,
            hidden=self.hidden, att_dim=self.att_dim, pos_cap=self.pos_cap,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            epochs=self.epochs, seed=self.seed, grad_clip=self.grad_clip,
            encoder_mode=self.encoder_mode, attention_mode=self.attention_mode,
            max_decode_len=self.max_decode_len, word_limit=self.word_limit,
            field_min_count=self.field_min_count, tie_embeddings=self.tie_embeddings,
            init_decoder_from_encoder=self.init_decoder_from_encoder,
            stop_at_train_loss=self.stop_at_train_loss,
        ).check()

    def fit(self, X, y):
        """Train on aligned tables ``X`` and descriptions ``y``."""
        config = self._train_config()
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction!r}")
        tables = [as_infobox_table(x, i) for i, x in enumerate(X)]
        targets = [as_tokens(t, i) for i, t in enumerate(y)]
        if len(tables) != len(targets):
            raise ValueError(f"X has {len(tables)} tables but y has {len(targets)} sentences")
        if not tables:
            raise ValueError("cannot fit on an empty corpus")
        pairs = list(zip(tables, targets))
        n_valid = int(len(pairs) * self.validation_fraction)
        train_pairs = pairs[:len(pairs) - n_valid] if n_valid else pairs
        valid_pairs = pairs[len(pairs) - n_valid:] if n_valid else []

        wv, fv = build_vocabularies(train_pairs, config.word_limit, config.field_min_count)
        train_examples = [make_example(t, d, wv, fv, config.pos_cap) for t, d in train_pairs]
        valid_examples = [make_example(t, d, wv, fv, config.pos_cap) for t, d in valid_pairs]
        result = train(config, wv, fv, train_examples, valid_examples=valid_examples)
        self.model_ = result.model
        self.word_vocab_ = wv
        self.field_vocab_ = fv
        self.history_ = result.history
        self.n_iter_ = len(result.history)
        return self

    def predict(self, X):
        """Decode each table to a sentence string."""
        check_is_fitted(self, "model_")
        out = []
        for i, x in enumerate(X):
            table = as_infobox_table(x, i)
            res = generate(self.model_, table, beam_size=self.beam_size,
                           max_len=self.max_decode_len, replace_unk=self.replace_unk,
                           length_norm=self.length_norm)
            out.append(res.text)
        return out

    def predict_tokens(self, X):
        """Like ``predict`` but returns token lists."""
        return [s.split() if s else [] for s in self.predict(X)]

    def score(self, X, y):
        """Corpus BLEU-4 against reference descriptions, scaled to [0, 1]."""
        check_is_fitted(self, "model_")
        candidates = self.predict_tokens(X)
        references = [list(as_tokens(t, i)) for i, t in enumerate(y)]
        return bleu4(candidates, references).bleu / 100.0
