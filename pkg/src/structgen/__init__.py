"""Structure-aware table-to-text generation.

A self-contained float64 implementation of a field-gating LSTM encoder and
dual-attention decoder over infobox-style tables, with tape-based gradients,
Adam training, greedy/beam decoding with UNK replacement, BLEU-4/ROUGE-4
scoring, and a scikit-learn style estimator on top.
"""

__version__ = "0.1.0"

from .autodiff import ShapeError, Tape, Tensor
from .data import (Example, InfoboxTable, PositionedToken, Vocabulary,
                   annotate_positions, build_vocabularies, corpus_stats,
                   make_batches, make_example, parse_box_record_line,
                   shuffle_records)
from .estimator import TableToTextGenerator
from .inference import beam_decode, generate, greedy_decode, unk_replace
from .metrics import bleu4, rouge4, score_corpus
from .model import Seq2SeqModel, model_grad_check
from .params import ModelConfig
from .training import (Adam, TrainConfig, load_checkpoint, save_checkpoint,
                       sequence_loss, train)

__all__ = [
    "Adam",
    "Example",
    "InfoboxTable",
    "ModelConfig",
    "PositionedToken",
    "Seq2SeqModel",
    "ShapeError",
    "TableToTextGenerator",
    "Tape",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "annotate_positions",
    "beam_decode",
    "bleu4",
    "build_vocabularies",
    "corpus_stats",
    "generate",
    "greedy_decode",
    "load_checkpoint",
    "make_batches",
    "make_example",
    "model_grad_check",
    "parse_box_record_line",
    "rouge4",
    "save_checkpoint",
    "score_corpus",
    "sequence_loss",
    "shuffle_records",
    "train",
    "unk_replace",
    "__version__",
]
