"""Maximum-likelihood training: config, Adam, the masked sequence loss,
the epoch loop, and self-describing binary checkpoints.

All training math is single-threaded float64, so a (config, seed, data)
triple fully determines every loss value and checkpoint byte.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .data import (FIELD_RESERVED, WORD_RESERVED, PositionedToken, Vocabulary,
                   make_batches)
from .model import Seq2SeqModel
from .params import ATTENTION_MODES, ENCODER_MODES, ModelConfig, init_params

CHECKPOINT_MAGIC = b"STRUCTG1"


class ConfigError(ValueError):
    """Invalid training configuration; message lists every problem."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or gradient)."""


@dataclass
class TrainConfig:
    """Flat training configuration; defaults follow the full-scale setup."""
    word_dim: int = 400
    field_dim: int = 50
    pos_dim: int = 5
    hidden: int = 500
    att_dim: int = None
    pos_cap: int = 30
    batch_size: int = 32
    learning_rate: float = 0.0005
    optimizer: str = "adam"
    epochs: int = 10
    seed: int = 0
    grad_clip: float = 5.0
    encoder_mode: str = "fieldgate"
    attention_mode: str = "dual"
    max_decode_len: int = 60
    word_limit: int = 20000
    field_min_count: int = 100
    tie_embeddings: bool = True
    init_decoder_from_encoder: bool = True
    stop_at_train_loss: float = None

    def validate(self):
        """Return a list of every problem, empty when valid."""
        problems = []
        for name in ("word_dim", "field_dim", "pos_dim", "hidden", "pos_cap",
                     "batch_size", "epochs", "max_decode_len", "word_limit"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer, got {getattr(self, name)!r}")
        if self.att_dim is not None and (not isinstance(self.att_dim, int) or self.att_dim < 1):
            problems.append(f"att_dim must be a positive integer or null, got {self.att_dim!r}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if self.optimizer != "adam":
            problems.append(f"optimizer must be 'adam', got {self.optimizer!r}")
        if self.encoder_mode not in ENCODER_MODES:
            problems.append(f"encoder_mode must be one of {ENCODER_MODES}, got {self.encoder_mode!r}")
        if self.attention_mode not in ATTENTION_MODES:
            problems.append(f"attention_mode must be one of {ATTENTION_MODES}, got {self.attention_mode!r}")
        if self.grad_clip is not None and self.grad_clip < 0:
            problems.append(f"grad_clip must be >= 0 or null, got {self.grad_clip!r}")
        if self.field_min_count < 0:
            problems.append(f"field_min_count must be >= 0, got {self.field_min_count!r}")
        if self.stop_at_train_loss is not None and self.stop_at_train_loss <= 0:
            problems.append(f"stop_at_train_loss must be > 0 or null, got {self.stop_at_train_loss!r}")
        return problems

    def check(self):
        problems = self.validate()
        if problems:
            raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("unknown config keys: " + ", ".join(unknown))
        return cls(**data)

    def model_config(self):
        return ModelConfig(
            word_dim=self.word_dim,
            field_dim=self.field_dim,
            pos_dim=self.pos_dim,
            hidden=self.hidden,
            att_dim=self.att_dim if self.att_dim is not None else self.hidden,
            pos_cap=self.pos_cap,
            encoder_mode=self.encoder_mode,
            attention_mode=self.attention_mode,
            tie_embeddings=self.tie_embeddings,
            init_decoder_from_encoder=self.init_decoder_from_encoder,
        )


MODEL_SHAPE_FIELDS = ("word_dim", "field_dim", "pos_dim", "hidden", "att_dim",
                      "pos_cap", "encoder_mode", "attention_mode", "tie_embeddings")


class Adam:
    """Adam with bias correction over a named-parameter registry."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def zero_grad(self):
        self.params.zero_grad()

    def step(self):
        """One update from the gradients currently on the parameters.
        Missing gradients count as zero; non-finite ones abort."""
        self.t += 1
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient in parameter {name!r} at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their global norm is at most ``max_norm``.
    Returns the pre-clip norm. No-op when max_norm is 0 or None."""
    total = 0.0
    for _, p in params.items():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = total ** 0.5
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for _, p in params.items():
            if p.grad is not None:
                p.grad *= scale
    return norm


def _batch_tokens(batch, i):
    length = int(batch.table_lens[i])
    return [
        PositionedToken(int(batch.word[i, t]), int(batch.field[i, t]),
                        int(batch.pos_begin[i, t]), int(batch.pos_end[i, t]))
        for t in range(length)
    ]


def sequence_loss(tape, model, batch):
    """Mean teacher-forced cross entropy over the batch's unmasked target
    positions. Returns (loss tensor, token count)."""
    total = None
    count = 0
    for i in range(batch.size):
        enc = model.encode(tape, _batch_tokens(batch, i))
        ctx = model.attention_context(tape, enc)
        s, c = model.initial_state(tape, enc)
        for t in range(batch.dec_input.shape[1]):
            if batch.loss_mask[i, t] == 0.0:
                continue
            logits, s, c, _ = model.step_logits(
                tape, int(batch.dec_input[i, t]), s, c, enc, ctx)
            ce = tape.cross_entropy(logits, int(batch.target[i, t]))
            total = ce if total is None else tape.add(total, ce)
            count += 1
    if count == 0:
        raise ValueError("batch has no unmasked target positions")
    return tape.scale(total, 1.0 / count), count


def corpus_loss(model, examples, batch_size=32):
    """Mean cross entropy over a whole corpus, without recording gradients."""
    total_ce = 0.0
    total_tokens = 0
    for batch in make_batches(examples, batch_size):
        loss, count = sequence_loss(Tape(record=False), model, batch)
        total_ce += loss.item() * count
        total_tokens += count
    return total_ce / total_tokens


@dataclass
class TrainResult:
    model: Seq2SeqModel
    history: list
    best_epoch: int
    best_valid_loss: float
    last_checkpoint: str = None
    best_checkpoint: str = None


def train(config, word_vocab, field_vocab, train_examples, valid_examples=(),
          out_dir=None, resume=None, log=None):
    """Run the epoch loop; returns a TrainResult.

    With ``out_dir``, writes ``metrics.jsonl`` plus ``ckpt_last.bin`` and the
    best-validation ``ckpt_best.bin`` (best train loss when there is no
    validation split). ``resume`` continues a checkpoint as if training had
    never stopped: same batches, same losses, same bytes.
    """
    config.check()
    if not train_examples:
        raise ValueError("no training examples")

    if resume is not None:
        ckpt = load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume
        for name in MODEL_SHAPE_FIELDS:
            mine = getattr(config, name)
            if name == "att_dim" and mine is None:
                mine = config.hidden
            theirs = getattr(ckpt.config, name)
            if name == "att_dim" and theirs is None:
                theirs = ckpt.config.hidden
            if mine != theirs:
                raise ConfigError(
                    f"resume config mismatch on {name}: checkpoint has {theirs!r}, got {mine!r}")
        model = ckpt.build_model()
        adam = Adam(model.params, lr=config.learning_rate)
        ckpt.load_optimizer(adam)
        rng = ckpt.build_rng()
        start_epoch = ckpt.epoch + 1
        step = ckpt.step
        best_valid = ckpt.best_valid_loss
        best_epoch = ckpt.best_epoch
    else:
        rng = np.random.default_rng(config.seed)
        model = Seq2SeqModel(config.model_config(), word_vocab, field_vocab,
                             params=init_params(config.model_config(),
                                                len(word_vocab), len(field_vocab), rng))
        adam = Adam(model.params, lr=config.learning_rate)
        start_epoch = 1
        step = 0
        best_valid = float("inf")
        best_epoch = 0

    metrics_fh = None
    if out_dir is not None:
        import os
        os.makedirs(out_dir, exist_ok=True)
        mode = "a" if resume is not None else "w"
        metrics_fh = open(f"{out_dir}/metrics.jsonl", mode, encoding="utf-8")

    history = []
    try:
        for epoch in range(start_epoch, config.epochs + 1):
            epoch_ce = 0.0
            epoch_tokens = 0
            for batch in make_batches(train_examples, config.batch_size, rng):
                adam.zero_grad()
                tape = Tape()
                loss, count = sequence_loss(tape, model, batch)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, step {step + 1}")
                tape.backward(loss)
                clip_grad_norm(model.params, config.grad_clip)
                adam.step()
                step += 1
                epoch_ce += loss_val * count
                epoch_tokens += count
            train_loss = epoch_ce / epoch_tokens
            valid_loss = corpus_loss(model, valid_examples, config.batch_size) \
                if valid_examples else None
            record = {"epoch": epoch, "step": step,
                      "train_loss": train_loss, "valid_loss": valid_loss}
            history.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
            if log is not None:
                shown = f"{valid_loss:.4f}" if valid_loss is not None else "n/a"
                log(f"epoch {epoch}: train_loss={train_loss:.4f} valid_loss={shown}")

            selection = valid_loss if valid_loss is not None else train_loss
            if selection < best_valid:
                best_valid = selection
                best_epoch = epoch
                if out_dir is not None:
                    save_checkpoint(f"{out_dir}/ckpt_best.bin", model, adam, epoch, step,
                                    config, rng, best_valid, best_epoch)
            if out_dir is not None:
                save_checkpoint(f"{out_dir}/ckpt_last.bin", model, adam, epoch, step,
                                config, rng, best_valid, best_epoch)
            if (config.stop_at_train_loss is not None
                    and train_loss < config.stop_at_train_loss):
                break
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_valid_loss=best_valid,
        last_checkpoint=f"{out_dir}/ckpt_last.bin" if out_dir else None,
        best_checkpoint=f"{out_dir}/ckpt_best.bin" if out_dir else None,
    )


# ------------------------------------------------------------- checkpoints

class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class Checkpoint:
    """Deserialized checkpoint: config, vocabularies, arrays and counters."""
    config: TrainConfig
    word_tokens: list
    word_counts: list
    field_tokens: list
    field_counts: list
    arrays: dict
    adam_t: int
    epoch: int
    step: int
    rng_state: dict
    best_valid_loss: float
    best_epoch: int

    def build_vocabs(self):
        nw = len(WORD_RESERVED)
        nf = len(FIELD_RESERVED)
        wv = Vocabulary(self.word_tokens[nw:], self.word_counts[nw:], reserved=WORD_RESERVED)
        fv = Vocabulary(self.field_tokens[nf:], self.field_counts[nf:], reserved=FIELD_RESERVED)
        return wv, fv

    def build_model(self):
        wv, fv = self.build_vocabs()
        mc = self.config.model_config()
        params = init_params(mc, len(wv), len(fv), np.random.default_rng(0))
        for name, tensor in params.items():
            key = f"param/{name}"
            if key not in self.arrays:
                raise CheckpointError(f"checkpoint is missing array {key!r}")
            stored = self.arrays[key]
            if stored.shape != tensor.data.shape:
                raise CheckpointError(
                    f"checkpoint array {key!r} has shape {stored.shape}, expected {tensor.data.shape}")
            tensor.data = stored.copy()
        return Seq2SeqModel(mc, wv, fv, params=params)

    def load_optimizer(self, adam):
        adam.t = self.adam_t
        for name in adam.m:
            adam.m[name] = self.arrays[f"adam_m/{name}"].copy()
            adam.v[name] = self.arrays[f"adam_v/{name}"].copy()

    def build_rng(self):
        rng = np.random.default_rng(0)
        rng.bit_generator.state = self.rng_state
        return rng


def _rng_state_to_json(rng):
    state = rng.bit_generator.state
    return json.loads(json.dumps(state))


def save_checkpoint(path, model, adam, epoch, step, config, rng,
                    best_valid_loss=float("inf"), best_epoch=0):
    """Single binary container: magic, JSON header, raw float64 arrays.

    Contains everything needed to resume (optimizer moments, PRNG state)
    and to decode standalone (config and both vocabularies), with no
    timestamps so identical runs write identical bytes.
    """
    arrays = []
    offset = 0
    blobs = []

    def add(name, arr):
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype=np.float64).tobytes()
        arrays.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)

    for name, p in model.params.items():
        add(f"param/{name}", p.data)
    for name in model.params.names():
        add(f"adam_m/{name}", adam.m[name])
        add(f"adam_v/{name}", adam.v[name])

    header = {
        "format": 1,
        "config": config.to_dict(),
        "epoch": epoch,
        "step": step,
        "adam_t": adam.t,
        "best_valid_loss": None if best_valid_loss == float("inf") else best_valid_loss,
        "best_epoch": best_epoch,
        "rng_state": _rng_state_to_json(rng),
        "word_vocab": {"tokens": list(model.word_vocab.tokens()),
                       "counts": list(model.word_vocab.counts())},
        "field_vocab": {"tokens": list(model.field_vocab.tokens()),
                        "counts": list(model.field_vocab.counts())},
        "arrays": arrays,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
            (header_len,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    arrays = {}
    for meta in header["arrays"]:
        shape = tuple(meta["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(blob, dtype=np.float64, count=n, offset=start).reshape(shape)
        arrays[meta["name"]] = arr

    best = header.get("best_valid_loss")
    return Checkpoint(
        config=TrainConfig.from_dict(header["config"]),
        word_tokens=header["word_vocab"]["tokens"],
        word_counts=header["word_vocab"]["counts"],
        field_tokens=header["field_vocab"]["tokens"],
        field_counts=header["field_vocab"]["counts"],
        arrays=arrays,
        adam_t=header["adam_t"],
        epoch=header["epoch"],
        step=header["step"],
        rng_state=header["rng_state"],
        best_valid_loss=float("inf") if best is None else best,
        best_epoch=header["best_epoch"],
    )
