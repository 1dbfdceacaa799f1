"""Multi-configuration experiments: the scoring grid over model variants and
the record-shuffling robustness comparison.

Both experiments decode a test corpus with trained models and score the
output with BLEU-4 and ROUGE-4; scores are reported with and without UNK
replacement, and aggregated as mean and standard deviation over seeds.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import build_vocabularies, make_example, shuffle_records
from .inference import generate
from .metrics import score_corpus
from .training import train


def decode_corpus(model, tables, beam_size=1, max_len=60):
    """Decode every table; returns (replaced, raw) token-list pairs."""
    replaced = []
    raw = []
    for table in tables:
        res = generate(model, table, beam_size=beam_size, max_len=max_len)
        replaced.append(res.tokens)
        raw.append(res.raw_tokens)
    return replaced, raw


def evaluate_model(model, test_pairs, beam_size=1, max_len=60, config_id=""):
    """Score a model on (table, reference) pairs, with and without UNK
    replacement. Returns a dict of ScoreReports."""
    tables = [t for t, _ in test_pairs]
    refs = [list(d) for _, d in test_pairs]
    replaced, raw = decode_corpus(model, tables, beam_size, max_len)
    return {
        "replaced": score_corpus(replaced, refs, config_id=config_id),
        "raw": score_corpus(raw, refs, config_id=f"{config_id} (no unk replacement)"),
    }


@dataclass
class ScoreStats:
    """Mean and standard deviation of one metric across seeds."""
    mean: float
    std: float
    values: tuple

    @classmethod
    def of(cls, values):
        values = tuple(float(v) for v in values)
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return cls(mean=mean, std=math.sqrt(var), values=values)

    def format(self):
        if len(self.values) == 1:
            return f"{self.mean:.2f}"
        return f"{self.mean:.2f} ± {self.std:.2f}"


def train_variant(config, train_pairs, valid_pairs, seed):
    """Train one configuration with its own seed; vocabularies are built
    from the training pairs at the config's limits."""
    import dataclasses
    cfg = dataclasses.replace(config, seed=seed)
    wv, fv = build_vocabularies(train_pairs, cfg.word_limit, cfg.field_min_count)
    train_examples = [make_example(t, d, wv, fv, cfg.pos_cap) for t, d in train_pairs]
    valid_examples = [make_example(t, d, wv, fv, cfg.pos_cap) for t, d in valid_pairs]
    return train(cfg, wv, fv, train_examples, valid_examples).model


@dataclass
class AblationRow:
    name: str
    bleu: ScoreStats
    rouge: ScoreStats
    bleu_raw: ScoreStats
    rouge_raw: ScoreStats


@dataclass
class AblationReport:
    rows: list

    def format(self):
        width = max((len(r.name) for r in self.rows), default=10) + 2
        lines = [f"{'model':<{width}}{'BLEU-4':<16}{'ROUGE-4':<16}"]
        for r in self.rows:
            lines.append(f"{r.name:<{width}}{r.bleu.format():<16}{r.rouge.format():<16}")
        return "\n".join(lines)

    def to_dict(self):
        return {
            r.name: {
                "bleu": {"mean": r.bleu.mean, "std": r.bleu.std, "values": list(r.bleu.values)},
                "rouge": {"mean": r.rouge.mean, "std": r.rouge.std, "values": list(r.rouge.values)},
                "bleu_no_replace": {"mean": r.bleu_raw.mean, "std": r.bleu_raw.std},
                "rouge_no_replace": {"mean": r.rouge_raw.mean, "std": r.rouge_raw.std},
            }
            for r in self.rows
        }


def run_ablation(models_by_config, test_pairs, beam_size=1, max_len=60):
    """Score trained models per configuration name, aggregating over seeds.

    ``models_by_config`` maps a config name to a sequence of trained models
    (one per seed); an empty or missing entry is an error naming the config.
    """
    rows = []
    for name, models in models_by_config.items():
        if not models:
            raise ValueError(f"no trained checkpoints for config {name!r}")
        scored = [evaluate_model(m, test_pairs, beam_size, max_len, config_id=name)
                  for m in models]
        rows.append(AblationRow(
            name=name,
            bleu=ScoreStats.of([s["replaced"].bleu.bleu for s in scored]),
            rouge=ScoreStats.of([s["replaced"].rouge.f1 for s in scored]),
            bleu_raw=ScoreStats.of([s["raw"].bleu.bleu for s in scored]),
            rouge_raw=ScoreStats.of([s["raw"].rouge.f1 for s in scored]),
        ))
    return AblationReport(rows=rows)


def train_ablation(configs, train_pairs, valid_pairs, seeds):
    """Train every (config, seed) combination; returns name -> [models]."""
    return {
        name: [train_variant(cfg, train_pairs, valid_pairs, seed) for seed in seeds]
        for name, cfg in configs.items()
    }


def shuffle_corpus(pairs, seed):
    """Record-shuffle every table with one seeded generator; descriptions
    are untouched."""
    rng = np.random.default_rng(seed)
    return [(shuffle_records(t, rng), d) for t, d in pairs]


@dataclass
class DisorderRow:
    name: str
    ordered_bleu: ScoreStats
    shuffled_bleu: ScoreStats
    ordered_rouge: ScoreStats
    shuffled_rouge: ScoreStats

    @property
    def bleu_delta(self):
        return self.shuffled_bleu.mean - self.ordered_bleu.mean

    @property
    def rouge_delta(self):
        return self.shuffled_rouge.mean - self.ordered_rouge.mean


@dataclass
class DisorderReport:
    rows: list

    def format(self):
        width = max((len(r.name) for r in self.rows), default=10) + 2
        lines = [f"{'model':<{width}}{'BLEU-4':<22}{'ROUGE-4':<22}"]
        for r in self.rows:
            bleu = f"{r.shuffled_bleu.format()} ({r.bleu_delta:+.2f})"
            rouge = f"{r.shuffled_rouge.format()} ({r.rouge_delta:+.2f})"
            lines.append(f"{r.name:<{width}}{bleu:<22}{rouge:<22}")
        return "\n".join(lines)

    def to_dict(self):
        return {
            r.name: {
                "ordered_bleu": r.ordered_bleu.mean,
                "shuffled_bleu": r.shuffled_bleu.mean,
                "bleu_delta": r.bleu_delta,
                "ordered_rouge": r.ordered_rouge.mean,
                "shuffled_rouge": r.shuffled_rouge.mean,
                "rouge_delta": r.rouge_delta,
            }
            for r in self.rows
        }


def run_disorder_experiment(configs, train_pairs, valid_pairs, test_pairs, seeds,
                            shuffle_seed=0, ordered_models=None,
                            beam_size=1, max_len=60):
    """Train and score each configuration on ordered and record-shuffled
    train+test corpora; the report shows shuffled scores with their delta
    against the ordered runs.

    ``ordered_models`` may carry already-trained ordered models (name ->
    sequence, aligned with ``seeds``); missing entries are an error naming
    the config. The shuffled side is always trained here, on tables
    shuffled with ``shuffle_seed``.
    """
    if ordered_models is None:
        ordered_models = train_ablation(configs, train_pairs, valid_pairs, seeds)
    for name in configs:
        if name not in ordered_models or not ordered_models[name]:
            raise ValueError(f"no trained checkpoints for config {name!r}")

    shuf_train = shuffle_corpus(train_pairs, shuffle_seed)
    shuf_valid = shuffle_corpus(valid_pairs, shuffle_seed + 1) if valid_pairs else []
    shuf_test = shuffle_corpus(test_pairs, shuffle_seed + 2)

    rows = []
    for name, cfg in configs.items():
        ordered_scores = [evaluate_model(m, test_pairs, beam_size, max_len, config_id=name)
                          for m in ordered_models[name]]
        shuffled_models = [train_variant(cfg, shuf_train, shuf_valid, seed) for seed in seeds]
        shuffled_scores = [evaluate_model(m, shuf_test, beam_size, max_len, config_id=name)
                           for m in shuffled_models]
        rows.append(DisorderRow(
            name=name,
            ordered_bleu=ScoreStats.of([s["replaced"].bleu.bleu for s in ordered_scores]),
            shuffled_bleu=ScoreStats.of([s["replaced"].bleu.bleu for s in shuffled_scores]),
            ordered_rouge=ScoreStats.of([s["replaced"].rouge.f1 for s in ordered_scores]),
            shuffled_rouge=ScoreStats.of([s["replaced"].rouge.f1 for s in shuffled_scores]),
        ))
    return DisorderReport(rows=rows)
