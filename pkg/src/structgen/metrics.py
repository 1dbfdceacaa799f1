"""Corpus-level BLEU-4 and sentence-averaged ROUGE-4 over pre-tokenized text.

BLEU follows the classic single-reference corpus recipe: clipped n-gram
matches and candidate totals are summed over the whole corpus for n=1..4,
combined by geometric mean, and multiplied by the brevity penalty
exp(min(0, 1 - r/c)). No smoothing: any zero n-gram precision zeroes the
score. ROUGE-4 is clipped 4-gram overlap scored per sentence (precision,
recall, F1) and averaged; sentences shorter than four tokens contribute
zero. No stemming or stopword removal is applied, and inputs are scored
with their existing tokenization. Scores are percentages.
"""

import json
import math
from collections import Counter
from dataclasses import dataclass


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_matches(cand_counts, ref_counts):
    return sum(min(c, ref_counts[g]) for g, c in cand_counts.items())


@dataclass
class BleuReport:
    bleu: float                 # percent
    precisions: tuple           # per n-gram order, fractions in [0, 1]
    brevity_penalty: float
    candidate_length: int
    reference_length: int

    def to_dict(self):
        return {
            "bleu": self.bleu,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "candidate_length": self.candidate_length,
            "reference_length": self.reference_length,
        }


@dataclass
class RougeReport:
    precision: float            # percent
    recall: float
    f1: float

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def bleu4(candidates, references, max_order=4):
    """Corpus BLEU with one reference per candidate."""
    if len(candidates) != len(references):
        raise ValueError(
            f"got {len(candidates)} candidates but {len(references)} references")
    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand = list(cand)
        ref = list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            cg = ngram_counts(cand, n)
            matches[n - 1] += clipped_matches(cg, ngram_counts(ref, n))
            totals[n - 1] += sum(cg.values())
    precisions = tuple(m / t if t > 0 else 0.0 for m, t in zip(matches, totals))
    if cand_len == 0:
        bp = 0.0
    else:
        bp = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / max_order) * 100.0
    return BleuReport(
        bleu=score,
        precisions=precisions,
        brevity_penalty=bp,
        candidate_length=cand_len,
        reference_length=ref_len,
    )


def rouge4(candidates, references, order=4):
    """Average per-sentence clipped 4-gram precision/recall/F1."""
    if len(candidates) != len(references):
        raise ValueError(
            f"got {len(candidates)} candidates but {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    p_sum = r_sum = f_sum = 0.0
    for cand, ref in zip(candidates, references):
        cg = ngram_counts(list(cand), order)
        rg = ngram_counts(list(ref), order)
        match = clipped_matches(cg, rg)
        c_total = sum(cg.values())
        r_total = sum(rg.values())
        p = match / c_total if c_total else 0.0
        r = match / r_total if r_total else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        p_sum += p
        r_sum += r
        f_sum += f
    n = len(candidates)
    return RougeReport(
        precision=100.0 * p_sum / n,
        recall=100.0 * r_sum / n,
        f1=100.0 * f_sum / n,
    )


@dataclass
class ScoreReport:
    """BLEU + ROUGE for one system output, with reporting helpers."""
    bleu: BleuReport
    rouge: RougeReport
    n_examples: int
    config_id: str = ""
    notes: str = "rouge without stemming or stopword removal"

    def to_dict(self):
        return {
            "config_id": self.config_id,
            "n_examples": self.n_examples,
            "bleu": self.bleu.to_dict(),
            "rouge": self.rouge.to_dict(),
            "notes": self.notes,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def format(self):
        b = self.bleu
        head = f"{self.config_id}: " if self.config_id else ""
        return "\n".join([
            f"{head}{self.n_examples} examples",
            f"BLEU-4   {b.bleu:6.2f}  "
            f"(precisions {' '.join(f'{100 * p:.1f}' for p in b.precisions)}, "
            f"BP {b.brevity_penalty:.3f}, lengths {b.candidate_length}/{b.reference_length})",
            f"ROUGE-4  {self.rouge.f1:6.2f}  "
            f"(P {self.rouge.precision:.2f}, R {self.rouge.recall:.2f})",
        ])


def score_corpus(candidates, references, config_id=""):
    return ScoreReport(
        bleu=bleu4(candidates, references),
        rouge=rouge4(candidates, references),
        n_examples=len(candidates),
        config_id=config_id,
    )
