"""Tables, vocabularies, corpus ingestion and batching.

The native table format is one line per table of tab-separated
``fieldname_k:token`` pairs, where ``k`` is the 1-based position of the
token within its field value. Descriptions live in a parallel file with one
whitespace-tokenized sentence per line. A JSON-lines alternative (ordered
``records`` arrays plus a ``description``) is accepted for synthetic
corpora. Everything produced here is immutable after construction.
"""

import json
from dataclasses import dataclass

import numpy as np

EMPTY_VALUE = "<none>"

WORD_RESERVED = ("<pad>", "<unk>", "<sos>", "<eos>")
FIELD_RESERVED = ("<pad>", "<unk>")
PAD_ID = 0
UNK_ID = 1
SOS_ID = 2
EOS_ID = 3

POSITION_CAP = 30


class ParseError(ValueError):
    """Malformed table line; carries 1-based line and column numbers."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Record:
    """One field-value row of a table."""
    name: str
    tokens: tuple

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class FlatToken:
    """A table token with its field name and within-field positions."""
    field: str
    token: str
    pos_begin: int
    pos_end: int


@dataclass(frozen=True)
class PositionedToken:
    """A table token as vocabulary ids plus capped positions (1-based)."""
    word: int
    field: int
    pos_begin: int
    pos_end: int


@dataclass(frozen=True)
class InfoboxTable:
    """An ordered sequence of field-value records."""
    records: tuple

    @classmethod
    def from_records(cls, pairs):
        recs = tuple(Record(str(name), tuple(str(t) for t in tokens)) for name, tokens in pairs)
        return cls(records=recs)

    @property
    def n_tokens(self):
        return sum(len(r) for r in self.records)

    def flat_tokens(self, cap=POSITION_CAP):
        """Flatten to surface tokens with positions, record by record."""
        out = []
        for rec in self.records:
            for tok, (pb, pe) in zip(rec.tokens, annotate_positions(rec.tokens, cap)):
                out.append(FlatToken(rec.name, tok, pb, pe))
        return out

    def value_tokens(self):
        return [tok for rec in self.records for tok in rec.tokens]


def annotate_positions(value_tokens, cap=POSITION_CAP):
    """Positions of each token counted from both ends of its field value.

    The i-th of m tokens gets ``(min(i, cap), min(m + 1 - i, cap))``,
    1-based. The value must be nonempty (empty fields are filtered at
    parse time).
    """
    m = len(value_tokens)
    if m == 0:
        raise ValueError("cannot annotate positions of an empty field value")
    if cap < 1:
        raise ValueError(f"position cap must be >= 1, got {cap}")
    return [(min(i, cap), min(m + 1 - i, cap)) for i in range(1, m + 1)]


def parse_box_record_line(line, line_no=1):
    """Parse one table line of tab-separated ``fieldname_k:token`` pairs.

    Pairs are regrouped into records: ``k`` must start at 1 and increase by
    1 within a field; a fresh ``k == 1`` starts a new record. Records whose
    value is the empty marker are dropped.
    """
    records = []
    current_name = None
    current_tokens = []
    current_k = 0

    def close_current():
        nonlocal current_name, current_tokens, current_k
        if current_name is not None:
            kept = tuple(t for t in current_tokens if t != EMPTY_VALUE)
            if kept:
                records.append(Record(current_name, kept))
        current_name = None
        current_tokens = []
        current_k = 0

    column = 1
    for pair in line.rstrip("\n").split("\t"):
        if pair == "":
            column += 1
            continue
        if ":" not in pair:
            raise ParseError(f"pair {pair!r} has no colon", line_no, column)
        label, token = pair.split(":", 1)
        if "_" not in label:
            raise ParseError(f"field key {label!r} has no _k suffix", line_no, column)
        name, k_str = label.rsplit("_", 1)
        if not k_str.isdigit() or int(k_str) < 1:
            raise ParseError(f"field key {label!r} has non-positive position {k_str!r}", line_no, column)
        k = int(k_str)
        if name == current_name and k == current_k + 1:
            current_tokens.append(token)
            current_k = k
        elif k == 1:
            close_current()
            current_name = name
            current_tokens = [token]
            current_k = 1
        elif name == current_name:
            raise ParseError(
                f"non-monotonic position {k} after {current_k} in field {name!r}", line_no, column)
        else:
            raise ParseError(
                f"field {name!r} starts at position {k} instead of 1", line_no, column)
        column += len(pair) + 1
    close_current()
    return InfoboxTable(records=tuple(records))


def format_box_line(table):
    """Serialize a table back to the tab-separated pair format."""
    pairs = []
    for rec in table.records:
        for k, tok in enumerate(rec.tokens, start=1):
            pairs.append(f"{rec.name}_{k}:{tok}")
    return "\t".join(pairs)


def shuffle_records(table, seed):
    """Permute record order with a seeded PRNG; record contents, internal
    token order and per-record positions are untouched."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(len(table.records))
    return InfoboxTable(records=tuple(table.records[i] for i in perm))


class Vocabulary:
    """Token <-> id maps with fixed reserved entries at the lowest ids.

    Word vocabularies reserve ``<pad>``=0, ``<unk>``=1, ``<sos>``=2,
    ``<eos>``=3; field vocabularies reserve ``<pad>``=0 and ``<unk>``=1.
    Non-reserved ids follow in frequency rank order.
    """

    def __init__(self, tokens, counts=None, reserved=WORD_RESERVED):
        self.reserved = tuple(reserved)
        self._id_to_token = list(self.reserved) + [str(t) for t in tokens]
        if counts is None:
            counts = [0] * len(tokens)
        self._counts = [0] * len(self.reserved) + [int(c) for c in counts]
        self._token_to_id = {}
        for i, tok in enumerate(self._id_to_token):
            if tok in self._token_to_id:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self._token_to_id[tok] = i

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def lookup(self, token):
        """Id of ``token``, or the UNK id when out of vocabulary."""
        return self._token_to_id.get(token, UNK_ID)

    def token(self, idx):
        return self._id_to_token[idx]

    def tokens(self):
        return tuple(self._id_to_token)

    def counts(self):
        return tuple(self._counts)

    def save(self, path):
        """One ``token<TAB>count`` line per id, in id order (reserved first)."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok, cnt in zip(self._id_to_token, self._counts):
                fh.write(f"{tok}\t{cnt}\n")

    @classmethod
    def load(cls, path, reserved=WORD_RESERVED):
        tokens, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, cnt = line.split("\t")
                tokens.append(tok)
                counts.append(int(cnt))
        n = len(reserved)
        if tuple(tokens[:n]) != tuple(reserved):
            raise ValueError(f"vocabulary file {path} does not start with reserved tokens {reserved}")
        return cls(tokens[n:], counts[n:], reserved=reserved)


def _count(stats, token, order):
    entry = stats.get(token)
    if entry is None:
        stats[token] = [1, order]
    else:
        entry[0] += 1


def build_vocabularies(corpus, word_limit=20000, field_min_count=100):
    """Build the word and field vocabularies from (table, description) pairs.

    Words are counted over descriptions and table values together and the
    ``word_limit`` most frequent kept; fields are kept when their record
    count strictly exceeds ``field_min_count``. Frequency ties break by
    first occurrence, then lexicographically, so rebuilding is
    deterministic.
    """
    word_stats = {}
    field_stats = {}
    order = 0
    n_examples = 0
    for table, desc_tokens in corpus:
        n_examples += 1
        for tok in desc_tokens:
            _count(word_stats, tok, order)
            order += 1
        for rec in table.records:
            _count(field_stats, rec.name, order)
            order += 1
            for tok in rec.tokens:
                _count(word_stats, tok, order)
                order += 1
    if n_examples == 0:
        raise ValueError("cannot build vocabularies from an empty corpus")

    def ranked(stats):
        return sorted(stats.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[0]))

    words = [(tok, stat[0]) for tok, stat in ranked(word_stats)
             if tok not in WORD_RESERVED][:word_limit]
    fields = [(t, stat[0]) for t, stat in ranked(field_stats)
              if stat[0] > field_min_count and t not in FIELD_RESERVED]
    word_vocab = Vocabulary([t for t, _ in words], [c for _, c in words], reserved=WORD_RESERVED)
    field_vocab = Vocabulary([t for t, _ in fields], [c for _, c in fields], reserved=FIELD_RESERVED)
    return word_vocab, field_vocab


def encode_table_tokens(table, word_vocab, field_vocab, cap=POSITION_CAP):
    """Encode a table to PositionedTokens; OOV words and fields map to UNK."""
    return tuple(
        PositionedToken(
            word=word_vocab.lookup(ft.token),
            field=field_vocab.lookup(ft.field),
            pos_begin=ft.pos_begin,
            pos_end=ft.pos_end,
        )
        for ft in table.flat_tokens(cap)
    )


@dataclass(frozen=True)
class Example:
    """A table with its encoded tokens and target description ids."""
    table: InfoboxTable
    tokens: tuple          # PositionedToken sequence
    desc_ids: tuple        # SOS ... EOS

    @property
    def desc_len(self):
        return len(self.desc_ids) - 2


def make_example(table, desc_tokens, word_vocab, field_vocab, cap=POSITION_CAP):
    ids = (SOS_ID,) + tuple(word_vocab.lookup(t) for t in desc_tokens) + (EOS_ID,)
    return Example(
        table=table,
        tokens=encode_table_tokens(table, word_vocab, field_vocab, cap),
        desc_ids=ids,
    )


@dataclass(frozen=True)
class Batch:
    """Padded id matrices for a group of examples.

    All matrices are padded with PAD (id 0); ``loss_mask`` is 1.0 exactly on
    real target positions and 0.0 on padding.
    """
    word: np.ndarray        # (B, Lmax) table word ids
    field: np.ndarray       # (B, Lmax) table field ids
    pos_begin: np.ndarray   # (B, Lmax)
    pos_end: np.ndarray     # (B, Lmax)
    table_lens: np.ndarray  # (B,)
    dec_input: np.ndarray   # (B, Tmax)  SOS + description
    target: np.ndarray      # (B, Tmax)  description + EOS
    loss_mask: np.ndarray   # (B, Tmax)

    @property
    def size(self):
        return self.word.shape[0]


def make_batch(examples):
    """Pad a group of examples into one Batch."""
    b = len(examples)
    lmax = max(len(ex.tokens) for ex in examples)
    tmax = max(len(ex.desc_ids) - 1 for ex in examples)
    word = np.full((b, lmax), PAD_ID, dtype=np.int64)
    field = np.full((b, lmax), PAD_ID, dtype=np.int64)
    pos_begin = np.ones((b, lmax), dtype=np.int64)
    pos_end = np.ones((b, lmax), dtype=np.int64)
    table_lens = np.zeros(b, dtype=np.int64)
    dec_input = np.full((b, tmax), PAD_ID, dtype=np.int64)
    target = np.full((b, tmax), PAD_ID, dtype=np.int64)
    loss_mask = np.zeros((b, tmax), dtype=np.float64)
    for i, ex in enumerate(examples):
        ln = len(ex.tokens)
        table_lens[i] = ln
        word[i, :ln] = [t.word for t in ex.tokens]
        field[i, :ln] = [t.field for t in ex.tokens]
        pos_begin[i, :ln] = [t.pos_begin for t in ex.tokens]
        pos_end[i, :ln] = [t.pos_end for t in ex.tokens]
        steps = len(ex.desc_ids) - 1
        dec_input[i, :steps] = ex.desc_ids[:-1]
        target[i, :steps] = ex.desc_ids[1:]
        loss_mask[i, :steps] = 1.0
    return Batch(word, field, pos_begin, pos_end, table_lens, dec_input, target, loss_mask)


def make_batches(examples, batch_size, rng=None):
    """Yield Batches over ``examples``, optionally shuffled by ``rng``.

    ``rng`` may be an int seed, a numpy Generator (consumed, so a trainer
    can own the shuffling state), or None for corpus order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not examples:
        raise ValueError("no examples to batch")
    order = np.arange(len(examples))
    if rng is not None:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        order = gen.permutation(len(examples))
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        yield make_batch(chunk)


@dataclass(frozen=True)
class CorpusStats:
    n_examples: int
    mean_desc_tokens: float
    mean_desc_tokens_in_table: float
    mean_table_tokens: float
    mean_fields: float

    def format(self):
        return "\n".join([
            f"examples                  {self.n_examples}",
            f"tokens per sentence       {self.mean_desc_tokens:.1f}",
            f"table tokens per sentence {self.mean_desc_tokens_in_table:.1f}",
            f"tokens per table          {self.mean_table_tokens:.1f}",
            f"fields per table          {self.mean_fields:.1f}",
        ])

    def to_dict(self):
        return {
            "n_examples": self.n_examples,
            "mean_desc_tokens": self.mean_desc_tokens,
            "mean_desc_tokens_in_table": self.mean_desc_tokens_in_table,
            "mean_table_tokens": self.mean_table_tokens,
            "mean_fields": self.mean_fields,
        }


def corpus_stats(pairs):
    """Mean sentence length, sentence/table token overlap, table length and
    record count over (table, description) pairs."""
    n = 0
    desc_total = overlap_total = table_total = field_total = 0
    for table, desc_tokens in pairs:
        n += 1
        desc_total += len(desc_tokens)
        table_set = set(table.value_tokens())
        overlap_total += sum(1 for t in desc_tokens if t in table_set)
        table_total += table.n_tokens
        field_total += len(table.records)
    if n == 0:
        raise ValueError("empty corpus")
    return CorpusStats(
        n_examples=n,
        mean_desc_tokens=desc_total / n,
        mean_desc_tokens_in_table=overlap_total / n,
        mean_table_tokens=table_total / n,
        mean_fields=field_total / n,
    )


# ----------------------------------------------------------------- file I/O

def read_box_file(path):
    """All tables from a ``.box`` file, one per line."""
    tables = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip() == "":
                continue
            tables.append(parse_box_record_line(line, line_no=i))
    return tables


def write_box_file(path, tables):
    with open(path, "w", encoding="utf-8") as fh:
        for t in tables:
            fh.write(format_box_line(t) + "\n")


def read_sent_file(path):
    """Whitespace-tokenized, lowercased sentences, one per line."""
    sents = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.strip() == "":
                continue
            sents.append(tuple(line.lower().split()))
    return sents


def write_sent_file(path, sentences):
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(" ".join(s) + "\n")


def read_jsonl_corpus(path):
    """JSON-lines corpus: {"records": [[field, [tokens...]], ...],
    "description": "..." or [tokens...]} per line."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip() == "":
                continue
            obj = json.loads(line)
            recs = []
            for name, tokens in obj["records"]:
                if isinstance(tokens, str):
                    tokens = tokens.split()
                kept = tuple(t for t in tokens if t != EMPTY_VALUE)
                if kept:
                    recs.append((name, kept))
            desc = obj.get("description", "")
            if isinstance(desc, str):
                desc = desc.lower().split()
            pairs.append((InfoboxTable.from_records(recs), tuple(desc)))
    return pairs


def read_corpus(boxes_path, sents_path=None):
    """Load a parallel (tables, sentences) corpus.

    A ``.jsonl`` boxes path carries both tables and descriptions; otherwise
    tables come from ``boxes_path`` and sentences from ``sents_path``,
    aligned by line number.
    """
    if str(boxes_path).endswith(".jsonl"):
        return read_jsonl_corpus(boxes_path)
    tables = read_box_file(boxes_path)
    if sents_path is None:
        return [(t, ()) for t in tables]
    sents = read_sent_file(sents_path)
    if len(tables) != len(sents):
        raise ValueError(
            f"{boxes_path} has {len(tables)} tables but {sents_path} has {len(sents)} sentences")
    return list(zip(tables, sents))
