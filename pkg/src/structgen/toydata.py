"""Synthetic biography corpus for desk-scale runs.

Each table has name / birthdate / nationality / occupation records drawn
from small pools, and the description is a fixed template over the table
fields, so a correct model can drive the training loss to zero and greedy
decoding can reproduce references exactly.
"""

import os

import numpy as np

from .data import InfoboxTable, write_box_file, write_sent_file

FIRST_NAMES = ["anna", "boris", "carla", "davit", "elena", "farid",
               "greta", "henrik", "irma", "janos", "katya", "lars"]
LAST_NAMES = ["abadi", "bergman", "castillo", "dimitrov", "eriksen", "fontaine",
              "garza", "holm", "ivanov", "jansen", "kovacs", "lindgren"]
MONTHS = ["january", "february", "march", "april", "may", "june", "july",
          "august", "september", "october", "november", "december"]
NATIONALITIES = ["austrian", "brazilian", "canadian", "danish",
                 "estonian", "finnish", "georgian", "hungarian"]
OCCUPATIONS = ["actor", "architect", "botanist", "chemist",
               "drummer", "economist", "farmer", "geologist"]


def make_toy_pair(rng):
    first = FIRST_NAMES[rng.integers(0, len(FIRST_NAMES))]
    last = LAST_NAMES[rng.integers(0, len(LAST_NAMES))]
    month = MONTHS[rng.integers(0, len(MONTHS))]
    day = str(int(rng.integers(1, 29)))
    year = str(int(rng.integers(1950, 1980)))
    nationality = NATIONALITIES[rng.integers(0, len(NATIONALITIES))]
    occupation = OCCUPATIONS[rng.integers(0, len(OCCUPATIONS))]
    table = InfoboxTable.from_records([
        ("name", [first, last]),
        ("birthdate", [month, day, ",", year]),
        ("nationality", [nationality]),
        ("occupation", [occupation]),
    ])
    description = (first, last, "(", "born", month, day, ",", year, ")",
                   "is", "a", nationality, occupation, ".")
    return table, description


def make_toy_corpus(n, seed):
    rng = np.random.default_rng(seed)
    return [make_toy_pair(rng) for _ in range(n)]


def write_corpus(pairs, boxes_path, sents_path):
    write_box_file(boxes_path, [t for t, _ in pairs])
    write_sent_file(sents_path, [d for _, d in pairs])


def make_toy_dataset(out_dir, n, seed):
    """Write train/valid/test .box and .sent files; train has ``n`` pairs,
    valid and test each max(4, n // 5). Returns the split sizes."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    held = max(4, n // 5)
    sizes = {"train": n, "valid": held, "test": held}
    for split, count in sizes.items():
        pairs = [make_toy_pair(rng) for _ in range(count)]
        write_corpus(pairs,
                     os.path.join(out_dir, f"{split}.box"),
                     os.path.join(out_dir, f"{split}.sent"))
    return sizes
