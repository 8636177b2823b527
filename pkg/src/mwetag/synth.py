"""Seeded synthetic corpus for smoke tests and demos.

Sentences follow a fixed template (determiner, subject, trigger verb,
optional gap adverb, trigger noun, optional tail) where each verb-noun
trigger pair always carries the same category and filler words never join
an expression, so a tagger with enough capacity can drive training error
to zero. Every tenth instance is discontinuous (an adverb splits the pair).
The companion embedding builder draws a random vector per vocabulary item.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Sentence, Token, VmweInstance
from .embed import EmbeddingTable

# one category per trigger family; pairs never overlap between families
LVC_PAIRS = [
    ("take", "shower"), ("make", "decision"), ("give", "speech"),
    ("have", "nap"), ("do", "favor"), ("pay", "visit"),
    ("hold", "party"), ("throw", "glance"), ("cast", "vote"),
    ("draw", "breath"),
]
VID_PAIRS = [
    ("kick", "bucket"), ("spill", "beans"), ("break", "ice"),
    ("bite", "bullet"), ("pull", "strings"), ("face", "music"),
    ("clear", "air"), ("raise", "bar"), ("bend", "rules"),
    ("burn", "bridges"),
]
CATEGORIES = ("LVC.full", "VID")

SUBJECTS = ["cat", "dog", "teacher", "student", "doctor", "farmer", "singer",
            "lawyer", "pilot", "nurse", "writer", "painter", "driver",
            "child", "friend"]
DETERMINERS = ["the", "a", "this", "that"]
ADVERBS = ["quickly", "quietly", "often", "rarely", "always", "never",
           "really", "finally"]
PREPOSITIONS = ["in", "on", "at", "with", "near", "before"]
TAIL_NOUNS = ["morning", "evening", "park", "office", "kitchen", "garden",
              "meeting", "station", "market", "library", "school", "harbor",
              "field", "valley", "tower", "cellar", "attic", "balcony",
              "corridor", "museum"]
ADJECTIVES = ["big", "small", "old", "new", "busy", "calm"]

PLAIN_COLUMNS = ("_",) * 6  # XPOS FEATS HEAD DEPREL DEPS MISC


def vocabulary() -> list[str]:
    words = set(SUBJECTS + DETERMINERS + ADVERBS + PREPOSITIONS + TAIL_NOUNS
                + ADJECTIVES)
    for pairs in (LVC_PAIRS, VID_PAIRS):
        for verb, noun in pairs:
            words.add(verb)
            words.add(noun)
    return sorted(words)


def _pick(rng, items):
    return items[int(rng.integers(0, len(items)))]


def synthetic_corpus(sentences: int = 50, seed: int = 2024) -> Corpus:
    """Build ``sentences`` single-expression sentences; instance k carries
    CATEGORIES[k % 2] and every tenth instance is discontinuous."""
    rng = np.random.default_rng(seed)
    corpus: Corpus = []
    for k in range(sentences):
        category = CATEGORIES[k % 2]
        verb, noun = _pick(rng, LVC_PAIRS if category == "LVC.full" else VID_PAIRS)
        discontinuous = k % 10 == 9

        words: list[tuple[str, str]] = [(_pick(rng, DETERMINERS), "DET")]
        if rng.uniform() < 0.4:
            words.append((_pick(rng, ADJECTIVES), "ADJ"))
        words.append((_pick(rng, SUBJECTS), "NOUN"))
        verb_pos = len(words) + 1
        words.append((verb, "VERB"))
        if discontinuous:
            words.append((_pick(rng, ADVERBS), "ADV"))
        noun_pos = len(words) + 1
        words.append((noun, "NOUN"))
        if rng.uniform() < 0.6:
            words.append((_pick(rng, PREPOSITIONS), "ADP"))
            words.append((_pick(rng, DETERMINERS), "DET"))
            words.append((_pick(rng, TAIL_NOUNS), "NOUN"))
        if rng.uniform() < 0.3:
            words.append((_pick(rng, ADVERBS), "ADV"))

        tokens = tuple(
            Token(i + 1, form, form, upos, PLAIN_COLUMNS)
            for i, (form, upos) in enumerate(words)
        )
        instance = VmweInstance(1, category, (verb_pos, noun_pos))
        corpus.append(Sentence(tokens, (instance,)))
    return corpus


def synthetic_embeddings(dim: int = 20, seed: int = 7) -> EmbeddingTable:
    """Random vector per vocabulary item; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    vectors = {form: rng.normal(size=dim) * 0.5 for form in vocabulary()}
    return EmbeddingTable(dim, vectors)
