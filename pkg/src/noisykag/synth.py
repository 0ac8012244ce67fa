"""Deterministic synthetic dialogue data for desk-scale runs and fixtures.

Every text is built from a closed ~50-word inventory so the toy generator's
corpus covers all tokens.  Records follow a fixed recipe: a short history
about one topic, a gold candidate carrying that topic's content words,
distractor candidates from other topics, optionally a "parrot" distractor
that re-uses the history's own words (high relevance, wrong knowledge), a
reference response that copies gold content words, and a generated-knowledge
string that is a noisy (or exact) copy of the gold text.
"""

from __future__ import annotations

import numpy as np

from .core import (
    CandidatePool,
    DialogueHistory,
    GeneratedKnowledge,
    KnowledgeCandidate,
    KnowledgeSource,
    Response,
    Turn,
    normalize_text,
)
from .data import DatasetRecord
from .training import TrainExample

TOPIC_WORDS: dict[str, tuple[str, ...]] = {
    "bowling": ("bowling", "pins", "lanes", "strike", "league", "ball"),
    "poodles": ("poodles", "breed", "dogs", "fur", "show", "agility"),
    "coffee": ("coffee", "beans", "roast", "brew", "espresso", "cup"),
    "cycling": ("cycling", "bike", "race", "wheels", "pedal", "tour"),
    "jazz": ("jazz", "music", "band", "notes", "swing", "horn"),
    "castles": ("castles", "stone", "moat", "towers", "kings", "walls"),
}

FUNCTION_WORDS: tuple[str, ...] = (
    "the", "a", "is", "are", "of", "and", "in", "they", "it", "very",
    "with", "about", "many", "people", "love", "old", "tell", "me", "more", "what",
)

TOPICS = tuple(TOPIC_WORDS)


def corpus_lines() -> list[str]:
    """Bigram-statistics corpus covering the whole word inventory."""
    lines = []
    for topic, words in TOPIC_WORDS.items():
        w = list(words)
        lines.append(f"the {w[0]} {w[1]} is very {w[2]}")
        lines.append(f"many people love {w[0]} and the {w[3]}")
        lines.append(f"old {w[4]} are in the {w[5]}")
        lines.append(f"tell me more about {w[0]}")
        lines.append(f"it is a {w[1]} of {w[2]} and {w[3]}")
        lines.append(f"what are the {w[4]} with the {w[5]}")
    lines.append("they are very old and many people love the")
    return lines


def vocabulary() -> set[str]:
    return {tok for line in corpus_lines() for tok in normalize_text(line)}


def _topic_sentence(rng: np.random.Generator, topic: str) -> str:
    # short sentences keep the copy source small, so per-token copy
    # probabilities stay high and likelihoods discriminate between candidates
    w = list(TOPIC_WORDS[topic])
    idx = rng.permutation(len(w))[:4]
    a, b, c, d = (w[i] for i in idx)
    forms = (
        f"{a} {b} of {c} {d}",
        f"{a} {b} and {c} {d}",
        f"old {a} {b} {c}",
        f"{a} {b} {c} {d}",
    )
    return forms[int(rng.integers(len(forms)))]


def _history(rng: np.random.Generator, topic: str) -> DialogueHistory:
    lead = TOPIC_WORDS[topic][0]
    other = TOPIC_WORDS[topic][1 + int(rng.integers(3))]
    openers = (
        f"tell me about {lead}",
        f"what is {lead}",
        f"love {lead} and {other}",
        f"more about {lead}",
    )
    turns = [Turn("apprentice", openers[int(rng.integers(len(openers)))])]
    if rng.random() < 0.3:
        turns.insert(0, Turn("wizard", f"many people love {lead}"))
    return DialogueHistory(tuple(turns), topic=topic)


def _parrot_text(rng: np.random.Generator, history: DialogueHistory) -> str:
    tokens = normalize_text(history.flat_text())
    picks = [tokens[int(rng.integers(len(tokens)))] for _ in range(4)]
    return " ".join(picks)


def _reference(rng: np.random.Generator, gold_text: str) -> str:
    content = [t for t in normalize_text(gold_text) if t not in FUNCTION_WORDS]
    if len(content) < 2:
        content = normalize_text(gold_text)
    picks = [content[int(rng.integers(len(content)))] for _ in range(3)]
    return " ".join(picks)


def _noisy_copy(rng: np.random.Generator, text: str, other_topic: str) -> str:
    """Token-level noise: drop or swap a few gold tokens for another topic's."""
    tokens = normalize_text(text)
    foreign = TOPIC_WORDS[other_topic]
    out = []
    for tok in tokens:
        roll = rng.random()
        if roll < 0.15:
            continue
        if roll < 0.3:
            out.append(foreign[int(rng.integers(len(foreign)))])
        else:
            out.append(tok)
    if not out:
        out = [foreign[0]]
    return " ".join(out)


def make_records(
    n: int,
    seed: int,
    *,
    id_prefix: str = "rec",
    pool_size: int = 5,
    parrot_fraction: float = 0.5,
    exact_g_fraction: float = 0.3,
) -> list[DatasetRecord]:
    """Deterministic record batch.

    ``parrot_fraction`` of the records carry a history-parroting distractor;
    ``exact_g_fraction`` of the generated-knowledge strings equal the gold
    text verbatim, the rest are noisy copies.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        topic = TOPICS[int(rng.integers(len(TOPICS)))]
        history = _history(rng, topic)
        gold_text = _topic_sentence(rng, topic)

        other_topics = [t for t in TOPICS if t != topic]
        texts = [gold_text]
        n_foreign = pool_size - 1
        has_parrot = rng.random() < parrot_fraction
        if has_parrot:
            n_foreign -= 1
        for _ in range(n_foreign):
            texts.append(
                _topic_sentence(rng, other_topics[int(rng.integers(len(other_topics)))])
            )
        if has_parrot:
            texts.append(_parrot_text(rng, history))

        order = rng.permutation(len(texts))
        candidates = tuple(
            KnowledgeCandidate(f"{id_prefix}-{i:04d}-c{pos}", texts[j])
            for pos, j in enumerate(order)
        )
        gold_id = candidates[int(np.where(order == 0)[0][0])].id

        if rng.random() < exact_g_fraction:
            g_text = gold_text
        else:
            g_text = _noisy_copy(rng, gold_text, other_topics[int(rng.integers(len(other_topics)))])

        records.append(
            DatasetRecord(
                id=f"{id_prefix}-{i:04d}",
                history=history,
                candidates=CandidatePool(candidates, gold_id),
                generated_knowledge=GeneratedKnowledge(g_text, KnowledgeSource.DATASET),
                reference_response=_reference(rng, gold_text),
            )
        )
    return records


def record_to_train_example(record: DatasetRecord) -> TrainExample:
    return TrainExample(
        history=record.history,
        pool=record.candidates,
        reference=Response(tuple(normalize_text(record.reference_response))),
    )


def make_distractors(
    history: DialogueHistory, count: int, rng: np.random.Generator, id_prefix: str
) -> list[KnowledgeCandidate]:
    """Distractor candidates built from the history's own surface tokens."""
    tokens = normalize_text(history.flat_text())
    out = []
    for i in range(count):
        picks = [tokens[int(rng.integers(len(tokens)))] for _ in range(max(4, len(tokens)))]
        out.append(KnowledgeCandidate(f"{id_prefix}-d{i}", " ".join(picks)))
    return out
