"""JSONL dataset ingestion.

One JSON object per line; field names are fixed lower_snake_case and unknown
fields are rejected to catch typos.  Validation is fail-fast and every error
carries the offending line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import (
    CandidatePool,
    DialogueHistory,
    GeneratedKnowledge,
    KnowledgeCandidate,
    KnowledgeSource,
    Turn,
    normalize_text,
)

RECORD_FIELDS = {
    "id",
    "history",
    "topic",
    "candidates",
    "generated_knowledge",
    "reference_response",
    "gold_knowledge_id",
}
TURN_FIELDS = {"speaker", "text"}
CANDIDATE_FIELDS = {"id", "text"}


class DatasetError(Exception):
    """Malformed dataset file; message includes path and line number."""


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    history: DialogueHistory
    candidates: CandidatePool
    generated_knowledge: GeneratedKnowledge | None
    reference_response: str

    @property
    def gold_knowledge_id(self) -> str | None:
        return self.candidates.gold_id

    def to_json_obj(self) -> dict:
        obj: dict = {
            "id": self.id,
            "history": [
                {"speaker": t.speaker.value, "text": t.text} for t in self.history.turns
            ],
            "candidates": [
                {"id": c.id, "text": c.text} for c in self.candidates.candidates
            ],
            "reference_response": self.reference_response,
        }
        if self.history.topic is not None:
            obj["topic"] = self.history.topic
        if self.generated_knowledge is not None:
            obj["generated_knowledge"] = self.generated_knowledge.text
        if self.candidates.gold_id is not None:
            obj["gold_knowledge_id"] = self.candidates.gold_id
        return obj


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def parse_record(obj: dict) -> DatasetRecord:
    """Validate one decoded JSON object against the record schema."""
    _require(isinstance(obj, dict), "record must be a JSON object")
    unknown = set(obj) - RECORD_FIELDS
    _require(not unknown, f"unknown fields: {sorted(unknown)}")
    for name in ("id", "history", "candidates", "reference_response"):
        _require(name in obj, f"missing required field '{name}'")
    _require(isinstance(obj["id"], str) and obj["id"], "'id' must be a non-empty string")

    _require(isinstance(obj["history"], list) and obj["history"], "'history' must be a non-empty list")
    turns = []
    for i, t in enumerate(obj["history"]):
        _require(isinstance(t, dict), f"history[{i}] must be an object")
        unknown = set(t) - TURN_FIELDS
        _require(not unknown, f"history[{i}] has unknown fields: {sorted(unknown)}")
        _require(
            isinstance(t.get("speaker"), str) and isinstance(t.get("text"), str),
            f"history[{i}] needs string 'speaker' and 'text'",
        )
        turns.append(Turn(t["speaker"], t["text"]))
    topic = obj.get("topic")
    _require(topic is None or isinstance(topic, str), "'topic' must be a string")
    history = DialogueHistory(tuple(turns), topic)

    _require(
        isinstance(obj["candidates"], list) and obj["candidates"],
        "'candidates' must be a non-empty list",
    )
    cands = []
    for i, c in enumerate(obj["candidates"]):
        _require(isinstance(c, dict), f"candidates[{i}] must be an object")
        unknown = set(c) - CANDIDATE_FIELDS
        _require(not unknown, f"candidates[{i}] has unknown fields: {sorted(unknown)}")
        _require(
            isinstance(c.get("id"), str) and isinstance(c.get("text"), str),
            f"candidates[{i}] needs string 'id' and 'text'",
        )
        cands.append(KnowledgeCandidate(c["id"], c["text"]))
    gold = obj.get("gold_knowledge_id")
    _require(gold is None or isinstance(gold, str), "'gold_knowledge_id' must be a string")
    pool = CandidatePool(tuple(cands), gold)

    g_text = obj.get("generated_knowledge")
    _require(
        g_text is None or (isinstance(g_text, str) and g_text.strip()),
        "'generated_knowledge' must be a non-empty string when present",
    )
    generated = (
        GeneratedKnowledge(g_text, KnowledgeSource.DATASET) if g_text is not None else None
    )

    reference = obj["reference_response"]
    _require(isinstance(reference, str), "'reference_response' must be a string")
    _require(
        bool(normalize_text(reference)),
        "'reference_response' must contain at least one token",
    )

    return DatasetRecord(obj["id"], history, pool, generated, reference)


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    """Parse and validate every record; duplicate ids and schema violations
    fail fast with their line numbers."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file does not exist")
    records: list[DatasetRecord] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            try:
                record = parse_record(obj)
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
            if record.id in seen:
                raise DatasetError(
                    f"{path}:{lineno}: duplicate id {record.id!r} (first seen on line {seen[record.id]})"
                )
            seen[record.id] = lineno
            records.append(record)
    return records


def save_dataset(records: list[DatasetRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_obj(), ensure_ascii=False, sort_keys=True) + "\n")
