#!/usr/bin/env python3
"""Regenerate the bundled corpus and JSONL fixtures.

Everything here is deterministic; re-running must reproduce the committed
files byte for byte.
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from noisykag.data import save_dataset  # noqa: E402
from noisykag.synth import corpus_lines, make_records  # noqa: E402


def main() -> None:
    corpus = ROOT / "src" / "noisykag" / "resources" / "corpus.txt"
    corpus.write_text("\n".join(corpus_lines()) + "\n", encoding="utf-8")
    print(f"wrote {corpus}")

    fixtures = ROOT / "fixtures"
    fixtures.mkdir(exist_ok=True)

    sets = {
        "train.jsonl": make_records(
            200, seed=4207, id_prefix="train", parrot_fraction=0.4, exact_g_fraction=0.3
        ),
        "eval.jsonl": make_records(
            100, seed=9101, id_prefix="eval", parrot_fraction=0.4, exact_g_fraction=0.3
        ),
        "valid.jsonl": make_records(
            60, seed=7303, id_prefix="valid", parrot_fraction=0.4, exact_g_fraction=0.3
        ),
        "reweigh.jsonl": make_records(
            40, seed=5505, id_prefix="reweigh", parrot_fraction=1.0, exact_g_fraction=1.0
        ),
    }
    for name, records in sets.items():
        path = fixtures / name
        save_dataset(records, path)
        print(f"wrote {path} ({len(records)} records)")


if __name__ == "__main__":
    main()
