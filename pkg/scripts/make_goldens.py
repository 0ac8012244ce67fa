#!/usr/bin/env python3
"""Freeze golden files for the reproducibility tests.

Run after any change to the fixtures, the toy backends, or the training
path; the acceptance suite compares byte-for-byte against these.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from noisykag.core import HyperParams  # noqa: E402
from noisykag.data import load_dataset  # noqa: E402
from noisykag.evaluation import (  # noqa: E402
    RunConfig,
    build_backends,
    perturbation_benchmark,
    report_json,
)
from noisykag.synth import record_to_train_example  # noqa: E402
from noisykag.training import TrainConfig, train  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"

REFERENCE_TRAIN = TrainConfig(
    learning_rate=0.05, epochs=200, k=4, noisy=False,
    hyper=HyperParams(seed=42), init_scale=1.0,
)


def main() -> None:
    GOLDEN.mkdir(exist_ok=True)
    config = RunConfig(hyper=HyperParams(seed=42), train=REFERENCE_TRAIN)
    train_records = load_dataset(ROOT / "fixtures" / "train.jsonl")
    eval_records = load_dataset(ROOT / "fixtures" / "eval.jsonl")

    encoder, generator = build_backends(config)
    examples = [record_to_train_example(r) for r in train_records]
    report = train(examples, REFERENCE_TRAIN, encoder, generator)
    curve_path = GOLDEN / "train_curve.json"
    curve_path.write_text(
        json.dumps(
            {
                "seed": 42,
                "learning_rate": 0.05,
                "epochs": 200,
                "k": 4,
                "noisy": False,
                "init_scale": 1.0,
                "per_epoch_nll": list(report.per_epoch_nll),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {curve_path}  (nll {report.per_epoch_nll[0]:.4f} -> {report.per_epoch_nll[-1]:.4f})")

    encoder, generator = build_backends(config)
    perturb = perturbation_benchmark(train_records, eval_records, config, encoder, generator)
    perturb_path = GOLDEN / "perturb_report.json"
    perturb_path.write_text(report_json(perturb), encoding="utf-8")
    print(f"wrote {perturb_path}")
    print("  delta:", perturb["delta"])


if __name__ == "__main__":
    main()
