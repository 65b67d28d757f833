"""Synthetic corpus generation, flag metrics, and the experiment report type."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, Example, LabelEntry, LabelSpace

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    k: int = 10
    n: int = 1000
    vocab_per_class: int = 50
    shared_vocab: int = 200
    tokens_per_text: int = 20
    class_token_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.k, self.n, self.vocab_per_class, self.shared_vocab, self.tokens_per_text) < 1:
            raise ValueError("all corpus sizes must be positive")
        if not 0.0 < self.class_token_probability < 1.0:
            raise ValueError("class_token_probability must be in (0, 1)")

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticCorpusSpec":
        return cls(**{f: obj[f] for f in (
            "k", "n", "vocab_per_class", "shared_vocab", "tokens_per_text",
            "class_token_probability", "seed") if f in obj})


def generate_corpus(spec: SyntheticCorpusSpec) -> Dataset:
    """Generate a labeled synthetic corpus.

    Each example samples a class, then draws tokens_per_text tokens: from
    the class's private vocabulary with class_token_probability, else from
    the shared vocabulary.  Deterministic under the seed.
    """
    rng = np.random.default_rng(spec.seed)
    classes = tuple(f"class{c:02d}" for c in range(spec.k))
    space = LabelSpace(classes)
    width = len(str(spec.n - 1))
    examples = []
    for i in range(spec.n):
        c = int(rng.integers(0, spec.k))
        tokens = []
        for _ in range(spec.tokens_per_text):
            if rng.random() < spec.class_token_probability:
                tokens.append(f"c{c}t{int(rng.integers(0, spec.vocab_per_class))}")
            else:
                tokens.append(f"sh{int(rng.integers(0, spec.shared_vocab))}")
        examples.append(
            Example(
                id=f"ex{i:0{width}d}",
                text=" ".join(tokens),
                label=classes[c],
                label_history=(LabelEntry(label=classes[c], source="initial", ts=0),),
            )
        )
    prov = f"synthetic corpus k={spec.k} n={spec.n} seed={spec.seed}"
    return Dataset(space, tuple(examples), provenance=prov)


def flag_metrics(flags: Sequence, data: Dataset) -> tuple[float, float]:
    """Precision/recall of flags against the injected-noise mask.

    Noisy set = examples whose label differs from oracle_label.  Empty
    flag set has precision 1.0; empty noisy set has recall 1.0 (clean-data
    fixed point yields a clean report instead of a division error).
    """
    noisy = set()
    for ex in data.examples:
        if ex.oracle_label is None:
            raise ValueError(f"example {ex.id!r} carries no oracle label")
        if ex.label != ex.oracle_label:
            noisy.add(ex.id)
    flagged = {f.example_id for f in flags}
    hits = len(flagged & noisy)
    precision = hits / len(flagged) if flagged else 1.0
    recall = hits / len(noisy) if noisy else 1.0
    return precision, recall


@dataclass
class ExperimentReport:
    config: dict
    dataset_stats: dict  # n, k, injected_noise_count, flags_train, flags_test, flags_total
    flag_metrics: dict  # precision, recall (vs oracle noise mask), or None fields
    accuracy: dict  # {"model_a"|"model_b"|"model_c": {"corrected_test": float, "clean_test": float|None}}
    injection_mode: str = "in_sample"
    format_version: int = REPORT_FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "config": self.config,
            "dataset_stats": self.dataset_stats,
            "flag_metrics": self.flag_metrics,
            "accuracy": self.accuracy,
            "injection_mode": self.injection_mode,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentReport":
        return cls(
            config=obj["config"],
            dataset_stats=obj["dataset_stats"],
            flag_metrics=obj["flag_metrics"],
            accuracy=obj["accuracy"],
            injection_mode=obj["injection_mode"],
            format_version=obj["format_version"],
        )


def format_report(report: ExperimentReport) -> str:
    """Human-readable table of the accuracy ladder and flag metrics."""
    lines = []
    st = report.dataset_stats
    lines.append(f"dataset: n={st['n']} k={st['k']} injected_noise={st['injected_noise_count']}")
    lines.append(
        f"flags: train={st['flags_train']} test={st['flags_test']} total={st['flags_total']}"
    )
    fm = report.flag_metrics
    if fm.get("precision") is not None:
        lines.append(f"flag precision={fm['precision']:.4f} recall={fm['recall']:.4f}")
    lines.append(f"injection_mode: {report.injection_mode}")
    lines.append(f"{'model':<10}{'corrected_test':>16}{'clean_test':>14}")
    for name in ("model_a", "model_b", "model_c"):
        acc = report.accuracy[name]
        clean = f"{acc['clean_test']:.4f}" if acc.get("clean_test") is not None else "-"
        lines.append(f"{name:<10}{acc['corrected_test']:>16.4f}{clean:>14}")
    return "\n".join(lines) + "\n"
