"""End-to-end correction loop.

Stages: split -> train baseline (Model-A) -> flag suspect labels -> build
relabel queue -> collect corrections -> merge -> retrain on corrected
labels (Model-B) -> train the correction-aware model with the baseline's
predicted one-hot appended to its input (Model-C) -> evaluate the ladder.

Stage artifacts persist to a run directory and re-running resumes from
the last stage whose artifact is present with a matching checksum.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import classifier as clf
from .classifier import Model, Prediction, TrainConfig
from .data import (
    CorrectionRecord,
    DataError,
    Dataset,
    merge_corrections,
    read_corrections,
    save_jsonl,
    load_jsonl,
    split,
    write_corrections,
)
from .features import (
    FeaturizerConfig,
    SparseVector,
    featurize,
    featurize_matrix,
    inject_prediction,
    inject_prediction_matrix,
)
from .harness import ExperimentReport, flag_metrics
from .oracle import OracleConfig, relabel


class LoopError(ValueError):
    pass


@dataclass(frozen=True)
class FlagRecord:
    example_id: str
    previous_label: str
    predicted_label: str
    predicted_prob: float
    margin: float
    reason: str  # disagreement | low_margin

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.example_id,
                "prev": self.previous_label,
                "pred": self.predicted_label,
                "prob": self.predicted_prob,
                "margin": self.margin,
                "reason": self.reason,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "FlagRecord":
        o = json.loads(line)
        return cls(
            example_id=o["id"],
            previous_label=o["prev"],
            predicted_label=o["pred"],
            predicted_prob=o["prob"],
            margin=o["margin"],
            reason=o["reason"],
        )


@dataclass
class QueueItem:
    example_id: str
    text: str
    ref_prev_label: str
    ref_pred_label: str
    ref_pred_prob: float
    status: str = "pending"  # pending | done | skipped

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.example_id,
                "text": self.text,
                "ref_prev_label": self.ref_prev_label,
                "ref_pred_label": self.ref_pred_label,
                "ref_pred_prob": self.ref_pred_prob,
                "status": self.status,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "QueueItem":
        o = json.loads(line)
        return cls(
            example_id=o["id"],
            text=o["text"],
            ref_prev_label=o["ref_prev_label"],
            ref_pred_label=o["ref_pred_label"],
            ref_pred_prob=o["ref_pred_prob"],
            status=o.get("status", "pending"),
        )


@dataclass
class RelabelQueue:
    items: list[QueueItem]

    def __post_init__(self):
        ids = [it.example_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise LoopError("queue item ids must be unique")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for it in self.items:
                fh.write(it.to_json())
                fh.write("\n")

    @classmethod
    def load(cls, path) -> "RelabelQueue":
        items = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    items.append(QueueItem.from_json(line))
        return cls(items)


@dataclass(frozen=True)
class LoopConfig:
    featurizer: FeaturizerConfig = FeaturizerConfig()
    train_a: TrainConfig = TrainConfig()
    train_b: TrainConfig = TrainConfig()
    train_c: TrainConfig = TrainConfig()
    flag_scope: str = "train_and_test"  # train_only | train_and_test
    margin_threshold: Optional[float] = None
    injection_mode: str = "in_sample"  # in_sample | cross_fit
    cross_fit_folds: int = 5
    injection_scale: float = 1.0

    def __post_init__(self):
        if self.flag_scope not in ("train_only", "train_and_test"):
            raise LoopError(f"unknown flag_scope {self.flag_scope!r}")
        if self.margin_threshold is not None and not 0.0 < self.margin_threshold < 1.0:
            raise LoopError("margin_threshold must be in (0, 1)")
        if self.injection_mode not in ("in_sample", "cross_fit"):
            raise LoopError(f"unknown injection_mode {self.injection_mode!r}")
        if self.injection_mode == "cross_fit" and self.cross_fit_folds < 2:
            raise LoopError("cross_fit needs at least 2 folds")


def _check_model(model: Model, data: Dataset, feat: FeaturizerConfig, kind: str) -> None:
    if model.kind != kind:
        raise LoopError(f"expected a {kind} model, got {model.kind}")
    if model.label_space_fingerprint != data.label_space.fingerprint():
        raise LoopError("label-space fingerprint mismatch")
    if model.featurizer_fingerprint != feat.fingerprint():
        raise LoopError("featurizer fingerprint mismatch")


def _dataset_matrix(data: Dataset, feat: FeaturizerConfig) -> sp.csr_matrix:
    return featurize_matrix([ex.text for ex in data.examples], feat)


def train_model_a(train: Dataset, config: LoopConfig, x: Optional[sp.csr_matrix] = None) -> Model:
    """Train the baseline (plain) model; early stopping is mandatory here."""
    if config.train_a.early_stop_fraction <= 0:
        raise LoopError(
            "baseline training requires early_stop_fraction > 0 "
            "(overfitting the noisy labels would leave nothing to flag)"
        )
    if x is None:
        x = _dataset_matrix(train, config.featurizer)
    return clf.train(
        x,
        train.labels_as_indices(),
        train.label_space.k,
        config.train_a,
        kind="plain",
        label_space_fingerprint=train.label_space.fingerprint(),
        featurizer_fingerprint=config.featurizer.fingerprint(),
    )


def flag_disagreements(
    model: Model, data: Dataset, feat: FeaturizerConfig, x: Optional[sp.csr_matrix] = None
) -> list[FlagRecord]:
    """Flag every example whose predicted label differs from its stored label."""
    _check_model(model, data, feat, "plain")
    if x is None:
        x = _dataset_matrix(data, feat)
    labels, probs, margins = clf.predict_batch(model, x)
    classes = data.label_space.classes
    flags = []
    for i, ex in enumerate(data.examples):
        pred = classes[labels[i]]
        if pred != ex.label:
            flags.append(
                FlagRecord(
                    example_id=ex.id,
                    previous_label=ex.label,
                    predicted_label=pred,
                    predicted_prob=float(probs[i]),
                    margin=float(margins[i]),
                    reason="disagreement",
                )
            )
    return flags


def flag_low_margin(
    model: Model,
    data: Dataset,
    feat: FeaturizerConfig,
    threshold: float,
    x: Optional[sp.csr_matrix] = None,
) -> list[FlagRecord]:
    """Flag every example whose top1-top2 probability gap is below threshold."""
    if not 0.0 < threshold < 1.0:
        raise LoopError("threshold must be in (0, 1)")
    _check_model(model, data, feat, "plain")
    if x is None:
        x = _dataset_matrix(data, feat)
    labels, probs, margins = clf.predict_batch(model, x)
    classes = data.label_space.classes
    flags = []
    for i, ex in enumerate(data.examples):
        if margins[i] < threshold:
            flags.append(
                FlagRecord(
                    example_id=ex.id,
                    previous_label=ex.label,
                    predicted_label=classes[labels[i]],
                    predicted_prob=float(probs[i]),
                    margin=float(margins[i]),
                    reason="low_margin",
                )
            )
    return flags


def build_relabel_queue(flags: Sequence[FlagRecord], data: Dataset) -> RelabelQueue:
    """Queue items in flag order; duplicate ids collapse, disagreement wins."""
    chosen: dict[str, FlagRecord] = {}
    order: list[str] = []
    for f in flags:
        if f.example_id not in chosen:
            chosen[f.example_id] = f
            order.append(f.example_id)
        elif chosen[f.example_id].reason != "disagreement" and f.reason == "disagreement":
            chosen[f.example_id] = f
    items = []
    by_id = {ex.id: ex for ex in data.examples}
    for eid in order:
        f = chosen[eid]
        if eid not in by_id:
            raise LoopError(f"flag references unknown example id {eid!r}")
        ex = by_id[eid]
        items.append(
            QueueItem(
                example_id=eid,
                text=ex.text,
                ref_prev_label=ex.label,
                ref_pred_label=f.predicted_label,
                ref_pred_prob=f.predicted_prob,
            )
        )
    return RelabelQueue(items)


def train_model_b(merged_train: Dataset, config: LoopConfig, x: Optional[sp.csr_matrix] = None) -> Model:
    """Retrain a plain model on the corrected training labels."""
    if x is None:
        x = _dataset_matrix(merged_train, config.featurizer)
    return clf.train(
        x,
        merged_train.labels_as_indices(),
        merged_train.label_space.k,
        config.train_b,
        kind="plain",
        label_space_fingerprint=merged_train.label_space.fingerprint(),
        featurizer_fingerprint=config.featurizer.fingerprint(),
    )


def _injection_labels(
    merged_train: Dataset, model_a: Model, config: LoopConfig, x: sp.csr_matrix
) -> np.ndarray:
    """Baseline predictions used as the injected one-hot for each train row."""
    if config.injection_mode == "in_sample":
        labels, _, _ = clf.predict_batch(model_a, x)
        return labels
    # cross_fit: out-of-fold baseline variants, so injected predictions are
    # not optimistically accurate on the rows they were trained on
    n = x.shape[0]
    y = merged_train.labels_as_indices()
    folds = np.arange(n) % config.cross_fit_folds
    out = np.zeros(n, dtype=np.int64)
    for f in range(config.cross_fit_folds):
        hold = folds == f
        fit = ~hold
        fold_model = clf.train(
            x[fit],
            y[fit],
            merged_train.label_space.k,
            config.train_a,
            kind="plain",
            label_space_fingerprint=model_a.label_space_fingerprint,
            featurizer_fingerprint=model_a.featurizer_fingerprint,
        )
        labels, _, _ = clf.predict_batch(fold_model, x[hold])
        out[hold] = labels
    return out


def train_model_c(
    merged_train: Dataset,
    model_a: Model,
    config: LoopConfig,
    x: Optional[sp.csr_matrix] = None,
) -> Model:
    """Train the injected-kind model on corrected labels with the baseline's
    predicted one-hot appended to each input."""
    _check_model(model_a, merged_train, config.featurizer, "plain")
    if x is None:
        x = _dataset_matrix(merged_train, config.featurizer)
    pred = _injection_labels(merged_train, model_a, config, x)
    k = merged_train.label_space.k
    x_inj = inject_prediction_matrix(x, pred, k, config.injection_scale)
    return clf.train(
        x_inj,
        merged_train.labels_as_indices(),
        k,
        config.train_c,
        kind="injected",
        label_space_fingerprint=merged_train.label_space.fingerprint(),
        featurizer_fingerprint=config.featurizer.fingerprint(),
    )


def infer(
    model_a: Model,
    model_c: Model,
    text: str,
    featurizer: FeaturizerConfig,
    injection_scale: float = 1.0,
) -> Prediction:
    """Two-stage inference: baseline predicts, its one-hot feeds the injected model.

    Never consults any gold label.
    """
    if model_a.kind != "plain":
        raise LoopError(f"stage-1 model must be plain, got {model_a.kind}")
    if model_c.kind != "injected":
        raise LoopError(f"stage-2 model must be injected, got {model_c.kind}")
    if model_a.featurizer_fingerprint != featurizer.fingerprint():
        raise LoopError("featurizer fingerprint mismatch")
    if model_a.label_space_fingerprint != model_c.label_space_fingerprint:
        raise LoopError("label-space fingerprint mismatch between stages")
    feats = featurize(text, featurizer)
    stage1 = clf.predict_proba(model_a, feats)
    k = model_c.dim - model_a.dim
    injected = inject_prediction(feats, stage1.label, k, injection_scale)
    return clf.predict_proba(model_c, injected)


def infer_batch(
    model_a: Model,
    model_c: Model,
    x: sp.csr_matrix,
    injection_scale: float = 1.0,
) -> np.ndarray:
    """Two-stage inference labels for every row of x (plain features)."""
    if model_a.kind != "plain" or model_c.kind != "injected":
        raise LoopError("need (plain, injected) model pair")
    k = model_c.dim - model_a.dim
    stage1, _, _ = clf.predict_batch(model_a, x)
    x_inj = inject_prediction_matrix(x, stage1, k, injection_scale)
    labels, _, _ = clf.predict_batch(model_c, x_inj)
    return labels


# --- run directory orchestration ---------------------------------------

ARTIFACTS = (
    "model_a.bin",
    "flags.jsonl",
    "queue.jsonl",
    "corrections.jsonl",
    "merged.jsonl",
    "model_b.bin",
    "model_c.bin",
    "report.json",
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunDir:
    """Tracks stage artifacts and their checksums for resumable runs."""

    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        self.state_path = os.path.join(self.root, "checksums.json")
        if os.path.exists(self.state_path):
            with open(self.state_path, "r", encoding="utf-8") as fh:
                self.checksums = json.load(fh)
        else:
            self.checksums = {}

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def complete(self, name: str) -> bool:
        p = self.path(name)
        return (
            name in self.checksums
            and os.path.exists(p)
            and _sha256(p) == self.checksums[name]
        )

    def record(self, name: str) -> None:
        self.checksums[name] = _sha256(self.path(name))
        with open(self.state_path, "w", encoding="utf-8") as fh:
            json.dump(self.checksums, fh, sort_keys=True, indent=2)


def run_full_loop(
    pool: Dataset,
    oracle_config: OracleConfig,
    config: LoopConfig,
    run_dir,
    test_fraction: float,
    split_seed: int,
    config_echo: Optional[dict] = None,
) -> ExperimentReport:
    """Execute the full loop on a pool that already carries any injected noise.

    Corrections come from the simulated annotator (for a human annotation
    session, drive the stages individually via the CLI and the annotation
    service instead).  Stage artifacts land in run_dir; wall-clock timings
    go to timings.json there, kept out of report.json so reports are
    byte-reproducible.
    """
    rd = RunDir(run_dir)
    timings: dict[str, float] = {}
    t0 = time.monotonic()

    def mark(stage: str) -> None:
        nonlocal t0
        now = time.monotonic()
        timings[stage] = now - t0
        t0 = now

    has_oracle_labels = all(ex.oracle_label is not None for ex in pool.examples)
    pool_index = {ex.id: i for i, ex in enumerate(pool.examples)}
    train_ds, test_ds = split(pool, test_fraction, split_seed)
    feat = config.featurizer
    x_train = _dataset_matrix(train_ds, feat)
    x_test = _dataset_matrix(test_ds, feat)
    mark("featurize")

    if rd.complete("model_a.bin"):
        model_a = clf.load_model(rd.path("model_a.bin"))
    else:
        model_a = train_model_a(train_ds, config, x=x_train)
        clf.save_model(model_a, rd.path("model_a.bin"))
        rd.record("model_a.bin")
    mark("train_a")

    if rd.complete("flags.jsonl"):
        with open(rd.path("flags.jsonl"), "r", encoding="utf-8") as fh:
            all_flags = [FlagRecord.from_json(l) for l in fh if l.strip()]
        train_ids = {ex.id for ex in train_ds.examples}
        flags_train = [f for f in all_flags if f.example_id in train_ids]
        flags_test = [f for f in all_flags if f.example_id not in train_ids]
    else:
        flags_train = flag_disagreements(model_a, train_ds, feat, x=x_train)
        if config.flag_scope == "train_and_test":
            flags_test = flag_disagreements(model_a, test_ds, feat, x=x_test)
        else:
            flags_test = []
        if config.margin_threshold is not None:
            flags_train += flag_low_margin(model_a, train_ds, feat, config.margin_threshold, x=x_train)
            if config.flag_scope == "train_and_test":
                flags_test += flag_low_margin(model_a, test_ds, feat, config.margin_threshold, x=x_test)
        all_flags = flags_train + flags_test
        with open(rd.path("flags.jsonl"), "w", encoding="utf-8") as fh:
            for f in all_flags:
                fh.write(f.to_json())
                fh.write("\n")
        rd.record("flags.jsonl")
    mark("flag")

    if rd.complete("queue.jsonl"):
        queue = RelabelQueue.load(rd.path("queue.jsonl"))
    else:
        queue = build_relabel_queue(all_flags, pool)
        queue.save(rd.path("queue.jsonl"))
        rd.record("queue.jsonl")
    mark("queue")

    if rd.complete("corrections.jsonl"):
        corrections = read_corrections(rd.path("corrections.jsonl"))
    else:
        corrections = collect_oracle_corrections(queue, pool, oracle_config, pool_index)
        write_corrections(corrections, rd.path("corrections.jsonl"))
        rd.record("corrections.jsonl")
    mark("corrections")

    if rd.complete("merged.jsonl"):
        merged_pool = load_jsonl(rd.path("merged.jsonl"), label_space=pool.label_space)
    else:
        merged_pool = merge_corrections(pool, corrections)
        save_jsonl(merged_pool, rd.path("merged.jsonl"))
        rd.record("merged.jsonl")
    if len(merged_pool) != len(pool):
        raise LoopError("merge changed dataset cardinality")
    train_ids = {ex.id for ex in train_ds.examples}
    merged_by_id = {ex.id: ex for ex in merged_pool.examples}
    merged_train = Dataset(
        pool.label_space,
        tuple(merged_by_id[ex.id] for ex in train_ds.examples),
        provenance=train_ds.provenance,
    )
    merged_test = Dataset(
        pool.label_space,
        tuple(merged_by_id[ex.id] for ex in test_ds.examples),
        provenance=test_ds.provenance,
    )
    mark("merge")

    if rd.complete("model_b.bin"):
        model_b = clf.load_model(rd.path("model_b.bin"))
    else:
        model_b = train_model_b(merged_train, config, x=x_train)
        clf.save_model(model_b, rd.path("model_b.bin"))
        rd.record("model_b.bin")
    mark("train_b")

    if rd.complete("model_c.bin"):
        model_c = clf.load_model(rd.path("model_c.bin"))
    else:
        model_c = train_model_c(merged_train, model_a, config, x=x_train)
        clf.save_model(model_c, rd.path("model_c.bin"))
        rd.record("model_c.bin")
    mark("train_c")

    y_test_corrected = merged_test.labels_as_indices()
    acc_a = clf.evaluate(model_a, x_test, y_test_corrected)
    acc_b = clf.evaluate(model_b, x_test, y_test_corrected)
    c_labels = infer_batch(model_a, model_c, x_test, config.injection_scale)
    acc_c = float(np.mean(c_labels == y_test_corrected))

    accuracy = {
        "model_a": {"corrected_test": acc_a, "clean_test": None},
        "model_b": {"corrected_test": acc_b, "clean_test": None},
        "model_c": {"corrected_test": acc_c, "clean_test": None},
    }
    metrics = {"precision": None, "recall": None}
    noise_count = 0
    if has_oracle_labels:
        idx = {c: i for i, c in enumerate(pool.label_space.classes)}
        y_clean = np.array([idx[ex.oracle_label] for ex in test_ds.examples], dtype=np.int64)
        accuracy["model_a"]["clean_test"] = clf.evaluate(model_a, x_test, y_clean)
        accuracy["model_b"]["clean_test"] = clf.evaluate(model_b, x_test, y_clean)
        accuracy["model_c"]["clean_test"] = float(np.mean(c_labels == y_clean))
        precision, recall = flag_metrics(all_flags, pool)
        metrics = {"precision": precision, "recall": recall}
        noise_count = sum(1 for ex in pool.examples if ex.label != ex.oracle_label)
    mark("evaluate")

    report = ExperimentReport(
        config=config_echo or {},
        dataset_stats={
            "n": len(pool),
            "k": pool.label_space.k,
            "injected_noise_count": noise_count,
            "flags_train": len(flags_train),
            "flags_test": len(flags_test),
            "flags_total": len(all_flags),
            "corrections": len(corrections),
            "merged_size": len(merged_pool),
        },
        flag_metrics=metrics,
        accuracy=accuracy,
        injection_mode=config.injection_mode,
    )
    with open(rd.path("report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    rd.record("report.json")
    with open(rd.path("timings.json"), "w", encoding="utf-8") as fh:
        json.dump(timings, fh, sort_keys=True, indent=2)
    return report


def collect_oracle_corrections(
    queue: RelabelQueue,
    pool: Dataset,
    oracle_config: OracleConfig,
    pool_index: Optional[dict[str, int]] = None,
) -> list[CorrectionRecord]:
    """Answer every queue item with the simulated annotator.

    Timestamps are a logical clock (1-based queue position) so runs are
    byte-deterministic.
    """
    if pool_index is None:
        pool_index = {ex.id: i for i, ex in enumerate(pool.examples)}
    by_id = {ex.id: ex for ex in pool.examples}
    corrections = []
    for pos, item in enumerate(queue.items, start=1):
        ex = by_id[item.example_id]
        if ex.oracle_label is None:
            raise LoopError(f"example {ex.id!r} has no clean label for the oracle")
        corrections.append(
            relabel(
                item,
                ex.oracle_label,
                pool.label_space,
                oracle_config,
                draw_index=pool_index[item.example_id],
                ts=pos,
            )
        )
    return corrections
