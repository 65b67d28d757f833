"""Dataset model: JSONL ingestion, splitting, synthetic noise, correction merging.

All operations are pure: they return new Dataset values and never mutate
their inputs.  JSONL (one object per line, UTF-8) is the canonical on-disk
format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from hashlib import blake2b
from typing import Iterable, Optional, Sequence

import numpy as np

VALID_SOURCES = ("initial", "oracle", "human")


class DataError(ValueError):
    """Raised for malformed files, duplicate ids, unknown labels, etc."""


@dataclass(frozen=True)
class LabelSpace:
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise DataError("label space needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise DataError("class names must be unique")
        if any(not c for c in self.classes):
            raise DataError("class names must be non-empty")

    @property
    def k(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise DataError(f"label {name!r} not in label space") from None

    def __contains__(self, name: str) -> bool:
        return name in self.classes

    def fingerprint(self) -> str:
        payload = json.dumps(list(self.classes), ensure_ascii=False)
        return blake2b(payload.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class LabelEntry:
    label: str
    source: str  # initial | oracle | human
    ts: int


@dataclass(frozen=True)
class Example:
    id: str
    text: str
    label: str
    label_history: tuple[LabelEntry, ...]
    oracle_label: Optional[str] = None

    def __post_init__(self):
        if not self.text:
            raise DataError(f"example {self.id!r} has empty text")
        if not self.label_history:
            raise DataError(f"example {self.id!r} has empty label history")
        if self.label_history[0].source != "initial":
            raise DataError(f"example {self.id!r}: first history entry must be 'initial'")
        if self.label != self.label_history[-1].label:
            raise DataError(f"example {self.id!r}: label does not match last history entry")


@dataclass(frozen=True)
class Dataset:
    label_space: LabelSpace
    examples: tuple[Example, ...]
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DataError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)
            if ex.label not in self.label_space:
                raise DataError(f"example {ex.id!r}: label {ex.label!r} not in label space")

    def __len__(self) -> int:
        return len(self.examples)

    def by_id(self, example_id: str) -> Example:
        for ex in self.examples:
            if ex.id == example_id:
                return ex
        raise DataError(f"unknown example id {example_id!r}")

    def labels_as_indices(self) -> np.ndarray:
        idx = {c: i for i, c in enumerate(self.label_space.classes)}
        return np.array([idx[ex.label] for ex in self.examples], dtype=np.int64)


@dataclass(frozen=True)
class NoiseSpec:
    rate: float
    kind: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise DataError("noise rate must be in [0, 1]")
        if self.kind != "uniform":
            raise DataError(f"unsupported noise kind {self.kind!r}")


@dataclass(frozen=True)
class CorrectionRecord:
    id: str
    new_label: str
    source: str  # oracle | human
    ref_prev_label: str
    ref_pred_label: str
    ts: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "new_label": self.new_label,
                "source": self.source,
                "ref_prev_label": self.ref_prev_label,
                "ref_pred_label": self.ref_pred_label,
                "ts": self.ts,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "CorrectionRecord":
        obj = json.loads(line)
        return cls(
            id=obj["id"],
            new_label=obj["new_label"],
            source=obj["source"],
            ref_prev_label=obj["ref_prev_label"],
            ref_pred_label=obj["ref_pred_label"],
            ts=int(obj["ts"]),
        )


def _example_to_obj(ex: Example) -> dict:
    obj: dict = {"id": ex.id, "text": ex.text, "label": ex.label}
    if ex.oracle_label is not None:
        obj["oracle_label"] = ex.oracle_label
    obj["history"] = [
        {"label": e.label, "source": e.source, "ts": e.ts} for e in ex.label_history
    ]
    return obj


def save_jsonl(dataset: Dataset, path) -> None:
    """Serialize a dataset to JSONL, deterministically (stable field order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            fh.write(json.dumps(_example_to_obj(ex), ensure_ascii=False))
            fh.write("\n")


def load_jsonl(path, label_space: Optional[LabelSpace] = None) -> Dataset:
    """Load a JSONL dataset.

    When ``label_space`` is omitted it is built from distinct labels in
    order of first appearance.  Malformed lines are reported with their
    1-based line number.
    """
    examples: list[Example] = []
    seen_ids: set[str] = set()
    discovered: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({e.msg})") from None
            for fld in ("id", "text", "label"):
                if not isinstance(obj.get(fld), str):
                    raise DataError(f"{path}: line {lineno}: missing or non-string field {fld!r}")
            if not obj["text"]:
                raise DataError(f"{path}: line {lineno}: empty text for id {obj['id']!r}")
            if obj["id"] in seen_ids:
                raise DataError(f"{path}: line {lineno}: duplicate id {obj['id']!r}")
            seen_ids.add(obj["id"])
            if label_space is not None and obj["label"] not in label_space:
                raise DataError(
                    f"{path}: line {lineno}: label {obj['label']!r} outside supplied label space"
                )
            hist_objs = obj.get("history")
            if hist_objs:
                history = tuple(
                    LabelEntry(label=h["label"], source=h["source"], ts=int(h["ts"]))
                    for h in hist_objs
                )
            else:
                history = (LabelEntry(label=obj["label"], source="initial", ts=0),)
            labels_here = [obj["label"]] + [h.label for h in history]
            if obj.get("oracle_label") is not None:
                labels_here.append(obj["oracle_label"])
            for lab in labels_here:
                if label_space is None and lab not in discovered:
                    discovered.append(lab)
            examples.append(
                Example(
                    id=obj["id"],
                    text=obj["text"],
                    label=obj["label"],
                    label_history=history,
                    oracle_label=obj.get("oracle_label"),
                )
            )
    if label_space is None:
        label_space = LabelSpace(tuple(discovered))
    return Dataset(label_space=label_space, examples=tuple(examples), provenance=str(path))


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic seeded shuffle then partition into (train, test).

    Examples are sorted by id before the shuffle so the result does not
    depend on input order.
    """
    n = len(dataset)
    if n < 2:
        raise DataError("need at least 2 examples to split")
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must be in (0, 1)")
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise DataError(f"test_fraction {test_fraction} produces an empty split for n={n}")
    ordered = sorted(dataset.examples, key=lambda ex: ex.id)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx = set(perm[:n_test].tolist())
    # original dataset order is preserved within each split
    test_ids = {ordered[i].id for i in test_idx}
    train_ex = tuple(ex for ex in dataset.examples if ex.id not in test_ids)
    test_ex = tuple(ex for ex in dataset.examples if ex.id in test_ids)
    assert len(train_ex) + len(test_ex) == n
    prov = dataset.provenance
    return (
        Dataset(dataset.label_space, train_ex, provenance=f"{prov} [train split seed={seed}]"),
        Dataset(dataset.label_space, test_ex, provenance=f"{prov} [test split seed={seed}]"),
    )


def inject_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Flip each label with probability ``spec.rate`` to a random other class.

    Flipped examples get the noisy label as their ``initial`` history entry
    (the clean label is hidden in ``oracle_label`` only), so downstream
    stages cannot see the truth.  Unflipped examples get ``oracle_label``
    set to their current label.
    """
    k = dataset.label_space.k
    rng = np.random.default_rng(spec.seed)
    out: list[Example] = []
    for ex in dataset.examples:
        flip = rng.random() < spec.rate
        if flip:
            old_idx = dataset.label_space.index_of(ex.label)
            offset = int(rng.integers(1, k))
            new_idx = (old_idx + offset) % k
            noisy = dataset.label_space.classes[new_idx]
            out.append(
                Example(
                    id=ex.id,
                    text=ex.text,
                    label=noisy,
                    label_history=(LabelEntry(label=noisy, source="initial", ts=ex.label_history[0].ts),),
                    oracle_label=ex.label,
                )
            )
        else:
            out.append(replace(ex, oracle_label=ex.label))
    prov = f"{dataset.provenance} [noise rate={spec.rate} seed={spec.seed}]"
    return Dataset(dataset.label_space, tuple(out), provenance=prov)


def merge_corrections(dataset: Dataset, corrections: Sequence[CorrectionRecord]) -> Dataset:
    """Apply correction records: append a history entry and update the label.

    History is append-only even when the new label equals the current one
    (a human confirmation is information).  Cardinality and id set are
    preserved.
    """
    by_id: dict[str, CorrectionRecord] = {}
    for c in corrections:
        if c.new_label not in dataset.label_space:
            raise DataError(f"correction for {c.id!r}: label {c.new_label!r} not in label space")
        by_id[c.id] = c
    known = {ex.id for ex in dataset.examples}
    for cid in by_id:
        if cid not in known:
            raise DataError(f"correction references unknown example id {cid!r}")
    out: list[Example] = []
    for ex in dataset.examples:
        c = by_id.get(ex.id)
        if c is None:
            out.append(ex)
        else:
            entry = LabelEntry(label=c.new_label, source=c.source, ts=c.ts)
            out.append(
                Example(
                    id=ex.id,
                    text=ex.text,
                    label=c.new_label,
                    label_history=ex.label_history + (entry,),
                    oracle_label=ex.oracle_label,
                )
            )
    return Dataset(dataset.label_space, tuple(out), provenance=dataset.provenance)


def write_corrections(corrections: Iterable[CorrectionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in corrections:
            fh.write(c.to_json())
            fh.write("\n")


def read_corrections(path) -> list[CorrectionRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(CorrectionRecord.from_json(line))
    return out
