"""Simulated annotator: answers relabel queue items from hidden clean labels.

Randomness for each item derives from (seed, draw_index), where
draw_index is the item's stable position in the original dataset, so the
outcome never depends on queue processing order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CorrectionRecord, LabelSpace


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    error_rate: float = 0.0
    error_mode: str = "keep_previous"  # keep_previous | uniform_wrong
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.error_rate <= 1.0:
            raise OracleError("error_rate must be in [0, 1]")
        if self.error_mode not in ("keep_previous", "uniform_wrong"):
            raise OracleError(f"unknown error_mode {self.error_mode!r}")


def relabel(
    item,
    clean_label: str,
    label_space: LabelSpace,
    config: OracleConfig,
    draw_index: int,
    ts: int = 0,
) -> CorrectionRecord:
    """Answer one queue item; returns the oracle's correction record.

    With probability 1 - error_rate the clean label is returned; otherwise
    the previous label (keep_previous) or a uniformly random label other
    than the clean one (uniform_wrong).
    """
    if clean_label not in label_space:
        raise OracleError(f"clean label {clean_label!r} not in label space")
    rng = np.random.default_rng((config.seed, draw_index))
    if rng.random() < 1.0 - config.error_rate:
        answer = clean_label
    elif config.error_mode == "keep_previous":
        answer = item.ref_prev_label
    else:
        k = label_space.k
        clean_idx = label_space.index_of(clean_label)
        answer = label_space.classes[(clean_idx + int(rng.integers(1, k))) % k]
    return CorrectionRecord(
        id=item.example_id,
        new_label=answer,
        source="oracle",
        ref_prev_label=item.ref_prev_label,
        ref_pred_label=item.ref_pred_label,
        ts=ts,
    )
