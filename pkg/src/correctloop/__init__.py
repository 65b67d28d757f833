"""correctloop: find noisy labels, collect human corrections, and train a
model that takes the baseline's predicted one-hot label as an extra input."""

from .classifier import Model, Prediction, TrainConfig, evaluate, gradient_check, predict_proba, train
from .data import (
    CorrectionRecord,
    Dataset,
    Example,
    LabelEntry,
    LabelSpace,
    NoiseSpec,
    inject_noise,
    load_jsonl,
    merge_corrections,
    save_jsonl,
    split,
)
from .features import FeaturizerConfig, SparseVector, featurize, inject_prediction
from .harness import (
    ExperimentReport,
    SyntheticCorpusSpec,
    flag_metrics,
    format_report,
    generate_corpus,
)
from .loop import (
    FlagRecord,
    LoopConfig,
    RelabelQueue,
    build_relabel_queue,
    flag_disagreements,
    flag_low_margin,
    infer,
    run_full_loop,
    train_model_a,
    train_model_b,
    train_model_c,
)
from .oracle import OracleConfig, relabel

__all__ = [
    "CorrectionRecord", "Dataset", "Example", "LabelEntry", "LabelSpace", "NoiseSpec",
    "inject_noise", "load_jsonl", "merge_corrections", "save_jsonl", "split",
    "FeaturizerConfig", "SparseVector", "featurize", "inject_prediction",
    "Model", "Prediction", "TrainConfig", "train", "predict_proba", "evaluate", "gradient_check",
    "FlagRecord", "LoopConfig", "RelabelQueue", "build_relabel_queue",
    "flag_disagreements", "flag_low_margin", "infer", "run_full_loop",
    "train_model_a", "train_model_b", "train_model_c",
    "OracleConfig", "relabel",
    "ExperimentReport", "SyntheticCorpusSpec", "flag_metrics", "format_report",
    "generate_corpus",
]
