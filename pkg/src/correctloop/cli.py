"""Command-line driver for the correction pipeline.

Every subcommand takes ``--config <path>`` (JSON, versioned) plus optional
``--set dotted.key=json_value`` overrides.  Staged subcommands share a run
directory (``run_dir`` in the config) and conventional artifact names, so
a pipeline can be driven stage by stage or all at once with ``run``.

Exit codes: 0 success, 1 usage error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import classifier as clf
from .classifier import TrainConfig
from .data import (
    Dataset,
    NoiseSpec,
    inject_noise,
    load_jsonl,
    merge_corrections,
    read_corrections,
    save_jsonl,
    split,
    write_corrections,
)
from .features import FeaturizerConfig
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
    collect_oracle_corrections,
    flag_disagreements,
    flag_low_margin,
    infer_batch,
    run_full_loop,
    train_model_a,
    train_model_b,
    train_model_c,
)
from .oracle import OracleConfig

CONFIG_VERSION = 1


class UsageError(Exception):
    pass


class StageError(Exception):
    pass


def load_config(path: str, overrides: list[str]) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}")
    if config.get("version") != CONFIG_VERSION:
        raise UsageError(f"config version must be {CONFIG_VERSION}")
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return config


def _run_dir(config: dict) -> str:
    rd = config.get("run_dir")
    if not rd:
        raise UsageError("config is missing run_dir")
    os.makedirs(rd, exist_ok=True)
    return rd


def _loop_config(config: dict) -> LoopConfig:
    loop = config.get("loop", {})
    return LoopConfig(
        featurizer=FeaturizerConfig.from_dict(config.get("featurizer", FeaturizerConfig().to_dict())),
        train_a=TrainConfig.from_dict(config.get("train_a", {})),
        train_b=TrainConfig.from_dict(config.get("train_b", {})),
        train_c=TrainConfig.from_dict(config.get("train_c", {})),
        flag_scope=loop.get("flag_scope", "train_and_test"),
        margin_threshold=loop.get("margin_threshold"),
        injection_mode=loop.get("injection_mode", "in_sample"),
        cross_fit_folds=loop.get("cross_fit_folds", 5),
        injection_scale=loop.get("injection_scale", 1.0),
    )


def _oracle_config(config: dict) -> OracleConfig:
    o = config.get("oracle", {})
    return OracleConfig(
        error_rate=o.get("error_rate", 0.0),
        error_mode=o.get("error_mode", "keep_previous"),
        seed=o.get("seed", 0),
    )


def _need(path: str, stage: str) -> str:
    if not os.path.exists(path):
        raise StageError(f"{stage}: missing required artifact {path}")
    return path


def cmd_generate(config: dict) -> None:
    rd = _run_dir(config)
    spec = SyntheticCorpusSpec.from_dict(config.get("corpus", {}))
    ds = generate_corpus(spec)
    save_jsonl(ds, os.path.join(rd, "corpus.jsonl"))
    print(f"wrote {len(ds)} examples to {rd}/corpus.jsonl")


def cmd_noise(config: dict) -> None:
    rd = _run_dir(config)
    src = _need(os.path.join(rd, "corpus.jsonl"), "noise")
    n = config.get("noise", {})
    spec = NoiseSpec(rate=n.get("rate", 0.0), kind=n.get("kind", "uniform"), seed=n.get("seed", 0))
    pool = inject_noise(load_jsonl(src), spec)
    save_jsonl(pool, os.path.join(rd, "pool.jsonl"))
    flipped = sum(1 for ex in pool.examples if ex.label != ex.oracle_label)
    print(f"wrote pool.jsonl ({flipped} labels flipped)")


def cmd_split(config: dict) -> None:
    rd = _run_dir(config)
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "split"))
    s = config.get("split", {})
    train, test = split(pool, s.get("test_fraction", 0.1), s.get("seed", 0))
    save_jsonl(train, os.path.join(rd, "train.jsonl"))
    save_jsonl(test, os.path.join(rd, "test.jsonl"))
    print(f"split {len(pool)} -> {len(train)} train / {len(test)} test")


def cmd_train_a(config: dict) -> None:
    rd = _run_dir(config)
    # the pool file fixes the class order for every stage
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "train-a"))
    train = load_jsonl(_need(os.path.join(rd, "train.jsonl"), "train-a"),
                       label_space=pool.label_space)
    lc = _loop_config(config)
    model = train_model_a(train, lc)
    clf.save_model(model, os.path.join(rd, "model_a.bin"))
    print(f"model_a: epochs={model.train_meta.epochs_run} "
          f"val_acc={model.train_meta.final_validation_accuracy}")


def cmd_flag(config: dict) -> None:
    rd = _run_dir(config)
    lc = _loop_config(config)
    model = clf.load_model(_need(os.path.join(rd, "model_a.bin"), "flag"))
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "flag"))
    train = load_jsonl(_need(os.path.join(rd, "train.jsonl"), "flag"), label_space=pool.label_space)
    test = load_jsonl(_need(os.path.join(rd, "test.jsonl"), "flag"), label_space=pool.label_space)
    flags = flag_disagreements(model, train, lc.featurizer)
    if lc.flag_scope == "train_and_test":
        flags += flag_disagreements(model, test, lc.featurizer)
    if lc.margin_threshold is not None:
        flags += flag_low_margin(model, train, lc.featurizer, lc.margin_threshold)
        if lc.flag_scope == "train_and_test":
            flags += flag_low_margin(model, test, lc.featurizer, lc.margin_threshold)
    with open(os.path.join(rd, "flags.jsonl"), "w", encoding="utf-8") as fh:
        for f in flags:
            fh.write(f.to_json())
            fh.write("\n")
    queue = build_relabel_queue(flags, pool)
    queue.save(os.path.join(rd, "queue.jsonl"))
    print(f"flagged {len(flags)} items; queue of {len(queue.items)}")


def cmd_serve(config: dict) -> None:
    from .service import serve

    rd = _run_dir(config)
    queue = RelabelQueue.load(_need(os.path.join(rd, "queue.jsonl"), "serve"))
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "serve"))
    srv = config.get("serve", {})
    serve(
        queue,
        pool.label_space,
        os.path.join(rd, "corrections.jsonl"),
        host=srv.get("host", "127.0.0.1"),
        port=srv.get("port", 8000),
        static_dir=srv.get("static_dir"),
    )


def cmd_oracle_relabel(config: dict) -> None:
    rd = _run_dir(config)
    queue = RelabelQueue.load(_need(os.path.join(rd, "queue.jsonl"), "oracle-relabel"))
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "oracle-relabel"))
    corrections = collect_oracle_corrections(queue, pool, _oracle_config(config))
    write_corrections(corrections, os.path.join(rd, "corrections.jsonl"))
    print(f"oracle answered {len(corrections)} items")


def cmd_merge(config: dict) -> None:
    rd = _run_dir(config)
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "merge"))
    corrections = read_corrections(_need(os.path.join(rd, "corrections.jsonl"), "merge"))
    merged = merge_corrections(pool, corrections)
    save_jsonl(merged, os.path.join(rd, "merged.jsonl"))
    print(f"merged {len(corrections)} corrections into {len(merged)} examples")


def _merged_split(rd: str, stage: str) -> tuple[Dataset, Dataset]:
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), stage))
    merged = load_jsonl(_need(os.path.join(rd, "merged.jsonl"), stage),
                        label_space=pool.label_space)
    train = load_jsonl(_need(os.path.join(rd, "train.jsonl"), stage), label_space=merged.label_space)
    test = load_jsonl(_need(os.path.join(rd, "test.jsonl"), stage), label_space=merged.label_space)
    by_id = {ex.id: ex for ex in merged.examples}
    m_train = Dataset(merged.label_space, tuple(by_id[ex.id] for ex in train.examples))
    m_test = Dataset(merged.label_space, tuple(by_id[ex.id] for ex in test.examples))
    return m_train, m_test


def cmd_train_b(config: dict) -> None:
    rd = _run_dir(config)
    m_train, _ = _merged_split(rd, "train-b")
    model = train_model_b(m_train, _loop_config(config))
    clf.save_model(model, os.path.join(rd, "model_b.bin"))
    print(f"model_b: epochs={model.train_meta.epochs_run}")


def cmd_train_c(config: dict) -> None:
    rd = _run_dir(config)
    m_train, _ = _merged_split(rd, "train-c")
    model_a = clf.load_model(_need(os.path.join(rd, "model_a.bin"), "train-c"))
    model = train_model_c(m_train, model_a, _loop_config(config))
    clf.save_model(model, os.path.join(rd, "model_c.bin"))
    print(f"model_c: epochs={model.train_meta.epochs_run}")


def cmd_eval(config: dict) -> None:
    from .features import featurize_matrix

    rd = _run_dir(config)
    lc = _loop_config(config)
    m_train, m_test = _merged_split(rd, "eval")
    pool = load_jsonl(_need(os.path.join(rd, "pool.jsonl"), "eval"), label_space=m_test.label_space)
    model_a = clf.load_model(_need(os.path.join(rd, "model_a.bin"), "eval"))
    model_b = clf.load_model(_need(os.path.join(rd, "model_b.bin"), "eval"))
    model_c = clf.load_model(_need(os.path.join(rd, "model_c.bin"), "eval"))
    with open(_need(os.path.join(rd, "flags.jsonl"), "eval"), "r", encoding="utf-8") as fh:
        flags = [FlagRecord.from_json(l) for l in fh if l.strip()]
    x_test = featurize_matrix([ex.text for ex in m_test.examples], lc.featurizer)
    y = m_test.labels_as_indices()
    acc = {
        "model_a": {"corrected_test": clf.evaluate(model_a, x_test, y), "clean_test": None},
        "model_b": {"corrected_test": clf.evaluate(model_b, x_test, y), "clean_test": None},
    }
    c_labels = infer_batch(model_a, model_c, x_test, lc.injection_scale)
    acc["model_c"] = {"corrected_test": float(np.mean(c_labels == y)), "clean_test": None}
    metrics = {"precision": None, "recall": None}
    noise_count = 0
    if all(ex.oracle_label is not None for ex in pool.examples):
        idx = {c: i for i, c in enumerate(pool.label_space.classes)}
        test_ids = {ex.id for ex in m_test.examples}
        clean_pool = {ex.id: idx[ex.oracle_label] for ex in pool.examples}
        y_clean = np.array([clean_pool[ex.id] for ex in m_test.examples])
        acc["model_a"]["clean_test"] = clf.evaluate(model_a, x_test, y_clean)
        acc["model_b"]["clean_test"] = clf.evaluate(model_b, x_test, y_clean)
        acc["model_c"]["clean_test"] = float(np.mean(c_labels == y_clean))
        precision, recall = flag_metrics(flags, pool)
        metrics = {"precision": precision, "recall": recall}
        noise_count = sum(1 for ex in pool.examples if ex.label != ex.oracle_label)
        flags_test = sum(1 for f in flags if f.example_id in test_ids)
    else:
        test_ids = {ex.id for ex in m_test.examples}
        flags_test = sum(1 for f in flags if f.example_id in test_ids)
    report = ExperimentReport(
        config={k: v for k, v in config.items() if k != "run_dir"},
        dataset_stats={
            "n": len(pool),
            "k": pool.label_space.k,
            "injected_noise_count": noise_count,
            "flags_train": len(flags) - flags_test,
            "flags_test": flags_test,
            "flags_total": len(flags),
            "corrections": len(read_corrections(os.path.join(rd, "corrections.jsonl"))),
            "merged_size": len(m_train) + len(m_test),
        },
        flag_metrics=metrics,
        accuracy=acc,
        injection_mode=lc.injection_mode,
    )
    with open(os.path.join(rd, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(format_report(report), end="")


def cmd_run(config: dict) -> None:
    rd = _run_dir(config)
    corpus_path = os.path.join(rd, "corpus.jsonl")
    if not os.path.exists(corpus_path):
        cmd_generate(config)
    pool_path = os.path.join(rd, "pool.jsonl")
    if not os.path.exists(pool_path):
        cmd_noise(config)
    pool = load_jsonl(pool_path)
    s = config.get("split", {})
    report = run_full_loop(
        pool,
        _oracle_config(config),
        _loop_config(config),
        rd,
        test_fraction=s.get("test_fraction", 0.1),
        split_seed=s.get("seed", 0),
        # run_dir is a filesystem detail, not an experiment parameter; keeping
        # it out of the echo keeps report.json byte-identical across run dirs
        config_echo={k: v for k, v in config.items() if k != "run_dir"},
    )
    print(format_report(report), end="")


def cmd_report(config: dict) -> None:
    rd = _run_dir(config)
    path = _need(os.path.join(rd, "report.json"), "report")
    with open(path, "r", encoding="utf-8") as fh:
        report = ExperimentReport.from_dict(json.load(fh))
    print(format_report(report), end="")


COMMANDS = {
    "generate": cmd_generate,
    "noise": cmd_noise,
    "split": cmd_split,
    "train-a": cmd_train_a,
    "flag": cmd_flag,
    "serve": cmd_serve,
    "oracle-relabel": cmd_oracle_relabel,
    "merge": cmd_merge,
    "train-b": cmd_train_b,
    "train-c": cmd_train_c,
    "eval": cmd_eval,
    "run": cmd_run,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="correctloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path config override, value parsed as JSON")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        config = load_config(args.config, args.set)
        COMMANDS[args.command](config)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"stage failed: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
