"""Stand up the human-annotation service over a freshly flagged queue.

Trains a baseline on a small noisy corpus, flags label/prediction
disagreements, and serves the resulting relabel queue over HTTP. Point a
browser at the printed URL (the web UI is served if frontend/dist exists),
or drive the JSON API directly:

    curl localhost:8000/api/queue/next
    curl -X POST localhost:8000/api/items/<id>/label -d '{"label": "class01"}' \
         -H 'content-type: application/json'

Decisions append to <run-dir>/corrections.jsonl; restarting the script with
the same --run-dir resumes where the annotators left off.
"""

import argparse
import os

from correctloop import (
    FeaturizerConfig,
    LoopConfig,
    NoiseSpec,
    SyntheticCorpusSpec,
    TrainConfig,
    build_relabel_queue,
    flag_disagreements,
    generate_corpus,
    inject_noise,
    train_model_a,
)
from correctloop.service import serve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--run-dir", default="out/annotation")
    ap.add_argument("--port", type=int, default=8000)
    args = ap.parse_args()
    os.makedirs(args.run_dir, exist_ok=True)

    corpus = generate_corpus(SyntheticCorpusSpec(
        k=4, n=600, vocab_per_class=40, shared_vocab=120,
        tokens_per_text=9, class_token_probability=0.5, seed=21))
    pool = inject_noise(corpus, NoiseSpec(rate=0.2, seed=22))

    feat = FeaturizerConfig(hash_dim=1 << 13, ngram_orders=(1,), hash_seed=0)
    config = LoopConfig(featurizer=feat,
                        train_a=TrainConfig(learning_rate=0.05, batch_size=32,
                                            max_epochs=10, seed=23))
    model = train_model_a(pool, config)
    flags = flag_disagreements(model, pool, feat)
    queue = build_relabel_queue(flags, pool)
    print(f"{len(queue.items)} items queued for review out of {len(pool)}")

    static = os.path.join(os.path.dirname(__file__), "..", "frontend", "dist")
    static = static if os.path.isdir(static) else None
    url = f"http://127.0.0.1:{args.port}/" if static else \
        f"http://127.0.0.1:{args.port}/api/queue/next"
    print(f"serving on {url}  (ctrl-c to stop)")
    serve(queue, pool.label_space,
          os.path.join(args.run_dir, "corrections.jsonl"),
          port=args.port, static_dir=static)


if __name__ == "__main__":
    main()
