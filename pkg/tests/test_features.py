import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from correctloop.features import (
    FeatureError,
    FeaturizerConfig,
    SparseVector,
    featurize,
    featurize_matrix,
    inject_prediction,
    inject_prediction_matrix,
)

CFG = FeaturizerConfig(hash_dim=256, ngram_orders=(1,), l2_normalize=False, hash_seed=3)

texts = st.lists(
    st.text(alphabet="abcdefg", min_size=1, max_size=6), min_size=1, max_size=10
).map(" ".join)


class TestFeaturize:
    def test_counting_semantics(self):
        vec = featurize("a a b", CFG)
        values = sorted(vec.values)
        # two buckets with counts 2 and 1, or a single collision bucket of 3
        assert values in ([1.0, 2.0], [3.0])
        assert sum(values) == 3.0

    def test_determinism(self):
        v1 = featurize("the quick brown fox", CFG)
        v2 = featurize("the quick brown fox", CFG)
        assert v1 == v2

    def test_l2_norm_is_one(self):
        cfg = FeaturizerConfig(hash_dim=1024, ngram_orders=(1, 2), hash_seed=1)
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(50)]
        for _ in range(100):
            text = " ".join(rng.choice(words, size=rng.integers(1, 20)))
            vec = featurize(text, cfg)
            # direct recomputation of the norm
            assert math.isclose(sum(v * v for v in vec.values), 1.0, abs_tol=1e-9)

    def test_whitespace_runs_equivalent(self):
        assert featurize("a  b", CFG) == featurize("a b", CFG)
        assert featurize(" a\tb \n", CFG) == featurize("a b", CFG)

    def test_lowercase_folding(self):
        cfg = FeaturizerConfig(hash_dim=256, ngram_orders=(1,), lowercase=True, l2_normalize=False)
        assert featurize("Hello WORLD", cfg) == featurize("hello world", cfg)

    def test_empty_after_tokenization_errors(self):
        with pytest.raises(FeatureError):
            featurize("   ", CFG)

    def test_bigrams_counted(self):
        cfg = FeaturizerConfig(hash_dim=1 << 14, ngram_orders=(2,), l2_normalize=False)
        vec = featurize("a b c", cfg)
        assert sum(vec.values) == 2.0  # "a b" and "b c"

    @given(texts)
    @settings(max_examples=50, deadline=None)
    def test_pure_function(self, text):
        assert featurize(text, CFG) == featurize(text, CFG)

    def test_matrix_rows_match_single(self):
        ts = ["a b", "c d e", "a"]
        m = featurize_matrix(ts, CFG)
        for i, t in enumerate(ts):
            dense = featurize(t, CFG).to_dense()
            assert np.array_equal(np.asarray(m[i].todense()).ravel(), dense)


class TestInjectPrediction:
    def test_empty_vector_single_entry(self):
        vec = SparseVector(dim=8, indices=(), values=())
        out = inject_prediction(vec, predicted_class=1, k=3)
        assert out.dim == 11
        assert out.indices == (9,)
        assert out.values == (1.0,)

    def test_dim_grows_by_k(self):
        vec = featurize("x y z", CFG)
        for k in (2, 5, 10):
            assert inject_prediction(vec, 0, k).dim - vec.dim == k

    def test_projection_recovers_original(self):
        rng = np.random.default_rng(4)
        words = [f"w{i}" for i in range(30)]
        for _ in range(50):
            text = " ".join(rng.choice(words, size=rng.integers(1, 12)))
            vec = featurize(text, CFG)
            cls = int(rng.integers(0, 7))
            out = inject_prediction(vec, cls, k=7)
            kept = [(i, v) for i, v in zip(out.indices, out.values) if i < CFG.hash_dim]
            assert tuple(i for i, _ in kept) == vec.indices
            assert tuple(v for _, v in kept) == vec.values

    def test_injective_in_class(self):
        vec = featurize("a b", CFG)
        a = inject_prediction(vec, 0, k=4)
        b = inject_prediction(vec, 3, k=4)
        assert set(a.indices) ^ set(b.indices) == {CFG.hash_dim + 0, CFG.hash_dim + 3}

    def test_out_of_range_class(self):
        vec = featurize("a", CFG)
        with pytest.raises(FeatureError):
            inject_prediction(vec, 5, k=5)

    def test_matrix_variant_matches_scalar(self):
        ts = ["a b", "c", "d e f"]
        m = featurize_matrix(ts, CFG)
        classes = np.array([2, 0, 1])
        out = inject_prediction_matrix(m, classes, k=3, injection_scale=0.5)
        for i, t in enumerate(ts):
            single = inject_prediction(featurize(t, CFG), int(classes[i]), 3, 0.5)
            assert np.array_equal(np.asarray(out[i].todense()).ravel(), single.to_dense())


class TestConfig:
    def test_hash_dim_power_of_two(self):
        with pytest.raises(FeatureError):
            FeaturizerConfig(hash_dim=1000)

    def test_fingerprint_stable_and_sensitive(self):
        a = FeaturizerConfig(hash_dim=256, hash_seed=1)
        b = FeaturizerConfig(hash_dim=256, hash_seed=1)
        c = FeaturizerConfig(hash_dim=256, hash_seed=2)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()

    def test_round_trip_dict(self):
        cfg = FeaturizerConfig(hash_dim=512, ngram_orders=(1, 3), lowercase=False, hash_seed=9)
        assert FeaturizerConfig.from_dict(cfg.to_dict()).fingerprint() == cfg.fingerprint()


class TestSparseVector:
    def test_indices_strictly_increasing(self):
        with pytest.raises(FeatureError):
            SparseVector(dim=4, indices=(2, 1), values=(1.0, 1.0))

    def test_no_zero_entries(self):
        with pytest.raises(FeatureError):
            SparseVector(dim=4, indices=(1,), values=(0.0,))

    def test_index_in_range(self):
        with pytest.raises(FeatureError):
            SparseVector(dim=4, indices=(4,), values=(1.0,))
