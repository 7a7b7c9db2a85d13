import numpy as np
import pytest

from xsect.models import ForestConfig, forest_fit
from xsect.preprocess import TrainingWindow


def window(x, y):
    return TrainingWindow.from_arrays(np.asarray(x, float), np.asarray(y, float))


class TestSingleTreeOracles:
    def test_depth_one_two_point_fixture(self):
        # the only candidate split is the midpoint 0.5
        config = ForestConfig(n_estimators=1, max_features=1, max_depth=1, bootstrap=False)
        predictor = forest_fit(window([[0.0], [1.0]], [0.0, 1.0]), config, seed=0)
        tree = predictor.trees[0]
        assert tree.feature[0] == 0
        assert tree.threshold[0] == pytest.approx(0.5)
        np.testing.assert_allclose(predictor.predict(np.array([[0.2], [0.9]])), [0.0, 1.0])

    def test_unbounded_tree_memorizes_distinct_features(self):
        rng = np.random.default_rng(5)
        x = rng.permutation(50).astype(float).reshape(-1, 1)
        y = rng.normal(size=50)
        config = ForestConfig(n_estimators=1, max_features=1, max_depth=50, bootstrap=False)
        predictor = forest_fit(window(x, y), config, seed=0)
        np.testing.assert_array_equal(predictor.predict(x), y)
        # every sample sits in its own leaf
        assert int((predictor.trees[0].feature == -1).sum()) == 50

    def test_constant_target_collapses_to_root_leaf(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(30, 4))
        config = ForestConfig(n_estimators=5, max_features=2, max_depth=7)
        predictor = forest_fit(window(x, np.full(30, 2.5)), config, seed=1)
        np.testing.assert_allclose(predictor.predict(rng.normal(size=(10, 4))), 2.5)
        assert all(t.feature.size == 1 for t in predictor.trees)


class TestForestProperties:
    def test_depth_bounded_on_grid(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(size=(200, 10))
        y = rng.normal(size=200)
        for depth in (3, 5, 7):
            config = ForestConfig(n_estimators=20, max_features=4, max_depth=depth)
            predictor = forest_fit(window(x, y), config, seed=3)
            assert all(t.max_depth() <= depth for t in predictor.trees)

    def test_predictions_bounded_by_targets_and_trees(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(size=(100, 6))
        y = rng.normal(size=100)
        config = ForestConfig(n_estimators=15, max_features=3, max_depth=4)
        predictor = forest_fit(window(x, y), config, seed=4)
        queries = rng.uniform(size=(50, 6))
        per_tree = np.stack([t.predict(queries) for t in predictor.trees])
        assert per_tree.min() >= y.min() - 1e-12 and per_tree.max() <= y.max() + 1e-12
        forest = predictor.predict(queries)
        assert (forest >= per_tree.min(axis=0) - 1e-12).all()
        assert (forest <= per_tree.max(axis=0) + 1e-12).all()

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(size=(80, 5))
        y = rng.normal(size=80)
        config = ForestConfig(n_estimators=10, max_features=2, max_depth=5)
        a = forest_fit(window(x, y), config, seed=11)
        b = forest_fit(window(x, y), config, seed=11)
        queries = rng.uniform(size=(20, 5))
        np.testing.assert_array_equal(a.predict(queries), b.predict(queries))
        c = forest_fit(window(x, y), config, seed=12)
        assert not np.array_equal(a.predict(queries), c.predict(queries))

    def test_split_lowers_sse_against_brute_force(self):
        # exhaustive scan over all midpoints must agree with the grown root
        rng = np.random.default_rng(10)
        x = rng.uniform(size=(60, 1))
        y = (x[:, 0] > 0.6).astype(float) + rng.normal(scale=0.01, size=60)
        config = ForestConfig(n_estimators=1, max_features=1, max_depth=1, bootstrap=False)
        predictor = forest_fit(window(x, y), config, seed=0)
        tree = predictor.trees[0]

        def sse(values):
            return float(((values - values.mean()) ** 2).sum()) if values.size else 0.0

        best = None
        xs = np.sort(np.unique(x[:, 0]))
        for lo, hi in zip(xs, xs[1:]):
            thr = 0.5 * (lo + hi)
            total = sse(y[x[:, 0] <= thr]) + sse(y[x[:, 0] > thr])
            if best is None or total < best[0]:
                best = (total, thr)
        assert tree.threshold[0] == pytest.approx(best[1])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ForestConfig(n_estimators=0)
        with pytest.raises(ValueError):
            ForestConfig(max_features=0)
        with pytest.raises(ValueError):
            ForestConfig(max_depth=0)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            forest_fit(window([[1.0]], [1.0]), ForestConfig(n_estimators=1), seed=0)
