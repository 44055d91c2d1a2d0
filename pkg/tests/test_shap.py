import numpy as np
import pytest

from bbaudit import gbdt
from bbaudit.gbdt.trees import Tree
from helpers import brute_force_shap, random_tree
from test_gbdt import blob_dataset


def _model_of(trees, n_features, base=0.0):
    return gbdt.GbdtModel(base_score=base, feature_count=n_features, trees=trees)


class TestSmallCases:
    def test_single_leaf_tree_all_zero_phi(self):
        tree = Tree([-1], [0.0], [True], [-1], [-1], [0.4], [25.0])
        model = _model_of([tree], 3, base=0.1)
        phi, base = gbdt.shap_values(model, np.zeros(3))
        assert np.all(phi == 0.0)
        assert base == pytest.approx(0.5)

    def test_depth_one_tree_single_feature_attribution(self):
        # Split on feature 1 at 0.5: left leaf -1 (cover 30), right +1 (cover 10).
        tree = Tree([1, -1, -1], [0.5, 0.0, 0.0], [True] * 3,
                    [1, -1, -1], [2, -1, -1], [0.0, -1.0, 1.0], [40.0, 30.0, 10.0])
        model = _model_of([tree], 4)
        phi, base = gbdt.shap_values(model, np.array([9.0, 0.2, 9.0, 9.0]))
        assert phi[0] == 0.0 and phi[2] == 0.0 and phi[3] == 0.0
        # E[f] = (30*(-1) + 10*1)/40 = -0.5; f(x) = -1; phi_1 = -0.5.
        assert base == pytest.approx(-0.5)
        assert phi[1] == pytest.approx(-0.5)
        assert base + phi.sum() == pytest.approx(model.margin(np.array([[9.0, 0.2, 9.0, 9.0]]))[0])

    def test_repeated_feature_on_path(self):
        # Feature 0 split twice along one path.
        tree = Tree(
            [0, 0, -1, -1, -1],
            [0.5, 0.2, 0.0, 0.0, 0.0],
            [True] * 5,
            [1, 3, -1, -1, -1],
            [2, 4, -1, -1, -1],
            [0.0, 0.0, 5.0, 1.0, 2.0],
            [100.0, 60.0, 40.0, 30.0, 30.0],
        )
        model = _model_of([tree], 2)
        for xv in (0.1, 0.3, 0.9):
            x = np.array([xv, 7.0])
            phi, base = brute = brute_force_shap(model, x)
            got_phi, got_base = gbdt.shap_values(model, x)
            assert np.allclose(got_phi, phi, atol=1e-12)
            assert got_base == pytest.approx(base, abs=1e-12)


class TestBruteForceEquivalence:
    def test_100_random_trees_match_exponential_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            tree = random_tree(rng, n_features=4, max_depth=3)
            model = _model_of([tree], 4)
            x = rng.uniform(-1.2, 1.2, size=4)
            if rng.random() < 0.3:
                x[rng.integers(4)] = np.nan
            phi_oracle, base_oracle = brute_force_shap(model, x)
            phi, base = gbdt.shap_values(model, x)
            assert np.max(np.abs(phi - phi_oracle)) < 1e-9
            assert abs(base - base_oracle) < 1e-9

    def test_small_forest_matches_oracle(self):
        rng = np.random.default_rng(23)
        trees = [random_tree(rng, n_features=3, max_depth=3) for _ in range(5)]
        model = _model_of(trees, 3, base=0.25)
        for _ in range(20):
            x = rng.uniform(-1.2, 1.2, size=3)
            phi_oracle, base_oracle = brute_force_shap(model, x)
            phi, base = gbdt.shap_values(model, x)
            assert np.max(np.abs(phi - phi_oracle)) < 1e-9
            assert abs(base - base_oracle) < 1e-9


class TestLocalAccuracy:
    def test_trained_model_1000_random_inputs(self, rng):
        X, y = blob_dataset(rng, n=400, d=6)
        model = gbdt.train(X, y, gbdt.GbdtParams(n_rounds=20, max_depth=4, seed=3))
        probe = rng.normal(size=(1000, 6))
        probe[rng.random(probe.shape) < 0.1] = np.nan
        margins = model.margin(probe)
        for i in range(probe.shape[0]):
            phi, base = gbdt.shap_values(model, probe[i])
            assert abs(base + phi.sum() - margins[i]) < 1e-9

    def test_dimension_mismatch(self, rng):
        X, y = blob_dataset(rng, n=60)
        model = gbdt.train(X, y, gbdt.GbdtParams(n_rounds=2))
        with pytest.raises(gbdt.DimensionMismatch):
            gbdt.shap_values(model, np.zeros(9))

    def test_shap_matrix_agrees_with_rows(self, rng):
        X, y = blob_dataset(rng, n=100, d=4)
        model = gbdt.train(X, y, gbdt.GbdtParams(n_rounds=5, seed=1))
        mat, base = gbdt.shap_matrix(model, X[:10])
        for i in range(10):
            phi, b = gbdt.shap_values(model, X[i])
            assert np.array_equal(mat[i], phi)
            assert b == base
