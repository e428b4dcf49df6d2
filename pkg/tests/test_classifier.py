import numpy as np
import pytest
import scipy.sparse as sp

from firmnet.classifier import (
    cross_validate,
    default_s_grid,
    likelihood,
    make_folds,
    penalized_grad,
    penalized_objective,
    precision_curve,
    predict_proba,
    sigmoid,
    train,
    weight_report,
)
from firmnet.features import LabeledDataset


def dense_dataset(X, y, numeric_cols=(), names=None, onehot_blocks=()):
    n, d = X.shape
    return LabeledDataset(
        X=sp.csr_matrix(X),
        y=np.asarray(y, dtype=np.int8),
        firm_index=np.arange(n, dtype=np.int64),
        feature_names=names or [f"f{i}" for i in range(d)],
        numeric_cols=numeric_cols,
        group="network",
        onehot_blocks=onehot_blocks,
    )


def synth_logistic(rng, n, w_true, b_true):
    d = len(w_true)
    X = rng.normal(size=(n, d))
    p = sigmoid(X @ w_true + b_true)
    y = (rng.random(n) < p).astype(np.int8)
    return X, y


class TestSigmoid:
    def test_bounds_and_symmetry(self):
        z = np.array([-1000.0, -30.0, 0.0, 30.0, 1000.0])
        s = sigmoid(z)
        assert np.all(np.isfinite(s))
        assert s[2] == 0.5
        np.testing.assert_allclose(s + sigmoid(-z), 1.0, atol=1e-12)

    def test_monotone(self):
        z = np.linspace(-20, 20, 2001)
        assert np.all(np.diff(sigmoid(z)) > 0)


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            n = int(rng.integers(20, 60))
            d = int(rng.integers(2, 7))
            A = sp.csr_matrix(rng.normal(size=(n, d)))
            y = (rng.random(n) < 0.5).astype(np.float64)
            W = rng.normal(size=d)
            pen = np.abs(rng.normal(size=d))
            g = penalized_grad(A, y, W, pen)
            h = 1e-6
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                fd = (penalized_objective(A, y, W + e, pen)
                      - penalized_objective(A, y, W - e, pen)) / (2 * h)
                assert abs(g[j] - fd) < 1e-5 * max(1.0, abs(fd))

    def test_zero_at_optimum(self):
        rng = np.random.default_rng(42)
        X, y = synth_logistic(rng, 400, np.array([0.8, -1.1]), 0.2)
        ds = dense_dataset(X, y)
        model = train(ds, tol=1e-10)
        assert model.converged
        assert model.final_grad_norm <= 1e-10


class TestTrain:
    def test_objective_monotone(self):
        rng = np.random.default_rng(42)
        for _ in range(8):
            X, y = synth_logistic(rng, 300, rng.normal(size=4), 0.5)
            if len(np.unique(y)) < 2:
                continue
            model = train(dense_dataset(X, y))
            path = np.array(model.objective_path)
            assert len(path) >= 2
            assert np.all(np.diff(path) >= 0)

    def test_recovers_planted_weights(self):
        rng = np.random.default_rng(42)
        w_true = np.array([1.2, -0.7, 0.4, 0.0, -1.5])
        X, y = synth_logistic(rng, 40_000, w_true, -0.3)
        model = train(dense_dataset(X, y))
        assert model.converged
        assert np.abs(model.w - w_true).max() < 0.12
        assert abs(model.intercept - (-0.3)) < 0.1

    def test_separable_reaches_perfect_training_accuracy(self):
        rng = np.random.default_rng(42)
        n = 300
        X = rng.normal(size=(n, 2))
        y = (X[:, 0] + 2 * X[:, 1] > 0.1).astype(np.int8)
        ds = dense_dataset(X, y)
        model = train(ds, max_iter=200)
        scores = predict_proba(model, ds.X)
        assert np.array_equal((scores > 0.5).astype(np.int8), y)

    def test_l2_shrinks_weights(self):
        rng = np.random.default_rng(42)
        X, y = synth_logistic(rng, 2000, np.array([1.0, -1.0, 0.5]), 0.0)
        free = train(dense_dataset(X, y))
        tight = train(dense_dataset(X, y), l2=50.0)
        assert np.linalg.norm(tight.w) < np.linalg.norm(free.w)

    def test_single_class_raises(self):
        X = np.ones((10, 2))
        with pytest.raises(ValueError, match="single-class"):
            train(dense_dataset(X, np.ones(10)))

    def test_non_finite_raises(self):
        X = np.ones((4, 2))
        X[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            train(dense_dataset(X, [0, 1, 0, 1]))

    def test_deterministic(self):
        rng = np.random.default_rng(42)
        X, y = synth_logistic(rng, 500, np.array([0.5, -0.5]), 0.1)
        a = train(dense_dataset(X, y))
        b = train(dense_dataset(X, y))
        np.testing.assert_array_equal(a.w, b.w)
        assert a.intercept == b.intercept


class TestStandardization:
    def test_transform_stored_and_applied(self):
        rng = np.random.default_rng(42)
        X = np.column_stack([rng.lognormal(3, 1, 500), rng.normal(size=500)])
        y = (rng.random(500) < sigmoid(0.001 * X[:, 0])).astype(np.int8)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        ds = dense_dataset(X, y, numeric_cols=(0,))
        model = train(ds)
        assert model.scale_cols == (0,)
        assert len(model.scale_mean) == 1
        # likelihood() must agree with predict_proba row by row
        scores = predict_proba(model, ds.X)
        for i in (0, 7, 42):
            assert likelihood(X[i], model) == pytest.approx(scores[i])

    def test_likelihood_dimension_check(self):
        rng = np.random.default_rng(42)
        X, y = synth_logistic(rng, 200, np.array([1.0]), 0.0)
        model = train(dense_dataset(X, y))
        with pytest.raises(ValueError, match="dimension"):
            likelihood(np.ones(3), model)


class TestOnehotGauge:
    def build(self, rng, n=3000):
        # one numeric column + a 4-level one-hot block + 2 plain columns
        cats = rng.integers(0, 4, size=n)
        onehot = np.eye(4)[cats]
        X = np.column_stack([rng.normal(size=n), onehot,
                             rng.normal(size=(n, 2))])
        w = np.array([0.8, 0.5, -0.2, 0.9, -1.2, 0.3, -0.4])
        y = (rng.random(n) < sigmoid(X @ w)).astype(np.int8)
        names = ["cap", "c=a", "c=b", "c=c", "c=d", "n1", "n2"]
        return dense_dataset(X, y, names=names, onehot_blocks=((1, 5),))

    def test_block_mean_pinned_to_zero(self):
        rng = np.random.default_rng(42)
        ds = self.build(rng)
        model = train(ds)
        assert abs(model.w[1:5].mean()) < 1e-12

    def test_gauge_shift_preserves_predictions(self):
        rng = np.random.default_rng(42)
        ds = self.build(rng)
        model = train(ds)
        # the centered representative is the l2 -> 0+ limit
        ridge = train(ds, l2=1e-7)
        np.testing.assert_allclose(model.w, ridge.w, atol=1e-3)
        np.testing.assert_allclose(predict_proba(model, ds.X),
                                   predict_proba(ridge, ds.X), atol=1e-4)

    def test_ridge_optimum_already_centered(self):
        rng = np.random.default_rng(42)
        ds = self.build(rng)
        model = train(ds, l2=2.0, tol=1e-10)
        assert abs(model.w[1:5].mean()) < 1e-6


class TestPrecisionCurve:
    def test_hand_example(self):
        scores = np.array([0.9, 0.8, 0.7, 0.6])
        y = np.array([1, 0, 1, 1])
        curve = precision_curve(scores, y, [1, 2, 4])
        assert curve.hits.tolist() == [1, 1, 3]
        np.testing.assert_allclose(curve.precision, [1.0, 0.5, 0.75])

    def test_tie_break_by_firm_index(self):
        scores = np.array([0.5, 0.5, 0.5])
        y = np.array([0, 1, 0])
        up = precision_curve(scores, y, [1], firm_index=np.array([1, 0, 2]))
        assert up.hits.tolist() == [1]
        down = precision_curve(scores, y, [1], firm_index=np.array([0, 1, 2]))
        assert down.hits.tolist() == [0]

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            precision_curve(np.ones(3), np.ones(3), [0])
        with pytest.raises(ValueError):
            precision_curve(np.ones(3), np.ones(3), [4])


class TestFolds:
    def test_partition_and_balance(self):
        for seed in range(5):
            fold = make_folds(103, 10, seed)
            sizes = np.bincount(fold, minlength=10)
            assert sizes.sum() == 103
            assert sizes.max() - sizes.min() <= 1

    def test_seeded(self):
        np.testing.assert_array_equal(make_folds(50, 5, 3),
                                      make_folds(50, 5, 3))
        assert not np.array_equal(make_folds(50, 5, 3), make_folds(50, 5, 4))

    def test_validation(self):
        with pytest.raises(ValueError):
            make_folds(10, 1, 0)
        with pytest.raises(ValueError):
            make_folds(3, 5, 0)

    def test_default_s_grid(self):
        grid = default_s_grid(10_000, 10)
        assert grid.tolist() == [5, 10, 20, 50, 100]
        tiny = default_s_grid(30, 3)
        assert tiny.min() >= 1
        assert np.all(np.diff(tiny) > 0)


class TestCrossValidate:
    def build_groups(self, rng, n=600):
        X, y = synth_logistic(rng, n, np.array([1.0, -0.8, 0.5]), -1.0)
        full = dense_dataset(X, y)
        sub = dense_dataset(X[:, :2], y)
        return {"combined": full, "individual": sub}

    def test_shapes_and_determinism(self):
        rng = np.random.default_rng(42)
        datasets = self.build_groups(rng)
        grid = np.array([5, 20])
        a = cross_validate(datasets, k=5, seed=9, s_grid=grid)
        b = cross_validate(datasets, k=5, seed=9, s_grid=grid)
        assert set(a) == {"combined", "individual"}
        for g in a:
            assert a[g].per_fold.shape == (5, 2)
            assert a[g].folds_used == 5
            np.testing.assert_array_equal(a[g].per_fold, b[g].per_fold)
            assert np.all(a[g].p_mean >= 0) and np.all(a[g].p_mean <= 1)

    def test_row_mismatch_raises(self):
        rng = np.random.default_rng(42)
        datasets = self.build_groups(rng)
        datasets["individual"].firm_index[0] = 999
        with pytest.raises(ValueError, match="identical rows"):
            cross_validate(datasets, k=5, seed=0, s_grid=np.array([5]))

    def test_single_class_fold_skipped(self):
        # a lone positive leaves exactly one fold with single-class training
        rng = np.random.default_rng(42)
        X = rng.normal(size=(40, 2))
        y = np.zeros(40, dtype=np.int8)
        y[0] = 1
        ds = dense_dataset(X, y)
        out = cross_validate({"g": ds}, k=20, seed=1, s_grid=np.array([1]))
        ev = out["g"]
        assert ev.folds_used == 19
        assert len(ev.skipped_folds) == 1
        assert np.isfinite(ev.p_mean).all()
        assert np.isnan(ev.per_fold[ev.skipped_folds[0]]).all()


class TestWeightReport:
    def test_ranking_and_ratio(self):
        rng = np.random.default_rng(42)
        X, y = synth_logistic(rng, 400, np.array([0.2, 1.5, -0.9]), 0.0)
        ds = dense_dataset(X, y, names=["cap", "net_deg_count", "region=x"])
        model = train(ds)
        rows, ratio = weight_report(model)
        weights = [abs(w) for _, _, w in rows]
        assert weights == sorted(weights, reverse=True)
        assert rows[0][0] == 1
        top_net = next(abs(w) for _, n, w in rows if n.startswith("net_"))
        top_ind = next(abs(w) for _, n, w in rows
                       if not n.startswith("net_"))
        assert ratio == pytest.approx(top_net / top_ind)

    def test_zero_weights_omitted(self):
        from firmnet.classifier import TrainedModel

        m = TrainedModel(w=np.array([0.0, 2.0, -1.0]), intercept=0.1,
                         feature_names=["a", "net_b", "c"], converged=True,
                         iterations=1, final_grad_norm=0.0, hyper={})
        rows, ratio = weight_report(m)
        assert [name for _, name, _ in rows] == ["net_b", "c"]
        assert ratio == pytest.approx(2.0)
