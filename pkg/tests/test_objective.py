"""Softmax objective, gradients, sufficient-statistic scatter, model I/O,
and the closed-form quadratic family."""

import numpy as np
import pytest

from _oracles import fd_gradient
from strata_sgd import test_error as classification_error
from strata_sgd import (
    Minibatch,
    Model,
    QuadraticProblem,
    batch_gradient,
    example_gradient,
    example_loss,
    full_gradient,
    full_objective,
    load_model,
    parse_libsvm,
    per_cluster_gradient_sse,
    quadratic_gradient,
    save_model,
    zero_model,
)


def random_model(dataset, seed, lam=1e-2, scale=0.5):
    rng = np.random.Generator(np.random.PCG64(seed))
    return Model(rng.normal(size=(dataset.m, dataset.d)) * scale, lam)


class TestModel:
    def test_weights_are_copied_and_read_only(self):
        W = np.zeros((2, 3))
        m = Model(W, 0.1)
        W[0, 0] = 5.0
        assert m.weights[0, 0] == 0.0
        with pytest.raises(ValueError):
            m.weights[0, 0] = 1.0

    def test_validation(self):
        with pytest.raises(ValueError, match="2-d"):
            Model(np.zeros(3), 0.1)
        with pytest.raises(ValueError, match="finite"):
            Model(np.array([[np.nan]]), 0.1)
        with pytest.raises(ValueError, match="lambda"):
            Model(np.zeros((1, 1)), -0.5)


class TestObjectiveValues:
    def test_zero_model_objective_is_log_m(self, blob_dataset):
        m = zero_model(blob_dataset.m, blob_dataset.d, 0.5)
        assert full_objective(m, blob_dataset) == pytest.approx(
            np.log(blob_dataset.m), abs=1e-14
        )

    def test_full_objective_is_mean_of_example_losses(self, tiny_dataset):
        model = random_model(tiny_dataset, 0)
        per = [example_loss(model, inst) for inst in tiny_dataset]
        assert full_objective(model, tiny_dataset) == pytest.approx(
            np.mean(per), rel=1e-12
        )

    def test_regularizer_uses_squared_frobenius(self, tiny_dataset):
        W = np.full((2, 3), 2.0)
        plain = full_objective(Model(W, 0.0), tiny_dataset)
        reg = full_objective(Model(W, 0.1), tiny_dataset)
        assert reg - plain == pytest.approx(0.05 * np.sum(W * W))

    def test_stable_under_huge_scores(self, tiny_dataset):
        model = Model(np.full((2, 3), 500.0), 0.0)
        assert np.isfinite(full_objective(model, tiny_dataset))


class TestGradients:
    def test_full_gradient_is_mean_of_example_gradients(self, tiny_dataset):
        model = random_model(tiny_dataset, 1)
        per = np.array([example_gradient(model, inst) for inst in tiny_dataset])
        assert np.allclose(full_gradient(model, tiny_dataset), per.mean(axis=0))

    def test_finite_difference_agreement_full(self, blob_dataset):
        model = random_model(blob_dataset, 2)
        grad = full_gradient(model, blob_dataset)
        fd = fd_gradient(
            lambda W: full_objective(Model(W, model.lam), blob_dataset),
            model.weights.copy(),
        )
        assert np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-6

    def test_finite_difference_agreement_example(self, tiny_dataset):
        model = random_model(tiny_dataset, 3)
        inst = tiny_dataset.instance(1)
        grad = example_gradient(model, inst)
        fd = fd_gradient(
            lambda W: example_loss(Model(W, model.lam), inst),
            model.weights.copy(),
        )
        assert np.allclose(grad, fd, atol=1e-9)

    def test_batch_gradient_weights_one_recovers_example(self, tiny_dataset):
        model = random_model(tiny_dataset, 4)
        mb = Minibatch(np.array([3]), np.array([1.0]))
        g = batch_gradient(model, tiny_dataset, mb)
        assert np.allclose(g, example_gradient(model, tiny_dataset.instance(3)))

    def test_batch_gradient_full_support_recovers_full(self, tiny_dataset):
        model = random_model(tiny_dataset, 5)
        n = tiny_dataset.n
        mb = Minibatch(np.arange(n), np.full(n, 1.0 / n))
        assert np.allclose(
            batch_gradient(model, tiny_dataset, mb),
            full_gradient(model, tiny_dataset),
        )

    def test_repeated_indices_accumulate(self, tiny_dataset):
        model = random_model(tiny_dataset, 6)
        mb = Minibatch(np.array([2, 2]), np.array([0.5, 0.5]))
        assert np.allclose(
            batch_gradient(model, tiny_dataset, mb),
            example_gradient(model, tiny_dataset.instance(2)),
        )


class TestPredictions:
    def test_zero_model_predicts_lowest_class_everywhere(self, blob_dataset):
        # all scores tie at 0; argmax must resolve to class id 0
        m = zero_model(blob_dataset.m, blob_dataset.d, 0.0)
        expected = np.mean(blob_dataset.y != 0)
        assert classification_error(m, blob_dataset) == pytest.approx(expected)

    def test_perfect_separation_reaches_zero_error(self):
        ds = parse_libsvm("1 1:1.0\n2 2:1.0\n")
        m = Model(np.array([[5.0, 0.0], [0.0, 5.0]]), 0.0)
        assert classification_error(m, ds) == 0.0


class TestPerClusterScatter:
    def direct_sse(self, model, dataset, clusters):
        grads = np.array(
            [example_gradient(model, dataset.instance(i)) for i in range(dataset.n)]
        )
        out = []
        for members in clusters:
            g = grads[list(members)]
            mu = g.mean(axis=0)
            out.append(float(np.sum((g - mu) ** 2)))
        return np.array(out)

    def test_matches_per_example_computation(self, tiny_dataset):
        model = random_model(tiny_dataset, 7)
        clusters = [[0, 1, 4], [2, 3]]
        fast = per_cluster_gradient_sse(model, tiny_dataset, clusters)
        slow = self.direct_sse(model, tiny_dataset, clusters)
        assert np.allclose(fast, slow, atol=1e-10)

    def test_matches_on_random_models(self, blob_dataset):
        clusters = [
            np.flatnonzero(blob_dataset.y == c) for c in range(blob_dataset.m)
        ]
        for seed in range(5):
            model = random_model(blob_dataset, seed, lam=10.0 ** -(seed + 1))
            fast = per_cluster_gradient_sse(model, blob_dataset, clusters)
            slow = self.direct_sse(model, blob_dataset, clusters)
            assert np.allclose(fast, slow, rtol=1e-9, atol=1e-9)

    def test_singletons_have_zero_scatter(self, tiny_dataset):
        model = random_model(tiny_dataset, 8)
        sse = per_cluster_gradient_sse(
            model, tiny_dataset, [[i] for i in range(tiny_dataset.n)]
        )
        assert np.all(sse == 0.0)


class TestModelIO:
    def test_round_trip_exact(self, tmp_path, tiny_dataset):
        model = random_model(tiny_dataset, 9, lam=1e-3)
        path = tmp_path / "model.json"
        save_model(model, path)
        again = load_model(path)
        assert np.array_equal(again.weights, model.weights)
        assert again.lam == model.lam

    def test_shape_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"shape": [2, 2], "lambda": 0.1, "weights": [1.0]}')
        with pytest.raises(ValueError, match="shape"):
            load_model(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"shape": [1, 1], "weights": [0.0]}')
        with pytest.raises(ValueError, match="missing"):
            load_model(path)


class TestQuadraticProblem:
    def test_optimum_is_anchor_mean(self, quad_problem):
        star = quad_problem.optimum()
        assert np.allclose(star, quad_problem.anchors.mean(axis=0))
        assert np.allclose(quad_problem.gradient(star), 0.0)

    def test_value_and_gradient_closed_forms(self, quad_problem):
        rng = np.random.Generator(np.random.PCG64(11))
        w = rng.normal(size=quad_problem.dim)
        diffs = w - quad_problem.anchors
        expected = 0.5 * np.mean(np.sum(diffs**2, axis=1))
        assert quad_problem.value(w) == pytest.approx(expected)
        fd = fd_gradient(lambda v: quad_problem.value(v), w.copy())
        assert np.allclose(quad_problem.gradient(w), fd, atol=1e-8)

    def test_example_gradient(self, quad_problem):
        w = np.ones(quad_problem.dim)
        g = quad_problem.example_gradient(3, w)
        assert np.allclose(g, w - quad_problem.anchors[3])

    def test_batch_gradient_matches_weighted_sum(self, quad_problem):
        w = np.full(quad_problem.dim, 0.3)
        idx = [1, 4, 4, 9]
        wts = [0.25, 0.25, 0.25, 0.25]
        direct = sum(
            wt * quad_problem.example_gradient(i, w) for i, wt in zip(idx, wts)
        )
        assert np.allclose(quad_problem.batch_gradient(w, idx, wts), direct)
        assert np.allclose(quadratic_gradient(quad_problem, w, idx, wts), direct)
        assert np.allclose(
            quadratic_gradient(quad_problem, w), quad_problem.gradient(w)
        )

    def test_scatter_is_iterate_independent(self, quad_problem):
        clusters = [np.arange(0, 8), np.arange(8, 20)]
        sse = quad_problem.per_cluster_gradient_sse(clusters)
        for i, members in enumerate(clusters):
            z = quad_problem.anchors[members]
            expected = np.sum((z - z.mean(axis=0)) ** 2)
            assert sse[i] == pytest.approx(expected)

    def test_strength_scales_gradients(self):
        anchors = np.array([[0.0], [2.0]])
        weak = QuadraticProblem(anchors, 1.0)
        strong = QuadraticProblem(anchors, 3.0)
        w = np.array([5.0])
        assert np.allclose(strong.gradient(w), 3 * weak.gradient(w))
        assert strong.gamma == pytest.approx(1 / 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            QuadraticProblem(np.zeros(3), 1.0)
        with pytest.raises(ValueError):
            QuadraticProblem(np.zeros((2, 2)), 0.0)
        with pytest.raises(ValueError):
            QuadraticProblem(np.array([[np.inf]]), 1.0)
