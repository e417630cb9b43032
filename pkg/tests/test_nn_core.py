import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridfl.errors import ConfigError, ContractError, ShapeError
from hybridfl.nn_core import (
    Architecture,
    ExampleBatch,
    ModelParams,
    ce_gradient,
    ce_loss,
    evaluate_accuracy,
    flatten,
    forward_logits,
    init_model,
    kd_gradient,
    kd_loss,
    predict,
    sgd_step,
    unflatten,
)

from conftest import central_difference, random_batch, random_model


def naive_forward(values, sizes, x, relu=True):
    """Triple-loop reference forward pass reading the documented flat layout."""
    offset = 0
    h = [list(row) for row in x]
    n_layers = len(sizes) - 1
    for layer in range(n_layers):
        n_in, n_out = sizes[layer], sizes[layer + 1]
        W = [[values[offset + i * n_out + o] for o in range(n_out)] for i in range(n_in)]
        offset += n_in * n_out
        b = [values[offset + o] for o in range(n_out)]
        offset += n_out
        new = []
        for row in h:
            out = []
            for o in range(n_out):
                acc = b[o]
                for i in range(n_in):
                    acc += row[i] * W[i][o]
                if relu and layer < n_layers - 1:
                    acc = max(acc, 0.0)
                out.append(acc)
            new.append(out)
        h = new
    return np.array(h)


class TestArchitecture:
    def test_parameter_count_single_layer(self):
        assert Architecture((4, 10)).n_params == 50

    def test_reference_mnist_net_has_79510_parameters(self):
        # 2L = 79510 with L = 39755 slots in the full-scale setting
        assert Architecture((784, 100, 10)).n_params == 79510

    def test_desk_net_matches_ten_times_public_batch(self):
        assert Architecture((64, 32, 10)).n_params == 10 * 241

    @pytest.mark.parametrize("sizes", [(), (5,), (3, 0, 2)])
    def test_rejects_bad_layer_lists(self, sizes):
        with pytest.raises(ConfigError):
            Architecture(sizes)

    def test_rejects_unknown_activation(self):
        with pytest.raises(ConfigError):
            Architecture((2, 2), "tanh")


class TestParams:
    def test_flatten_unflatten_is_exact_bijection(self, rng):
        arch = Architecture((5, 7, 3))
        v = rng.standard_normal(arch.n_params)
        assert np.array_equal(flatten(unflatten(arch, v)), v)

    def test_flat_layout_is_weights_row_major_then_bias(self):
        arch = Architecture((2, 3))
        layers = unflatten(arch, np.arange(9.0))
        assert np.array_equal(layers[0][0], [[0, 1, 2], [3, 4, 5]])
        assert np.array_equal(layers[0][1], [6, 7, 8])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            ModelParams(np.zeros(3), Architecture((2, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(ContractError):
            ModelParams(np.array([0.0, np.nan, 0, 0, 0, 0]), Architecture((2, 2)))


class TestInit:
    def test_deterministic(self):
        a = init_model(Architecture((4, 10)), 7)
        b = init_model(Architecture((4, 10)), 7)
        assert np.array_equal(a.values, b.values)

    def test_biases_zero(self):
        layers = unflatten(Architecture((6, 5, 3)), init_model(Architecture((6, 5, 3)), 0).values)
        assert all(np.all(b == 0) for _, b in layers)

    def test_weight_mean_within_three_sigma(self):
        arch = Architecture((784, 32, 10))
        layers = unflatten(arch, init_model(arch, 11).values)
        for w, _ in layers:
            bound = 1 / np.sqrt(w.shape[0])
            sd_of_mean = bound / np.sqrt(3) / np.sqrt(w.size)  # U(-a, a) has sd a/sqrt(3)
            assert abs(w.mean()) < 3 * sd_of_mean
            assert np.abs(w).max() <= bound


class TestForward:
    def test_zero_model_gives_zero_logits(self, rng):
        model = ModelParams(np.zeros(Architecture((4, 6, 3)).n_params), Architecture((4, 6, 3)))
        assert np.array_equal(forward_logits(model, random_batch(rng, 5, 4, 3)), np.zeros((5, 3)))

    def test_one_hot_input_selects_weight_row(self, rng):
        arch = Architecture((4, 3))
        model = ModelParams(np.concatenate([rng.standard_normal(12), np.zeros(3)]), arch)
        [(w, _)] = unflatten(arch, model.values)
        x = np.eye(4)[[2]]
        assert np.array_equal(forward_logits(model, ExampleBatch(x, [0]))[0], w[2])

    @pytest.mark.parametrize("activation", ["relu", "identity"])
    def test_matches_naive_oracle(self, rng, activation):
        sizes = (6, 5, 4, 3)
        model = random_model(sizes, 3, activation)
        model = ModelParams(model.values + 0.1 * rng.standard_normal(model.values.size), model.arch)
        batch = random_batch(rng, 7, 6, 3)
        ref = naive_forward(model.values, sizes, batch.inputs, relu=activation == "relu")
        np.testing.assert_allclose(forward_logits(model, batch), ref, rtol=0, atol=1e-12)

    def test_identity_activation_is_linear_in_input(self, rng):
        model = random_model((4, 5, 3), 2, "identity")
        a, b = rng.standard_normal((2, 3, 4))
        f = lambda x: forward_logits(model, ExampleBatch(x, np.zeros(3)))
        f0 = f(np.zeros((3, 4)))
        np.testing.assert_allclose(f(2 * a - 3 * b) - f0, 2 * (f(a) - f0) - 3 * (f(b) - f0), atol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            forward_logits(random_model((4, 3), 0), random_batch(rng, 2, 5, 3))


class TestCrossEntropy:
    def test_gradient_matches_finite_differences(self, rng):
        for seed in range(5):
            model = random_model((6, 8, 4), seed)
            batch = random_batch(rng, 10, 6, 4)
            g = ce_gradient(model, batch)
            idx = rng.choice(model.values.size, 30, replace=False)
            f = lambda v: ce_loss(ModelParams(v, model.arch), batch)
            fd = central_difference(f, model.values, idx)
            np.testing.assert_allclose(g[idx], fd, rtol=1e-5, atol=1e-9)

    def test_gradient_vanishes_at_saturated_optimum(self):
        arch = Architecture((2, 2), "identity")
        # logits 60 * one-hot: softmax equals the label to double precision
        model = ModelParams(np.array([60.0, 0, 0, 60, 0, 0]), arch)
        batch = ExampleBatch(np.eye(2), [0, 1])
        assert np.abs(ce_gradient(model, batch)).max() < 1e-20

    def test_duplicated_batch_gives_same_gradient(self, rng):
        model = random_model((5, 4, 3), 1)
        batch = random_batch(rng, 6, 5, 3)
        doubled = ExampleBatch(np.vstack([batch.inputs] * 2), np.concatenate([batch.labels] * 2))
        np.testing.assert_allclose(ce_gradient(model, doubled), ce_gradient(model, batch), atol=1e-15)

    def test_label_out_of_range(self, rng):
        with pytest.raises(ShapeError):
            ce_gradient(random_model((3, 2), 0), ExampleBatch(np.zeros((1, 3)), [2]))


class TestDistillation:
    def test_gradient_matches_finite_differences_at_tau_2(self, rng):
        for seed in range(5):
            model = random_model((6, 8, 4), seed)
            pub = random_batch(rng, 9, 6, 4)
            targets = 2 * rng.standard_normal(9 * 4)
            g = kd_gradient(model, pub, targets, 2.0)
            idx = rng.choice(model.values.size, 30, replace=False)
            f = lambda v: kd_loss(ModelParams(v, model.arch), pub, targets, 2.0)
            fd = central_difference(f, model.values, idx)
            np.testing.assert_allclose(g[idx], fd, rtol=1e-5, atol=1e-9)

    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0, 7.0])
    def test_own_logits_give_zero_gradient(self, rng, tau):
        model = random_model((5, 6, 3), 4)
        pub = random_batch(rng, 8, 5, 3)
        own = forward_logits(model, pub).ravel()
        assert np.linalg.norm(kd_gradient(model, pub, own, tau)) < 1e-8
        assert abs(kd_loss(model, pub, own, tau)) < 1e-12

    def test_large_temperature_shrinks_gradient(self, rng):
        model = random_model((5, 6, 3), 4)
        pub = random_batch(rng, 8, 5, 3)
        t = rng.standard_normal(24)
        norms = [np.linalg.norm(kd_gradient(model, pub, t, tau)) for tau in (1, 10, 100, 1000)]
        assert all(a > b for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 1e-5 * norms[0]

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_nonpositive_temperature_rejected(self, rng, tau):
        model = random_model((3, 2), 0)
        with pytest.raises(ConfigError):
            kd_gradient(model, random_batch(rng, 2, 3, 2), np.zeros(4), tau)

    def test_target_size_mismatch(self, rng):
        model = random_model((3, 2), 0)
        with pytest.raises(ShapeError):
            kd_gradient(model, random_batch(rng, 2, 3, 2), np.zeros(5), 2.0)


class TestSgdAndEvaluation:
    def test_sgd_arithmetic(self):
        arch = Architecture((1, 1), "identity")
        out = sgd_step(ModelParams(np.array([1.0, 1.0]), arch), np.array([2.0, -2.0]), 0.5)
        assert np.array_equal(out.values, [0.0, 2.0])

    def test_zero_rate_or_gradient_is_identity(self, rng):
        model = random_model((3, 2), 0)
        assert np.array_equal(sgd_step(model, rng.standard_normal(8), 0.0).values, model.values)
        assert np.array_equal(sgd_step(model, np.zeros(8), 0.3).values, model.values)

    def test_sgd_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_step(random_model((3, 2), 0), np.zeros(3), 0.1)

    def test_perfect_model_scores_one(self):
        arch = Architecture((3, 3), "identity")
        model = ModelParams(np.concatenate([np.eye(3).ravel(), np.zeros(3)]), arch)
        assert evaluate_accuracy(model, ExampleBatch(np.eye(3), [0, 1, 2])) == 1.0

    def test_zero_model_predicts_class_zero(self, rng):
        arch = Architecture((4, 10))
        labels = np.repeat(np.arange(10), 7)
        test = ExampleBatch(rng.standard_normal((70, 4)), labels)
        model = ModelParams(np.zeros(arch.n_params), arch)
        assert np.all(predict(model, test.inputs) == 0)
        assert evaluate_accuracy(model, test) == pytest.approx(0.1)

    def test_random_model_near_chance(self):
        from hybridfl.data import DataSpec, gen_synthetic_dataset

        data = gen_synthetic_dataset(DataSpec(n_samples=1000, input_dim=20, class_sep=3.0), seed=5)
        accs = [evaluate_accuracy(random_model((20, 10), s), data) for s in range(20)]
        assert abs(np.mean(accs) - 0.1) < 0.05


@settings(max_examples=40, deadline=None)
@given(
    sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4),
    seed=st.integers(0, 2**31 - 1),
)
def test_roundtrip_flatten_property(sizes, seed):
    arch = Architecture(tuple(sizes))
    v = np.random.default_rng(seed).standard_normal(arch.n_params)
    assert np.array_equal(flatten(unflatten(arch, v)), v)
