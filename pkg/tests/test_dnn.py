import numpy as np
import pytest

from xsect.models import DnnConfig, TrainingDivergedError, dnn_fit
from xsect.models.dnn import backward, forward_train, init_params, make_masks
from xsect.preprocess import TrainingWindow

TOY = DnnConfig(hidden_layers=(4, 3), dropout_rates=(0.3, 0.2), epochs=5, minibatch=8)


def toy_window(k=32, n_features=6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.01, 1.0, size=(k, n_features))
    y = rng.uniform(0.01, 1.0, size=k)
    return TrainingWindow.from_arrays(x, y)


def flatten_params(params):
    keys = list(params)
    sizes = [params[k].size for k in keys]
    return keys, sizes


def relative_gradient_errors(config, seed, n_coords=40, step=1e-5):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.01, 1.0, size=(5, 6))
    y = rng.uniform(0.01, 1.0, size=5)
    params, _ = init_params(rng, 6, config)
    masks = make_masks(rng, 5, config)

    _, cache = forward_train(params, x, y, masks, config)
    grads = backward(params, cache, config)

    keys, sizes = flatten_params(params)
    total = sum(sizes)
    coords = rng.choice(total, size=min(n_coords, total), replace=False)
    errors = []
    for coord in coords:
        offset = int(coord)
        for key, size in zip(keys, sizes):
            if offset < size:
                break
            offset -= size
        flat = params[key].reshape(-1)
        original = flat[offset]
        flat[offset] = original + step
        loss_plus, _ = forward_train(params, x, y, masks, config)
        flat[offset] = original - step
        loss_minus, _ = forward_train(params, x, y, masks, config)
        flat[offset] = original
        fd = (loss_plus - loss_minus) / (2 * step)
        analytic = grads[key].reshape(-1)[offset]
        # the floor keeps structurally-zero gradients (hidden biases are
        # cancelled by batch norm) from dividing FD noise by itself
        scale = max(abs(fd), abs(analytic), 1e-6)
        errors.append(abs(fd - analytic) / scale)
    return np.array(errors)


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        errors = relative_gradient_errors(TOY, seed=0, n_coords=60)
        assert errors.max() <= 1e-4

    def test_gradient_check_across_seeds(self):
        for seed in range(3):
            errors = relative_gradient_errors(TOY, seed=seed, n_coords=30)
            assert errors.max() <= 1e-4, f"seed {seed}"


class TestForwardBehaviour:
    def test_identical_rows_batch_norm_outputs_shift_parameter(self):
        rng = np.random.default_rng(1)
        params, _ = init_params(rng, 6, TOY)
        params["beta0"] = rng.normal(size=4)
        x = np.tile(rng.uniform(0.1, 1.0, size=(1, 6)), (7, 1))
        y = np.zeros(7)
        masks = [None, None]
        _, cache = forward_train(params, x, y, masks, TOY)
        layer = cache["layers"][0]
        np.testing.assert_allclose(layer["zhat"], 0.0, atol=1e-12)
        np.testing.assert_allclose(layer["h"], np.tile(params["beta0"], (7, 1)), atol=1e-12)

    def test_zero_epochs_predicts_finite(self):
        config = DnnConfig(hidden_layers=(4, 3), dropout_rates=(0.5, 0.3), epochs=0)
        predictor = dnn_fit(toy_window(), config, seed=0)
        rng = np.random.default_rng(2)
        scores = predictor.predict(rng.uniform(0.001, 1.0, size=(50, 6)))
        assert np.isfinite(scores).all()

    def test_inference_is_deterministic_and_batch_independent(self):
        predictor = dnn_fit(toy_window(), TOY, seed=3)
        rng = np.random.default_rng(4)
        x = rng.uniform(0.01, 1.0, size=(10, 6))
        full = predictor.predict(x)
        again = predictor.predict(x)
        np.testing.assert_array_equal(full, again)
        # frozen statistics: only BLAS summation order may differ per shape
        rows = np.concatenate([predictor.predict(x[i : i + 1]) for i in range(10)])
        np.testing.assert_allclose(full, rows, rtol=1e-12)


class TestTraining:
    def test_refit_reproduces_parameters_bitwise(self):
        a = dnn_fit(toy_window(), TOY, seed=7)
        b = dnn_fit(toy_window(), TOY, seed=7)
        for key in a.params:
            np.testing.assert_array_equal(a.params[key], b.params[key])
        for key in a.running:
            np.testing.assert_array_equal(a.running[key], b.running[key])

    def test_training_reduces_full_data_loss(self):
        window = toy_window(k=200, seed=5)
        config = DnnConfig(
            hidden_layers=(8, 4), dropout_rates=(0.1, 0.1), epochs=30,
            minibatch=32, learning_rate=0.01,
        )
        for seed in range(3):
            initial = dnn_fit(window, DnnConfig(
                hidden_layers=(8, 4), dropout_rates=(0.1, 0.1), epochs=0,
                minibatch=32, learning_rate=0.01,
            ), seed=seed)
            trained = dnn_fit(window, config, seed=seed)
            loss0 = float(np.mean((initial.predict(window.features) - window.targets) ** 2))
            loss1 = float(np.mean((trained.predict(window.features) - window.targets) ** 2))
            assert loss1 <= loss0

    def test_divergence_raises_with_learning_rate_hint(self):
        x = np.random.default_rng(0).uniform(size=(8, 3))
        y = np.full(8, 1e200)  # squared error overflows on the first batch
        config = DnnConfig(hidden_layers=(4,), dropout_rates=(0.0,), epochs=1, minibatch=8)
        with pytest.raises(TrainingDivergedError, match="learning_rate"):
            dnn_fit(TrainingWindow.from_arrays(x, y), config, seed=0)

    def test_short_final_minibatch_allowed(self):
        config = DnnConfig(hidden_layers=(4,), dropout_rates=(0.2,), epochs=2, minibatch=7)
        predictor = dnn_fit(toy_window(k=10), config, seed=1)
        assert np.isfinite(predictor.predict(toy_window(k=4).features)).all()


class TestConfigValidation:
    def test_mismatched_dropout_length(self):
        with pytest.raises(ValueError):
            DnnConfig(hidden_layers=(4, 3), dropout_rates=(0.5,))

    def test_bad_dropout_rate(self):
        with pytest.raises(ValueError):
            DnnConfig(hidden_layers=(4,), dropout_rates=(1.0,))

    def test_table_presets_expressible(self):
        from xsect.models import PRESET_NAMES, preset

        assert len(PRESET_NAMES) == 12
        kind, config = preset("DNN5")
        assert kind == "dnn"
        assert config.hidden_layers == (300, 300, 150, 150, 50)
        assert config.dropout_rates == (0.5, 0.5, 0.3, 0.3, 0.1)
        assert config.epochs == 20
        assert config.minibatch == 500
        kind, config = preset("DNN2")
        assert config.hidden_layers == (500, 200, 100, 50, 10)
        assert config.epochs == 30
        with pytest.raises(ValueError, match="unknown model preset"):
            preset("DNN9")
