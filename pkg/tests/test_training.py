import json

import numpy as np
import pytest
from scipy import stats

from robustlab.data import Dataset, synth_blobs
from robustlab.gaussian import std_normal_cdf
from robustlab.models import LinearModel
from robustlab.rng import substream
from robustlab.training import (
    ModelSpec,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    gaussian_augment_batch,
    train,
)


def separable_blobs(seed=0, split="train"):
    return synth_blobs(2, 150, 8, centers_scale=2.0, sigma=0.25, seed=seed, split=split)


class TestGaussianAugmentBatch:
    def test_zero_sigma_is_identity(self):
        batch = substream(0, "aug.t").normal(size=(10, 4))
        out = gaussian_augment_batch(batch, 0.0, substream(0, "aug.rng"))
        np.testing.assert_array_equal(out, batch)

    def test_scales_are_uniform(self):
        # KS test on the drawn scales against U(0, 0.4) over 10^4 draws
        batch = np.zeros((10_000, 64))
        noisy, scales = gaussian_augment_batch(
            batch, 0.4, substream(42, "aug.ks"), return_scales=True
        )
        assert scales.min() >= 0.0 and scales.max() <= 0.4
        result = stats.kstest(scales, "uniform", args=(0.0, 0.4))
        assert result.pvalue > 0.01
        # and the added noise really follows the drawn scales
        sample_std = np.std(noisy - batch, axis=1, ddof=1)
        big = scales > 0.2
        ratio = sample_std[big] / scales[big]
        assert abs(np.mean(ratio) - 1.0) < 0.05

    def test_same_seed_bit_identical(self):
        batch = substream(1, "aug.batch").normal(size=(32, 6))
        a = gaussian_augment_batch(batch, 0.3, substream(7, "aug.rep"))
        b = gaussian_augment_batch(batch, 0.3, substream(7, "aug.rep"))
        np.testing.assert_array_equal(a, b)

    def test_clip_keeps_unit_interval(self):
        batch = np.full((200, 5), 0.5)
        out = gaussian_augment_batch(batch, 2.0, substream(2, "aug.clip"), clip=True)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            gaussian_augment_batch(np.zeros((2, 2)), -0.1, substream(0, "aug.bad"))


class TestTrain:
    def test_linear_separates_blobs(self):
        ds = separable_blobs()
        config = TrainConfig(epochs=20, batch_size=32, learning_rate=0.5, seed=3)
        model, report = train(ds, ModelSpec("linear"), config)
        assert report.epochs[-1]["train_acc"] >= 0.99
        assert evaluate(model, ds) >= 0.99

    def test_mlp_separates_blobs(self):
        ds = separable_blobs()
        config = TrainConfig(epochs=25, batch_size=32, learning_rate=0.2, seed=3)
        model, report = train(ds, ModelSpec("mlp", (16,)), config)
        assert report.epochs[-1]["train_acc"] >= 0.99

    def test_zero_epochs_returns_initial_model(self):
        ds = separable_blobs()
        config = TrainConfig(epochs=0, batch_size=32, learning_rate=0.1, seed=3)
        model, report = train(ds, ModelSpec("linear"), config)
        assert isinstance(model, LinearModel)
        np.testing.assert_array_equal(model.weights, np.zeros((2, 8)))
        assert report.epochs == []

    def test_deterministic_given_seed(self):
        ds = separable_blobs()
        config = TrainConfig(
            epochs=8,
            batch_size=16,
            learning_rate=0.2,
            weight_decay=5e-4,
            augment_sigma_max=0.3,
            seed=11,
        )
        m1, r1 = train(ds, ModelSpec("mlp", (12,)), config)
        m2, r2 = train(ds, ModelSpec("mlp", (12,)), config)
        for W1, W2 in zip(m1.weights, m2.weights):
            np.testing.assert_array_equal(W1, W2)
        assert r1.epochs == r2.epochs

    def test_lr_schedule_applies(self):
        ds = separable_blobs()
        base = TrainConfig(epochs=6, batch_size=32, learning_rate=0.5, seed=5)
        decayed = TrainConfig(
            epochs=6,
            batch_size=32,
            learning_rate=0.5,
            lr_decay_schedule=((1, 1e-9),),
            seed=5,
        )
        m_base, _ = train(ds, ModelSpec("linear"), base)
        m_dec, _ = train(ds, ModelSpec("linear"), decayed)
        # after the decay at epoch 1 the decayed run barely moves
        assert not np.allclose(m_base.weights, m_dec.weights)

    @pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
    def test_divergence_raises(self):
        ds = separable_blobs()
        config = TrainConfig(epochs=50, batch_size=32, learning_rate=1e18, seed=3)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(ds, ModelSpec("mlp", (8,)), config)

    def test_report_json_shape(self):
        ds = separable_blobs()
        test_ds = separable_blobs(seed=1, split="test")
        config = TrainConfig(epochs=3, batch_size=32, learning_rate=0.3, seed=3)
        _, report = train(
            ds, ModelSpec("linear"), config, test_dataset=test_ds, test_noise_sigma=0.2
        )
        payload = json.loads(report.to_json())
        assert [e["epoch"] for e in payload["epochs"]] == [0, 1, 2]
        assert set(payload["epochs"][0]) == {"epoch", "loss", "train_acc"}
        assert 0.0 <= payload["final"]["clean_test_acc"] <= 1.0
        assert 0.0 <= payload["final"]["noisy_test_acc"] <= 1.0


class TestEvaluate:
    def test_perfect_model_clean(self):
        ds = separable_blobs()
        config = TrainConfig(epochs=20, batch_size=32, learning_rate=0.5, seed=3)
        model, _ = train(ds, ModelSpec("linear"), config)
        assert evaluate(model, ds) >= 0.99

    def test_noise_accuracy_matches_halfspace_rate(self):
        # single point at distance d from a plane: accuracy = 1 - Phi(-d/sigma)
        w = np.zeros(6)
        w[0] = 1.0
        model = LinearModel(np.stack([w, -w]), np.array([-0.3, 0.3]))
        ds = Dataset(np.zeros((1, 6)), np.array([1]), "test")
        sigma, draws = 0.2, 4000
        acc = evaluate(model, ds, noise_sigma=sigma, n_noise_draws=draws, seed=9)
        expected = 1.0 - std_normal_cdf(-0.3 / sigma)
        se = np.sqrt(expected * (1 - expected) / draws)
        assert abs(acc - expected) <= 3 * se

    def test_constant_prediction_on_balanced_data(self):
        ds = synth_blobs(4, 100, 8, centers_scale=1.0, sigma=0.1, seed=2)
        model = LinearModel(np.zeros((4, 8)), np.array([1.0, 0.0, 0.0, 0.0]))
        assert evaluate(model, ds) == pytest.approx(0.25, abs=1e-12)

    def test_noisy_eval_deterministic(self):
        ds = separable_blobs()
        model = LinearModel(np.eye(2, 8), np.zeros(2))
        a = evaluate(model, ds, noise_sigma=0.3, n_noise_draws=5, seed=4)
        b = evaluate(model, ds, noise_sigma=0.3, n_noise_draws=5, seed=4)
        assert a == b

    def test_draw_guard(self):
        ds = separable_blobs()
        model = LinearModel(np.eye(2, 8), np.zeros(2))
        with pytest.raises(ValueError):
            evaluate(model, ds, noise_sigma=0.1, n_noise_draws=0)
