import json

import numpy as np
import pytest

from vembeam.dataset import GenerationConfig, SamplingRanges, generate_dataset
from vembeam.network import forward, init_parameters, input_gradient
from vembeam.training import (
    SobolevConfig,
    TaskWeights,
    TrainingConfig,
    _task_losses_and_grads,
    build_training_batch,
    displacement_loss,
    gradnorm_update,
    material_penalty_loss,
    sample_unit_sphere,
    sobolev_loss,
    train,
    unit_sphere_directions,
)

TINY_CONFIG = GenerationConfig(
    beam_length=2.0,
    elems_per_edge=2,
    order=4,
    beam_load=(-10e3,),
    ranges=SamplingRanges((100e9, 200e9), (2e-3, 8e-3), (1e-5, 1e-4)),
)


@pytest.fixture(scope="module")
def tiny_records():
    train_records, test_records, _ = generate_dataset(TINY_CONFIG, n_train=4, n_test=2, seed=7)
    return train_records, test_records


@pytest.fixture(scope="module")
def tiny_batch(tiny_records):
    train_records, _ = tiny_records
    batch, _ = build_training_batch(train_records, TrainingConfig())
    return batch


def small_params(rng, node_width=2):
    return init_parameters([node_width, 6, 4], [3, 5, 3], [7, 6, 3], rng)


class TestDisplacementLoss:
    def test_exact_prediction_is_zero(self, tiny_batch):
        rng = np.random.default_rng(0)
        params = small_params(rng)
        batch = tiny_batch
        predictions = forward(params, batch.node_features, batch.material_features)
        shifted = type(batch)(
            node_features=batch.node_features,
            material_features=batch.material_features,
            targets=predictions,
            jacobian_targets=batch.jacobian_targets,
            stats=batch.stats,
        )
        assert displacement_loss(shifted, params) == 0.0

    def test_unit_error_single_sample(self, tiny_batch):
        rng = np.random.default_rng(1)
        params = small_params(rng)
        batch = tiny_batch
        one = type(batch)(
            node_features=batch.node_features[:1],
            material_features=batch.material_features[:1],
            targets=forward(params, batch.node_features[:1], batch.material_features[:1])
            + np.array([[1.0, 0.0, 0.0]]),
            jacobian_targets=batch.jacobian_targets[:1],
            stats=batch.stats,
        )
        assert displacement_loss(one, params) == pytest.approx(1.0, rel=1e-12)

    def test_invariant_under_permutation(self, tiny_batch):
        rng = np.random.default_rng(2)
        params = small_params(rng)
        batch = tiny_batch
        perm = rng.permutation(len(batch.node_features))
        shuffled = type(batch)(
            node_features=batch.node_features[perm],
            material_features=batch.material_features[perm],
            targets=batch.targets[perm],
            jacobian_targets=batch.jacobian_targets[perm],
            stats=batch.stats,
        )
        assert displacement_loss(shuffled, params) == pytest.approx(
            displacement_loss(batch, params), rel=1e-12
        )


class TestUnitSphere:
    def test_unit_norm(self):
        rng = np.random.default_rng(3)
        for dim in (1, 2, 3, 7):
            v = sample_unit_sphere(dim, rng)
            assert abs(np.linalg.norm(v) - 1.0) <= 1e-12

    def test_mean_is_zero(self):
        rng = np.random.default_rng(4)
        draws = unit_sphere_directions(2, 100_000, rng)
        assert np.abs(draws.mean(axis=0)).max() < 1e-2

    def test_covariance_is_identity_over_d(self):
        rng = np.random.default_rng(5)
        for dim in (2, 3):
            draws = unit_sphere_directions(dim, 100_000, rng)
            covariance = draws.T @ draws / len(draws)
            assert np.abs(covariance - np.eye(dim) / dim).max() < 0.02 / dim + 0.01


class TestSobolevLoss:
    def test_zero_when_jacobian_matches(self, tiny_batch):
        rng = np.random.default_rng(6)
        params = small_params(rng)
        batch = tiny_batch
        jacobian = input_gradient(params, batch.node_features, batch.material_features)
        matched = type(batch)(
            node_features=batch.node_features,
            material_features=batch.material_features,
            targets=batch.targets,
            jacobian_targets=jacobian,
            stats=batch.stats,
        )
        directions = unit_sphere_directions(2, 16, rng)
        assert sobolev_loss(matched, params, directions=directions) == pytest.approx(0.0, abs=1e-28)

    def test_fixed_axis_direction_reduces_to_first_column(self, tiny_batch):
        rng = np.random.default_rng(7)
        params = small_params(rng)
        batch = tiny_batch
        jacobian = input_gradient(params, batch.node_features, batch.material_features)
        delta = jacobian - batch.jacobian_targets
        expected = float(np.mean(np.sum(delta[:, :, 0] ** 2, axis=1)))
        value = sobolev_loss(batch, params, directions=np.array([[1.0, 0.0]]))
        assert value == pytest.approx(expected, rel=1e-12)

    def test_expectation_matches_frobenius_over_d(self, tiny_batch):
        rng = np.random.default_rng(8)
        params = small_params(rng)
        batch = tiny_batch
        jacobian = input_gradient(params, batch.node_features, batch.material_features)
        delta = jacobian - batch.jacobian_targets
        exact = float(np.mean(np.sum(delta**2, axis=(1, 2)))) / 2.0
        directions = unit_sphere_directions(2, 100_000, rng)
        estimate = sobolev_loss(batch, params, directions=directions)
        assert abs(estimate - exact) <= 0.02 * exact

    def test_missing_targets_rejected(self, tiny_batch):
        batch = tiny_batch
        without = type(batch)(
            node_features=batch.node_features,
            material_features=batch.material_features,
            targets=batch.targets,
            jacobian_targets=None,
            stats=batch.stats,
        )
        with pytest.raises(ValueError, match="derivative targets"):
            sobolev_loss(without, small_params(np.random.default_rng(9)))


class TestMaterialPenalty:
    def test_zero_at_unit_scale(self, tiny_batch):
        params = small_params(np.random.default_rng(10))
        assert material_penalty_loss(tiny_batch, params, [1.0]) == 0.0

    def test_brute_force_recomputation(self, tiny_batch):
        rng = np.random.default_rng(11)
        params = small_params(rng)
        batch = tiny_batch
        scales = [0.6, 1.7]
        value = material_penalty_loss(batch, params, scales)
        total = 0.0
        for c in scales:
            shifted = batch.material_features.copy()
            shifted[:, 0] += np.log(c) / batch.stats.material_std[0]
            y_scaled = batch.stats.denormalize_output(forward(params, batch.node_features, shifted))
            y_base = batch.stats.denormalize_output(
                forward(params, batch.node_features, batch.material_features)
            )
            residual = (c * y_scaled - y_base) / batch.stats.output_std
            total += float(np.mean(np.sum(residual**2, axis=1)))
        assert value == pytest.approx(total / len(scales), rel=1e-12)


class TestGradNorm:
    def test_step_zero_ratios_are_one(self):
        losses = np.array([0.5, 2.0, 0.1])
        weights = TaskWeights(initial_losses=losses.copy())
        _, info = gradnorm_update(weights, losses, np.array([1.0, 2.0, 3.0]), 1.5, 0.025)
        assert np.allclose(info.ratios, 1.0)
        expected_mean = np.mean(weights.values * np.array([1.0, 2.0, 3.0]))
        assert np.allclose(info.targets, expected_mean)

    def test_renormalization_arithmetic(self):
        weights = TaskWeights(values=np.array([1.0, 1.0, 2.0]), initial_losses=np.ones(3))
        updated, _ = gradnorm_update(weights, np.ones(3), np.zeros(3), 1.5, 0.025)
        assert np.allclose(updated.values, [0.75, 0.75, 1.5])

    def test_balanced_fixed_point(self):
        weights = TaskWeights(initial_losses=np.array([1.0, 2.0, 3.0]))
        losses = np.array([0.5, 1.0, 1.5])  # equal ratios
        norms = np.array([2.0, 2.0, 2.0])
        updated, info = gradnorm_update(weights, losses, norms, 1.5, 0.025)
        assert info.loss == 0.0
        assert np.allclose(updated.values, weights.values)

    def test_sum_invariant_and_positivity(self):
        rng = np.random.default_rng(12)
        weights = TaskWeights(initial_losses=np.array([1.0, 1.0, 1.0]))
        for _ in range(200):
            losses = rng.uniform(0.01, 2.0, 3)
            norms = rng.uniform(0.0, 5.0, 3)
            weights, _ = gradnorm_update(weights, losses, norms, 1.5, 0.05)
            assert abs(weights.values.sum() - 3.0) <= 1e-12
            assert (weights.values > 0.0).all()

    def test_zero_initial_loss_pins_ratio(self):
        weights = TaskWeights(initial_losses=np.array([0.0, 1.0, 1.0]))
        _, info = gradnorm_update(weights, np.array([0.7, 1.0, 1.0]), np.ones(3), 1.5, 0.025)
        assert info.ratios[0] == pytest.approx(1.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        initial = rng.uniform(0.5, 2.0, 3)
        weights = TaskWeights(values=rng.uniform(0.5, 1.5, 3), initial_losses=initial)
        losses = rng.uniform(0.1, 2.0, 3)
        norms = rng.uniform(0.5, 3.0, 3)
        _, info = gradnorm_update(weights, losses, norms, 1.5, 0.0)
        targets = info.targets  # frozen

        def balance_loss(values):
            return float(np.abs(values * norms - targets).sum())

        step = 1e-7
        for i in range(3):
            up = weights.values.copy()
            up[i] += step
            down = weights.values.copy()
            down[i] -= step
            numeric = (balance_loss(up) - balance_loss(down)) / (2.0 * step)
            assert info.weight_gradient[i] == pytest.approx(numeric, rel=1e-6)


class TestTaskGradients:
    def test_total_gradient_is_weighted_sum(self, tiny_batch):
        # finite differences of the weighted total against the analytic
        # weighted sum of per-task gradients, sampled at random coordinates
        rng = np.random.default_rng(14)
        params = small_params(rng)
        batch = tiny_batch
        directions = unit_sphere_directions(2, 4, rng)
        scales = np.array([1.4])
        theta = np.array([0.9, 1.3, 0.8])
        config = TrainingConfig()
        losses, task_grads = _task_losses_and_grads(batch, params, directions, scales, config)

        def total_value():
            return (
                theta[0] * displacement_loss(batch, params)
                + theta[1] * sobolev_loss(batch, params, directions=directions)
                + theta[2] * material_penalty_loss(batch, params, scales)
            )

        layers = params.layers()
        step = 1e-6
        checked = 0
        for _ in range(20):
            li = int(rng.integers(0, len(layers)))
            array = layers[li].weight if rng.random() < 0.8 else layers[li].bias
            index = tuple(rng.integers(0, s) for s in array.shape)
            original = array[index]
            array[index] = original + step
            up = total_value()
            array[index] = original - step
            down = total_value()
            array[index] = original
            numeric = (up - down) / (2.0 * step)
            analytic = sum(
                theta[t] * (task_grads[t][li][0] if array is layers[li].weight else task_grads[t][li][1])[index]
                for t in range(3)
            )
            if abs(numeric) > 1e-7:
                assert analytic == pytest.approx(numeric, rel=2e-5)
                checked += 1
        assert checked >= 10

    def test_loss_values_match_public_functions(self, tiny_batch):
        rng = np.random.default_rng(15)
        params = small_params(rng)
        batch = tiny_batch
        directions = unit_sphere_directions(2, 6, rng)
        scales = np.array([0.7, 1.3])
        losses, _ = _task_losses_and_grads(batch, params, directions, scales, TrainingConfig())
        assert losses[0] == pytest.approx(displacement_loss(batch, params), rel=1e-12)
        assert losses[1] == pytest.approx(sobolev_loss(batch, params, directions=directions), rel=1e-12)
        assert losses[2] == pytest.approx(material_penalty_loss(batch, params, scales), rel=1e-12)


class TestNormalizationStats:
    def test_constant_feature_gets_unit_std(self):
        from vembeam.surrogate import NormalizationStats

        node = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        material = np.array([[0.5, 1.0, 2.0]] * 3)
        output = np.array([[0.0, 1.0, -1.0], [0.0, 2.0, 1.0], [0.0, 3.0, 0.0]])
        stats = NormalizationStats.from_arrays(node, material, output)
        assert stats.node_std[1] == 1.0
        assert np.all(stats.material_std == 1.0)
        assert stats.output_std[0] == 1.0
        assert stats.node_std[0] > 0.0
        normalized = stats.normalize_output(output)
        assert np.allclose(stats.denormalize_output(normalized), output, rtol=1e-14)


class TestJacobianTargets:
    def test_single_member_node_gets_rank_one_target(self, tiny_records):
        train_records, _ = tiny_records
        batch, stats = build_training_batch(train_records, TrainingConfig())
        for i, record in enumerate(train_records):
            if len(record.derivatives) == 1:
                entry = record.derivatives[0]
                c, s = entry.direction
                g = np.array(
                    [
                        c * entry.d_axial - s * entry.d_transverse,
                        s * entry.d_axial + c * entry.d_transverse,
                        entry.d_theta,
                    ]
                )
                expected = np.outer(g, [c, s]) * stats.node_std[:2] / stats.output_std[:, None]
                assert np.allclose(batch.jacobian_targets[i], expected, rtol=1e-10)
                break
        else:
            pytest.fail("no single-member node found")

    def test_corner_node_satisfies_both_directions(self, tiny_records):
        train_records, _ = tiny_records
        batch, stats = build_training_batch(train_records, TrainingConfig())
        for i, record in enumerate(train_records):
            if len(record.derivatives) == 2:
                raw = (
                    batch.jacobian_targets[i]
                    * stats.output_std[:, None]
                    / stats.node_std[None, :2]
                )
                for entry in record.derivatives:
                    c, s = entry.direction
                    g = np.array(
                        [
                            c * entry.d_axial - s * entry.d_transverse,
                            s * entry.d_axial + c * entry.d_transverse,
                            entry.d_theta,
                        ]
                    )
                    assert np.allclose(raw @ np.array([c, s]), g, rtol=1e-8, atol=1e-12)
                return
        pytest.fail("no two-member node found")


class TestTrainLoop:
    def test_zero_targets_zero_head_stays_zero(self):
        config = GenerationConfig(
            beam_length=2.0, elems_per_edge=1, order=4, beam_load=(), ranges=TINY_CONFIG.ranges
        )
        records, _, _ = generate_dataset(config, n_train=1, n_test=0, seed=0)
        training = TrainingConfig(epochs=5, node_hidden=(4,), material_hidden=(4,), head_hidden=(4,))
        rng = np.random.default_rng(16)
        params = init_parameters([2, 4], [3, 4], [8, 4, 3], rng)
        params.head_layers[-1].weight[:] = 0.0
        params.head_layers[-1].bias[:] = 0.0
        result = train(records, training, SobolevConfig(n_draws=2), initial_params=params)
        for row in result.history:
            assert row.losses == (0.0, 0.0, 0.0)
        assert np.allclose(result.state.weights.values, 1.0)

    def test_same_seed_bit_identical(self, tiny_records):
        train_records, _ = tiny_records
        config = TrainingConfig(
            epochs=8, node_hidden=(8, 6), material_hidden=(6, 4), head_hidden=(8,), seed=11
        )

        def run():
            result = train(train_records, config, SobolevConfig(n_draws=3, seed=11))
            return json.dumps(result.model.to_dict()), result.history

        first_model, first_history = run()
        second_model, second_history = run()
        assert first_model == second_model
        assert first_history == second_history

    def test_weight_sum_after_every_epoch(self, tiny_records):
        train_records, _ = tiny_records
        config = TrainingConfig(epochs=12, node_hidden=(8,), material_hidden=(6,), head_hidden=(8,), seed=3)
        result = train(train_records, config, SobolevConfig(n_draws=2, seed=3))
        assert result.status == "completed"
        for row in result.history:
            assert abs(sum(row.weights) - 3.0) <= 1e-12
        assert abs(result.state.weights.values.sum() - 3.0) <= 1e-12

    def test_divergence_stop_reported(self, tiny_records):
        train_records, _ = tiny_records
        config = TrainingConfig(
            epochs=50,
            learning_rate=1e3,  # force a blow-up
            divergence_threshold=10.0,
            node_hidden=(6,),
            material_hidden=(4,),
            head_hidden=(6,),
            seed=5,
        )
        result = train(train_records, config, SobolevConfig(n_draws=2, seed=5))
        assert result.status in ("diverged", "non_finite_gradient")
        assert len(result.history) < 50

    def test_loss_decreases_on_tiny_problem(self, tiny_records):
        train_records, _ = tiny_records
        config = TrainingConfig(
            epochs=400,
            learning_rate=3e-3,
            node_hidden=(16, 8),
            material_hidden=(8, 6),
            head_hidden=(16,),
            seed=2,
        )
        result = train(train_records, config, SobolevConfig(n_draws=4, seed=2))
        first = sum(w * l for w, l in zip(result.history[0].weights, result.history[0].losses))
        last = sum(w * l for w, l in zip(result.history[-1].weights, result.history[-1].losses))
        assert last < first / 5.0

    def test_history_length_matches_completed_epochs(self, tiny_records):
        train_records, _ = tiny_records
        config = TrainingConfig(epochs=6, node_hidden=(4,), material_hidden=(4,), head_hidden=(4,), seed=9)
        result = train(train_records, config, SobolevConfig(n_draws=2, seed=9))
        assert len(result.history) == 6
        assert [row.epoch for row in result.history] == list(range(1, 7))

    def test_optional_support_flag_feature(self, tiny_records):
        train_records, _ = tiny_records
        config = TrainingConfig(
            epochs=4,
            node_hidden=(6,),
            material_hidden=(4,),
            head_hidden=(6,),
            include_support_flag=True,
            seed=4,
        )
        batch, _ = build_training_batch(train_records, config)
        assert batch.node_features.shape[1] == 3
        result = train(train_records, config, SobolevConfig(n_draws=2, seed=4))
        assert result.status == "completed"
        assert result.model.params.node_input_width == 3
        # inference without explicit flags treats every point as unsupported
        prediction = result.model.predict(
            np.array([[0.5, 2.0]]), train_records[0].material
        )
        assert prediction.shape == (1, 3)
        assert np.isfinite(result.model.input_jacobian(np.array([[0.5, 2.0]]), train_records[0].material)).all()
