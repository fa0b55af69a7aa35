"""
Tests for reference models, optimizer steps, schedules, the client text
pipeline and checkpoints.
"""

import math

import numpy as np
import pytest

from src.fedsim import (
    AdamState,
    BigramLM,
    CheckpointError,
    ClientPipeline,
    ClientUpdate,
    DimensionMismatchError,
    DivergenceError,
    FedSimError,
    LinearRegression,
    NonFiniteError,
    NoPredictionPositionsError,
    RoundConfig,
    ScheduleError,
    ScheduleSpec,
    aggregate,
    client_update,
    load_checkpoint,
    lr_schedule,
    pack_sequences,
    save_checkpoint,
    server_adam_step,
    server_sgd_step,
    tokenize_hashed,
)
from src.streaming import EmptyGroupError


def _numeric_grad(model, params, batch, eps=1e-6):
    grad = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += eps
        up = model.loss_and_grad(bumped, batch)[0]
        bumped[i] -= 2 * eps
        down = model.loss_and_grad(bumped, batch)[0]
        grad[i] = (up - down) / (2 * eps)
    return grad


def _regression_batch(rng, n=8, d=3):
    return rng.normal(size=(n, d)), rng.normal(size=n)


class TestBigramLM:
    """Softmax bigram model"""

    def test_uniform_logits_give_log_vocab(self):
        """Test that zero parameters give a loss of log V"""
        model = BigramLM(8)
        batch = np.array([[1, 2, 3, 4], [5, 6, 7, 1]])
        loss, _ = model.loss_and_grad(np.zeros(model.dimension), batch)
        assert abs(loss - math.log(8)) < 1e-12

    def test_gradient_matches_finite_differences(self):
        """Test the analytic gradient against finite differences"""
        rng = np.random.default_rng(0)
        model = BigramLM(5)
        for _ in range(20):
            params = rng.normal(size=model.dimension)
            batch = rng.integers(0, 5, size=(3, 6))
            batch[:, 1] = rng.integers(1, 5, size=3)
            _, grad = model.loss_and_grad(params, batch)
            numeric = _numeric_grad(model, params, batch)
            assert np.allclose(grad, numeric, rtol=1e-6, atol=1e-8)

    def test_pad_targets_are_masked(self):
        """Test that padding targets contribute nothing"""
        model = BigramLM(6)
        params = np.random.default_rng(1).normal(size=model.dimension)
        padded, _ = model.loss_and_grad(params, np.array([[1, 2, 3, 0, 0]]))
        plain, _ = model.loss_and_grad(params, np.array([[1, 2, 3]]))
        assert padded == pytest.approx(plain, abs=1e-15)

    def test_loss_agrees_with_loss_and_grad(self):
        """Test that both loss entry points agree"""
        model = BigramLM(6)
        params = np.random.default_rng(2).normal(size=model.dimension)
        batch = np.array([[1, 4, 2, 5]])
        assert model.loss(params, batch) == pytest.approx(model.loss_and_grad(params, batch)[0])

    def test_all_pad_targets(self):
        """Test a batch with no prediction positions"""
        model = BigramLM(4)
        with pytest.raises(NoPredictionPositionsError):
            model.loss_and_grad(np.zeros(16), np.array([[3, 0, 0]]))

    def test_dimension_mismatch(self):
        """Test parameters of the wrong size"""
        model = BigramLM(4)
        with pytest.raises(DimensionMismatchError):
            model.loss_and_grad(np.zeros(15), np.array([[1, 2]]))
        with pytest.raises(DimensionMismatchError):
            model.loss_and_grad(np.zeros(16), np.array([[1, 9]]))


class TestLinearRegression:
    """Least-squares toy model"""

    def test_gradient_matches_finite_differences(self):
        """Test the regression gradient against finite differences"""
        rng = np.random.default_rng(3)
        model = LinearRegression(3)
        for _ in range(20):
            params = rng.normal(size=3)
            batch = _regression_batch(rng)
            _, grad = model.loss_and_grad(params, batch)
            assert np.allclose(grad, _numeric_grad(model, params, batch), rtol=1e-6, atol=1e-8)


class TestClientUpdate:
    """Local client work"""

    def test_single_batch_identity(self):
        """Test that one batch gives the same direction in both modes"""
        rng = np.random.default_rng(4)
        model = LinearRegression(3)
        params = rng.normal(size=3)
        batches = [_regression_batch(rng)]
        avg = client_update(model, params, batches, 0.05, "fedavg")
        sgd = client_update(model, params, batches, 0.05, "fedsgd")
        assert np.array_equal(avg.delta, 0.05 * sgd.delta)
        assert avg.mean_loss == sgd.mean_loss

    def test_fedavg_loss_uses_evolving_model(self):
        """Test that FedAvg reports losses along its local trajectory"""
        rng = np.random.default_rng(5)
        model = LinearRegression(3)
        params = rng.normal(size=3)
        first, second = _regression_batch(rng), _regression_batch(rng)
        update = client_update(model, params, [first, second], 0.1, "fedavg")

        loss1, grad1 = model.loss_and_grad(params, first)
        moved = params - 0.1 * grad1
        loss2, grad2 = model.loss_and_grad(moved, second)
        assert update.mean_loss == pytest.approx((loss1 + loss2) / 2)
        assert np.allclose(update.delta, params - (moved - 0.1 * grad2))

    def test_fedsgd_loss_uses_broadcast_model(self):
        """Test that FedSGD reports losses at the broadcast model"""
        rng = np.random.default_rng(6)
        model = LinearRegression(3)
        params = rng.normal(size=3)
        batches = [_regression_batch(rng), _regression_batch(rng)]
        update = client_update(model, params, batches, 0.1, "fedsgd")
        losses, grads = zip(*(model.loss_and_grad(params, b) for b in batches))
        assert update.mean_loss == pytest.approx(np.mean(losses))
        assert np.allclose(update.delta, np.mean(grads, axis=0))

    def test_non_finite_loss_diverges(self):
        """Test that a non-finite local loss raises"""
        model = LinearRegression(1)
        with pytest.raises(DivergenceError) as exc_info:
            client_update(
                model, np.array([np.inf]), [(np.ones((2, 1)), np.ones(2))], 0.1, "fedavg",
                round_index=3, client_key=b"c7",
            )
        assert exc_info.value.round_index == 3
        assert exc_info.value.client_key == b"c7"

    def test_unknown_mode(self):
        """Test an unknown update mode"""
        with pytest.raises(FedSimError):
            client_update(LinearRegression(1), np.zeros(1), [(np.ones((1, 1)), [1.0])], 0.1, "fedprox")


class TestAggregate:
    """Cohort averaging"""

    def test_order_independent_bitwise(self):
        """Test that the cohort mean does not depend on client order"""
        rng = np.random.default_rng(7)
        updates = [
            ClientUpdate(delta=rng.normal(size=50), mean_loss=0.0, num_batches=1, client_key=k)
            for k in (b"c", b"a", b"d", b"b")
        ]
        expected = aggregate(updates)
        assert np.array_equal(aggregate(list(reversed(updates))), expected)
        assert np.allclose(expected, np.mean([u.delta for u in updates], axis=0))

    def test_empty_cohort(self):
        """Test aggregation of an empty cohort"""
        with pytest.raises(FedSimError):
            aggregate([])

    def test_shape_mismatch(self):
        """Test deltas of different shapes"""
        updates = [
            ClientUpdate(np.zeros(2), 0.0, 1, b"a"),
            ClientUpdate(np.zeros(3), 0.0, 1, b"b"),
        ]
        with pytest.raises(DimensionMismatchError):
            aggregate(updates)


class TestServerSteps:
    """Server optimizers"""

    def test_adam_first_step_closed_form(self):
        """Test the first Adam step against its closed form"""
        rng = np.random.default_rng(8)
        params, delta = rng.normal(size=10), rng.normal(size=10)
        state, new_params = server_adam_step(AdamState.fresh(10), params, delta, 0.01)
        expected = params - 0.01 * delta / (np.abs(delta) + 1e-8)
        assert np.allclose(new_params, expected, rtol=0, atol=1e-12)
        assert state.step == 1

    def test_sgd_step(self):
        """Test the plain server step"""
        assert np.array_equal(server_sgd_step(np.ones(2), np.array([1.0, -1.0]), 0.5), [0.5, 1.5])

    def test_non_finite_inputs(self):
        """Test that non-finite deltas are refused"""
        with pytest.raises(NonFiniteError):
            server_sgd_step(np.zeros(2), np.array([np.nan, 0.0]), 0.1)

    def test_shape_mismatch(self):
        """Test a delta of the wrong shape"""
        with pytest.raises(DimensionMismatchError):
            server_adam_step(AdamState.fresh(3), np.zeros(3), np.zeros(2), 0.1)


class TestSchedules:
    """Server learning-rate schedules"""

    def test_warmup_cosine_boundaries(self):
        """Test warmup cosine at its boundaries"""
        spec = ScheduleSpec("warmup_cosine", eta_max=0.3, total_rounds=100, warmup_fraction=0.1)
        assert spec.warmup_rounds == 10
        assert abs(lr_schedule(spec, 0)) < 1e-12
        assert abs(lr_schedule(spec, 10) - 0.3) < 1e-12
        assert abs(lr_schedule(spec, 99)) < 1e-12

    def test_warmup_exponential_boundaries(self):
        """Test warmup exponential at its boundaries"""
        spec = ScheduleSpec("warmup_exponential", eta_max=1.0, total_rounds=50, warmup_fraction=0.2)
        assert abs(lr_schedule(spec, 0)) < 1e-12
        assert abs(lr_schedule(spec, 10) - 1.0) < 1e-12
        assert lr_schedule(spec, 49) == pytest.approx(1e-3)
        rates = [lr_schedule(spec, r) for r in range(10, 50)]
        assert rates == sorted(rates, reverse=True)

    def test_warmup_is_linear(self):
        """Test that warmup ramps linearly"""
        spec = ScheduleSpec("warmup_cosine", eta_max=1.0, total_rounds=30, warmup_fraction=0.1)
        assert spec.warmup_rounds == 3
        assert lr_schedule(spec, 1) == pytest.approx(1 / 3)

    def test_constant(self):
        """Test the constant schedule"""
        spec = ScheduleSpec("constant", eta_max=0.02, total_rounds=5)
        assert [lr_schedule(spec, r) for r in range(5)] == [0.02] * 5

    def test_single_round(self):
        """Test a schedule of one round"""
        spec = ScheduleSpec("warmup_cosine", eta_max=0.5, total_rounds=1)
        assert lr_schedule(spec, 0) == 0.5

    def test_out_of_range_round(self):
        """Test a round outside the schedule"""
        spec = ScheduleSpec("constant", eta_max=0.1, total_rounds=3)
        with pytest.raises(ScheduleError):
            lr_schedule(spec, 3)

    def test_validation(self):
        """Test schedule validation"""
        with pytest.raises(ScheduleError):
            ScheduleSpec("linear", eta_max=0.1, total_rounds=3)
        with pytest.raises(ScheduleError):
            ScheduleSpec("constant", eta_max=0.0, total_rounds=3)
        with pytest.raises(ScheduleError):
            ScheduleSpec("constant", eta_max=0.1, total_rounds=0)


class TestRoundConfig:
    """Round configuration checks"""

    def test_examples_per_client_follows_batching(self):
        """Test that examples per client is derived from batching"""
        config = RoundConfig("fedavg", ScheduleSpec("constant", 0.1, 1), batches_per_client=4, batch_size=8)
        assert config.examples_per_client == 32

    def test_inconsistent_examples_per_client(self):
        """Test an examples count that disagrees with batching"""
        with pytest.raises(FedSimError):
            RoundConfig(
                "fedavg", ScheduleSpec("constant", 0.1, 1),
                batches_per_client=4, batch_size=8, examples_per_client=30,
            )

    def test_unknown_algorithm(self):
        """Test an unknown algorithm name"""
        with pytest.raises(FedSimError):
            RoundConfig("scaffold", ScheduleSpec("constant", 0.1, 1))


class TestClientPipeline:
    """Hashed tokens and fixed-size batches"""

    def test_tokens_are_in_range_and_stable(self):
        """Test that hashed ids are stable and inside the vocabulary"""
        tokens = tokenize_hashed("the cat sat on the mat", 16)
        assert len(tokens) == 6
        assert all(1 <= t < 16 for t in tokens)
        assert tokens[0] == tokens[4]
        assert tokens == tokenize_hashed("the cat sat on the mat", 16)

    def test_pack_sequences(self):
        """Test packing tokens into fixed-length rows"""
        packed = pack_sequences([1, 2, 3, 4, 5], seq_len=3)
        assert packed.dtype == np.int64
        assert packed.tolist() == [[1, 2, 3], [4, 5, 0]]
        assert pack_sequences([], seq_len=3).shape == (0, 3)

    def test_batches_shape_and_cycling(self):
        """Test batch shapes and cycling through short groups"""
        pipeline = ClientPipeline(
            vocab_size=16, seq_len=4, batch_size=2, batches_per_client=3, payload_format="text"
        )
        batches = pipeline.batches([b"a b c d e f g h"])
        assert len(batches) == 3
        assert all(b.shape == (2, 4) for b in batches)
        assert np.array_equal(batches[0][0], batches[1][0])
        assert np.array_equal(batches[0][1], batches[1][1])

    def test_group_without_prediction_positions(self):
        """Test a group too short to predict anything"""
        pipeline = ClientPipeline(
            vocab_size=16, seq_len=4, batch_size=1, batches_per_client=1, payload_format="text"
        )
        with pytest.raises(EmptyGroupError):
            pipeline.batches([b"   "])
        with pytest.raises(EmptyGroupError):
            pipeline.batches([b"lonely"])

    def test_single_token_tail_row_is_dropped(self):
        """Test that a one-token tail row is dropped"""
        pipeline = ClientPipeline(
            vocab_size=16, seq_len=3, batch_size=1, batches_per_client=2, payload_format="text"
        )
        batches = pipeline.batches([b"a b c d"])
        assert all(b[0, 1] != 0 for b in batches)


class TestCheckpoints:
    """Checkpoint files"""

    def test_round_trip_with_adam_state(self, tmp_path):
        """Test saving and loading a checkpoint with optimizer state"""
        rng = np.random.default_rng(9)
        params = rng.normal(size=12)
        state = AdamState(step=5, m=rng.normal(size=12), v=rng.random(12))
        spec = ScheduleSpec("warmup_cosine", 0.1, 20)
        path = save_checkpoint(tmp_path / "ckpt.bin", params, state, round_index=20, schedule=spec)

        loaded_params, loaded_state, header = load_checkpoint(path)
        assert np.array_equal(loaded_params, params)
        assert np.array_equal(loaded_state.m, state.m)
        assert np.array_equal(loaded_state.v, state.v)
        assert loaded_state.step == 5
        assert header["dimension"] == 12
        assert header["round"] == 20
        assert header["schedule"]["kind"] == "warmup_cosine"

    def test_without_state(self, tmp_path):
        """Test a checkpoint without optimizer state"""
        path = save_checkpoint(tmp_path / "ckpt.bin", np.arange(4.0))
        params, state, _ = load_checkpoint(path)
        assert params.tolist() == [0.0, 1.0, 2.0, 3.0]
        assert state is None

    def test_truncated_file(self, tmp_path):
        """Test loading a truncated checkpoint"""
        path = save_checkpoint(tmp_path / "ckpt.bin", np.arange(4.0))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_garbage_file(self, tmp_path):
        """Test loading a file that is not a checkpoint"""
        path = tmp_path / "ckpt.bin"
        path.write_bytes(b"\x00")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
