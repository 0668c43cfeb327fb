import numpy as np
import pytest

from samba.data import Sample
from samba.model import HyperParams, init_model
from samba.training import (
    AdamState,
    Metrics,
    NonFiniteError,
    TrainConfig,
    adam_step,
    evaluate,
    mse_loss,
    predict_samples,
    train,
)
from samba.tensor import Tape, Tensor, ShapeError

from conftest import finite_diff_grad, rel_err

TINY = HyperParams(
    n_features=4, window=3, embed_dim=4, state_dim=2,
    ffn_hidden=2, layers=1, cheb_order=1, node_dim=2,
)


def toy_samples(n, n_features=4, window=3, seed=0, signal=True):
    """Windows whose next-day return is a linear read of the last row."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=n_features)
    samples = []
    for i in range(n):
        x = rng.uniform(0.0, 1.0, size=(window, n_features))
        target = 0.02 * float(x[-1] @ w) if signal else float(rng.normal())
        samples.append(Sample(window=x, target=target, target_date=window + i))
    return samples


class TestMseLoss:
    def test_zero_when_equal(self):
        pred = Tensor(np.array([1.0, 2.0]))
        assert mse_loss(pred, np.array([1.0, 2.0])).item() == 0.0

    def test_unit_error(self):
        assert mse_loss(Tensor(np.ones(2)), np.zeros(2)).item() == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(Tensor(np.ones(3)), np.zeros(2))

    def test_gradient_formula(self, rng):
        pred = Tensor(rng.normal(size=5), requires_grad=True)
        target = rng.normal(size=5)
        with Tape() as tape:
            tape.backward(mse_loss(pred, target))
        assert np.allclose(pred.grad, 2.0 * (pred.data - target) / 5.0)
        g_fd = finite_diff_grad(lambda: mse_loss(pred, target).item(), pred)
        assert rel_err(pred.grad, g_fd) < 1e-6


class TestAdam:
    def params_of(self, value):
        return [("w", Tensor(np.array([value]), requires_grad=True))]

    def test_zero_gradient_no_move(self):
        params = self.params_of(1.5)
        params[0][1].grad = np.zeros(1)
        state = AdamState.for_params(params)
        adam_step(params, state, TrainConfig(epochs=1))
        assert params[0][1].data[0] == 1.5

    def test_first_step_size(self):
        # bias correction makes m_hat/sqrt(v_hat) = 1, so the step is ~lr
        params = self.params_of(0.0)
        params[0][1].grad = np.ones(1)
        state = AdamState.for_params(params)
        adam_step(params, state, TrainConfig(lr=0.001, epochs=1))
        assert params[0][1].data[0] == pytest.approx(-0.001, abs=1e-10)

    def test_step_counter(self):
        params = self.params_of(0.0)
        state = AdamState.for_params(params)
        for expected in (1, 2, 3):
            params[0][1].grad = np.ones(1)
            adam_step(params, state, TrainConfig(epochs=1))
            assert state.step == expected

    def test_missing_grad_skipped(self):
        params = self.params_of(2.0)
        state = AdamState.for_params(params)
        adam_step(params, state, TrainConfig(epochs=1))
        assert params[0][1].data[0] == 2.0


class TestTrainLoop:
    def test_deterministic_histories(self):
        def run():
            model = init_model(TINY, seed=3)
            hist = train(
                model,
                toy_samples(24),
                toy_samples(6, seed=1),
                TrainConfig(lr=0.01, epochs=4, batch_size=8, seed=3),
            )
            return hist, model

        h1, m1 = run()
        h2, m2 = run()
        assert [(r.train_loss, r.val_rmse) for r in h1] == [
            (r.train_loss, r.val_rmse) for r in h2
        ]
        for (_, t1), (_, t2) in zip(m1.named_parameters(), m2.named_parameters()):
            assert np.array_equal(t1.data, t2.data)

    def test_loss_decreases_on_linear_signal(self):
        model = init_model(TINY, seed=0)
        hist = train(
            model,
            toy_samples(48),
            [],
            TrainConfig(lr=0.01, epochs=200, batch_size=16, seed=0),
        )
        assert hist[-1].train_loss < 0.1 * hist[0].train_loss

    def test_returns_best_validation_parameters(self):
        model = init_model(TINY, seed=5)
        val = toy_samples(8, seed=2)
        hist = train(
            model,
            toy_samples(32, seed=4),
            val,
            TrainConfig(lr=0.02, epochs=6, batch_size=8, seed=5),
        )
        best = min(h.val_rmse for h in hist)
        preds = predict_samples(model, val)
        targets = np.array([s.target for s in val])
        restored = float(np.sqrt(np.mean((preds - targets) ** 2)))
        assert restored == pytest.approx(best, rel=1e-12)

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            train(init_model(TINY, seed=0), [], [], TrainConfig(epochs=1))

    def test_nonfinite_abort_names_op(self):
        model = init_model(TINY, seed=0)
        bad = model.stack.layers[0].fwd.proj_x.W
        bad.data[0, 0] = np.inf
        with pytest.raises(NonFiniteError, match="matmul"):
            train(model, toy_samples(8), [], TrainConfig(epochs=1, batch_size=4))


class TestEvaluate:
    def test_perfect_prediction(self, rng):
        y = rng.normal(size=20)
        m = evaluate(y, y)
        assert (m.rmse, m.ic, m.ric) == (0.0, 1.0, 1.0)
        assert not m.degenerate

    def test_anti_correlation(self, rng):
        y = rng.normal(size=20)
        m = evaluate(-y, y)
        assert m.ic == pytest.approx(-1.0)
        assert m.ric == pytest.approx(-1.0)

    def test_spearman_hand_case(self):
        m = evaluate(np.array([1.0, 2.0, 3.0]), np.array([1.0, 3.0, 2.0]))
        assert m.ric == pytest.approx(0.5, abs=1e-12)

    def test_degenerate_series(self):
        m = evaluate(np.ones(5), np.arange(5.0))
        assert m.degenerate and m.ic == 0.0 and m.ric == 0.0

    def test_rmse_scales_linearly(self, rng):
        pred, target = rng.normal(size=30), rng.normal(size=30)
        base = evaluate(pred, target).rmse
        assert evaluate(3.0 * pred, 3.0 * target).rmse == pytest.approx(3.0 * base)

    def test_ic_invariant_under_affine(self, rng):
        pred, target = rng.normal(size=30), rng.normal(size=30)
        base = evaluate(pred, target)
        shifted = evaluate(2.5 * pred + 1.0, target)
        assert shifted.ic == pytest.approx(base.ic, abs=1e-12)

    def test_ric_invariant_under_monotone(self, rng):
        pred, target = rng.normal(size=30), rng.normal(size=30)
        base = evaluate(pred, target)
        warped = evaluate(np.exp(pred), target)
        assert warped.ric == pytest.approx(base.ric, abs=1e-12)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            evaluate(np.array([1.0]), np.array([1.0]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            evaluate(np.ones(3), np.ones(4))
