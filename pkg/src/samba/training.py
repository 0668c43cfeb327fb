"""Training loop, Adam optimizer, loss, and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Sample
from .model import SambaModel, forward
from .tensor import Tape, Tensor, ShapeError, mul, smul, stack_scalars, sub, sum_all


class NonFiniteError(FloatingPointError):
    """Training produced NaN/inf; carries the first offending op's name."""


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 1500
    batch_size: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    """First/second moment buffers per parameter, plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[tuple[str, Tensor]]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(t.data) for name, t in params},
            v={name: np.zeros_like(t.data) for name, t in params},
        )


def adam_step(
    params: list[tuple[str, Tensor]], state: AdamState, cfg: TrainConfig
) -> None:
    """Bias-corrected Adam update in place; parameters without grad are skipped."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    for name, p in params:
        g = p.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error between two equal-length vectors."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = sub(pred, target)
    return smul(sum_all(mul(diff, diff)), 1.0 / pred.size)


@dataclass
class Metrics:
    """Test-set evaluation record."""

    rmse: float
    ic: float
    ric: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "ic": self.ic, "ric": self.ric}


def evaluate(pred: np.ndarray, target: np.ndarray) -> Metrics:
    """RMSE plus Pearson (IC) and Spearman (RIC) correlations.

    Both series are taken whole; ties in the rank correlation get average
    ranks.  A zero-variance series makes the correlations undefined, which
    is reported as 0 with the degenerate flag set.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(f"bad series shapes: {pred.shape} vs {target.shape}")
    if pred.size < 2:
        raise ValueError("need at least 2 points to evaluate")
    rmse = float(np.sqrt(np.mean((pred - target) ** 2)))
    if np.std(pred) == 0.0 or np.std(target) == 0.0:
        return Metrics(rmse=rmse, ic=0.0, ric=0.0, degenerate=True)
    ic = float(stats.pearsonr(pred, target).statistic)
    ric = float(stats.spearmanr(pred, target).statistic)
    return Metrics(rmse=rmse, ic=ic, ric=ric)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse: float


def predict_samples(model: SambaModel, samples: list[Sample]) -> np.ndarray:
    """Forward passes without gradient recording."""
    return np.array([forward(model, s.window).item() for s in samples])


def _snapshot(params: list[tuple[str, Tensor]]) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in params}


def _restore(params: list[tuple[str, Tensor]], snap: dict[str, np.ndarray]) -> None:
    for name, t in params:
        t.data[...] = snap[name]


def train(
    model: SambaModel,
    train_samples: list[Sample],
    val_samples: list[Sample],
    cfg: TrainConfig,
) -> list[EpochRecord]:
    """Mini-batch training with validation-selected parameters.

    Batches are drawn from a seeded shuffle each epoch, so runs with the
    same seed are bit-identical.  The model is left holding the parameters
    of the epoch with the lowest validation RMSE (ties keep the earlier
    epoch); with no validation samples, train loss selects instead.
    """
    if not train_samples:
        raise ValueError("training set is empty")
    params = model.named_parameters()
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    history: list[EpochRecord] = []
    best_key = np.inf
    best = _snapshot(params)

    n = len(train_samples)
    targets = np.array([s.target for s in train_samples])
    val_targets = np.array([s.target for s in val_samples])

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sq_err_total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            with Tape() as tape:
                preds = stack_scalars(
                    [forward(model, train_samples[i].window) for i in batch]
                )
                loss = mse_loss(preds, targets[batch])
                if not np.isfinite(loss.item()):
                    culprit = tape.first_nonfinite() or "loss"
                    raise NonFiniteError(
                        f"epoch {epoch}: non-finite values first appeared in "
                        f"'{culprit}'"
                    )
                tape.backward(loss)
            adam_step(params, state, cfg)
            model.zero_grad()
            sq_err_total += loss.item() * len(batch)
        train_loss = sq_err_total / n

        if len(val_samples) > 0:
            val_pred = predict_samples(model, val_samples)
            val_rmse = float(np.sqrt(np.mean((val_pred - val_targets) ** 2)))
            select_key = val_rmse
        else:
            val_rmse = float("nan")
            select_key = train_loss
        history.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_rmse=val_rmse))
        if select_key < best_key:
            best_key = select_key
            best = _snapshot(params)

    _restore(params, best)
    return history
