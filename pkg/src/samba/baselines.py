"""Reference forecasters the model is measured against."""

from __future__ import annotations

import numpy as np

from .data import FeatureFrame, Sample, compute_return_targets


def persistence_predictions(frame: FeatureFrame, samples: list[Sample]) -> np.ndarray:
    """Naive forecast: tomorrow's return equals today's.

    For a sample targeting day t (the return from day t-1 to t), the
    persistence forecast is the realized return from day t-2 to t-1.
    """
    returns = compute_return_targets(frame.close)
    return np.array([returns[s.target_date - 2] for s in samples])


def ols_window_predictions(
    train: list[Sample], test: list[Sample]
) -> np.ndarray:
    """Least-squares fit of targets on flattened windows plus an intercept.

    Uses the minimum-norm solution, so it is defined even when the window
    dimension exceeds the sample count.
    """
    def design(samples):
        x = np.stack([s.window.reshape(-1) for s in samples])
        return np.hstack([x, np.ones((len(samples), 1))])

    y = np.array([s.target for s in train])
    coeffs, *_ = np.linalg.lstsq(design(train), y, rcond=None)
    return design(test) @ coeffs
