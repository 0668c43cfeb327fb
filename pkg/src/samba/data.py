"""Dataset ingestion: daily feature tables, return targets, windows, splits.

The on-disk format is a UTF-8 CSV with a header row: a ``Date`` column
(ISO-8601), a ``Close`` column (decimal price), and N further columns of
daily features.  This matches the public CNNpred table layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """The input table is missing required structure."""


class InsufficientDataError(ValueError):
    """Too few clean rows to build at least one sample."""


@dataclass
class FeatureFrame:
    """A cleaned, date-sorted table of daily features and closing prices."""

    dates: list[str]            # ISO-8601, strictly increasing
    features: np.ndarray        # (T, N) float64
    close: np.ndarray           # (T,) float64, > 0
    feature_names: list[str]
    dropped_rows: int = 0

    def __post_init__(self):
        t, n = self.features.shape
        if len(self.dates) != t or self.close.shape != (t,):
            raise SchemaError("frame arrays disagree on row count")
        if len(self.feature_names) != n:
            raise SchemaError("feature name count disagrees with columns")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise SchemaError("dates must be strictly increasing")
        if np.any(self.close <= 0):
            raise SchemaError("closing prices must be positive")

    @property
    def n_days(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class Sample:
    """One supervised instance: an (L, N) window and the next day's return."""

    window: np.ndarray
    target: float
    target_date: int  # row index of the predicted day in the source frame


@dataclass
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.05
    test_frac: float = 0.15

    def __post_init__(self):
        total = self.train_frac + self.val_frac + self.test_frac
        if any(f < 0 for f in (self.train_frac, self.val_frac, self.test_frac)):
            raise ValueError("split fractions must be nonnegative")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")


def load_feature_csv(path, min_rows: int | None = None) -> FeatureFrame:
    """Read, clean, and sort a daily feature table.

    Rows with any unparseable or missing value (or a nonpositive close) are
    dropped and counted; ``min_rows`` lets callers enforce the smallest
    usable table up front (window length + 2).
    """
    try:
        raw = pd.read_csv(path)
    except FileNotFoundError:
        raise
    except pd.errors.EmptyDataError as err:
        raise SchemaError(f"{path}: empty file") from err
    for col in ("Date", "Close"):
        if col not in raw.columns:
            raise SchemaError(f"{path}: missing required column '{col}'")
    feature_names = [c for c in raw.columns if c not in ("Date", "Close")]

    n_raw = len(raw)
    dates = pd.to_datetime(raw["Date"], format="%Y-%m-%d", errors="coerce")
    numeric = raw[["Close"] + feature_names].apply(pd.to_numeric, errors="coerce")
    keep = dates.notna() & numeric.notna().all(axis=1) & (numeric["Close"] > 0)
    clean = numeric[keep]
    clean_dates = dates[keep]

    order = np.argsort(clean_dates.values, kind="stable")
    clean = clean.iloc[order]
    clean_dates = clean_dates.iloc[order]
    # strictly increasing dates: keep the first row of any duplicated day
    unique = ~clean_dates.duplicated(keep="first").values
    clean = clean[unique]
    clean_dates = clean_dates[unique]

    dropped = n_raw - len(clean)
    frame = FeatureFrame(
        dates=[d.date().isoformat() for d in clean_dates],
        features=np.ascontiguousarray(clean[feature_names].values, dtype=np.float64),
        close=np.ascontiguousarray(clean["Close"].values, dtype=np.float64),
        feature_names=feature_names,
        dropped_rows=dropped,
    )
    if min_rows is not None and frame.n_days < min_rows:
        raise InsufficientDataError(
            f"{path}: {frame.n_days} clean rows, need at least {min_rows}"
        )
    return frame


def compute_return_targets(close: np.ndarray) -> np.ndarray:
    """One-day return ratios r[t] = (close[t+1] - close[t]) / close[t]."""
    close = np.asarray(close, dtype=np.float64)
    if np.any(close <= 0):
        raise ValueError("closing prices must be positive")
    return np.diff(close) / close[:-1]


def window_dataset(frame: FeatureFrame, window: int) -> list[Sample]:
    """Build one sample per day that has a full window strictly before it.

    Yields exactly T - L samples; the target of day t is the return ratio
    from day t-1 to day t.
    """
    t_days = frame.n_days
    if t_days < window + 1:
        raise InsufficientDataError(
            f"{t_days} days cannot support a window of {window} plus a target"
        )
    returns = compute_return_targets(frame.close)
    samples = []
    for t in range(window, t_days):
        samples.append(
            Sample(
                window=frame.features[t - window : t].copy(),
                target=float(returns[t - 1]),
                target_date=t,
            )
        )
    return samples


def split_chronological(
    samples: list[Sample], spec: SplitSpec
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Contiguous prefix/middle/suffix split; no shuffling.

    Sizes are floor(train_frac*n) and floor(val_frac*n) with the remainder
    going to test.
    """
    n = len(samples)
    if n == 0:
        raise InsufficientDataError("cannot split an empty sample list")
    n_train = int(np.floor(spec.train_frac * n))
    n_val = int(np.floor(spec.val_frac * n))
    return (
        samples[:n_train],
        samples[n_train : n_train + n_val],
        samples[n_train + n_val :],
    )


@dataclass
class MinMaxScaler:
    """Per-feature min-max normalization fitted on training windows only."""

    feature_min: np.ndarray | None = None
    feature_max: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.feature_min is not None

    @property
    def degenerate(self) -> np.ndarray:
        """Mask of features whose training range collapsed to a point."""
        if not self.fitted:
            raise RuntimeError("scaler not fitted")
        return self.feature_max == self.feature_min

    def fit(self, samples: list[Sample]) -> "MinMaxScaler":
        if not samples:
            raise InsufficientDataError("cannot fit a scaler on no samples")
        stacked = np.concatenate([s.window for s in samples], axis=0)
        self.feature_min = stacked.min(axis=0)
        self.feature_max = stacked.max(axis=0)
        return self

    def transform_array(self, x: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("scaler used before fitting")
        span = self.feature_max - self.feature_min
        safe_span = np.where(span == 0, 1.0, span)
        scaled = (x - self.feature_min) / safe_span
        return np.where(span == 0, 0.0, scaled)

    def transform(self, samples: list[Sample]) -> list[Sample]:
        """Scale windows with the fitted statistics; targets stay raw.

        Values outside the training range map outside [0, 1]; there is no
        clamping.
        """
        return [
            Sample(
                window=self.transform_array(s.window),
                target=s.target,
                target_date=s.target_date,
            )
            for s in samples
        ]


def scaler_fit(samples: list[Sample]) -> MinMaxScaler:
    return MinMaxScaler().fit(samples)


def scaler_apply(scaler: MinMaxScaler, samples: list[Sample]) -> list[Sample]:
    return scaler.transform(samples)
