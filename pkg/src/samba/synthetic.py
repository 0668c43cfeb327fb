"""Synthetic daily-feature tables with a learnable return signal.

No market data ships with this package; these generators produce tables in
the same CSV layout (Date, Close, feature columns) whose next-day returns
are a deterministic linear plus sinusoidal function of lagged features with
a small noise floor.  Used by the test suite and handy for demos:

    python -m samba.synthetic demo.csv --days 600 --features 10
"""

from __future__ import annotations

import argparse

import numpy as np
import pandas as pd


def synthetic_table(
    days: int = 600,
    n_features: int = 10,
    seed: int = 7,
    noise: float = 0.001,
    signal_scale: float = 0.01,
) -> pd.DataFrame:
    """Generate a feature table whose returns derive from lagged features.

    Features follow a slow AR(1), so the most recent window rows carry the
    signal.  The return of day t+1 combines a linear read of the day-t
    feature row with a sinusoidal read of its mean, plus Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    features = np.empty((days, n_features))
    features[0] = rng.normal(0.0, 1.0, n_features)
    for t in range(1, days):
        features[t] = 0.9 * features[t - 1] + 0.3 * rng.normal(0.0, 1.0, n_features)

    w_lin = rng.normal(0.0, 1.0, n_features) / np.sqrt(n_features)
    linear = features @ w_lin
    wave = np.sin(2.0 * np.pi * features.mean(axis=1))
    raw = 0.7 * linear + 0.6 * wave
    raw = raw / np.std(raw)

    returns = np.empty(days)
    returns[0] = 0.0
    returns[1:] = signal_scale * raw[:-1] + rng.normal(0.0, noise, days - 1)
    returns = np.clip(returns, -0.2, 0.2)

    close = 100.0 * np.cumprod(1.0 + returns)
    dates = pd.bdate_range("2015-01-02", periods=days).date
    table = pd.DataFrame({"Date": [d.isoformat() for d in dates], "Close": close})
    for j in range(n_features):
        table[f"feat_{j:02d}"] = features[:, j]
    return table


def write_csv(path, **kwargs) -> None:
    synthetic_table(**kwargs).to_csv(path, index=False)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="generate a synthetic feature CSV")
    parser.add_argument("path")
    parser.add_argument("--days", type=int, default=600)
    parser.add_argument("--features", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--noise", type=float, default=0.001)
    args = parser.parse_args(argv)
    write_csv(
        args.path,
        days=args.days,
        n_features=args.features,
        seed=args.seed,
        noise=args.noise,
    )
    print(f"wrote {args.days} days x {args.features} features to {args.path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
