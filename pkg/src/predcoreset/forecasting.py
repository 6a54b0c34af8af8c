"""One-window-ahead forecasters.

A forecaster sees the stream one vector at a time through :meth:`observe`
(true values for collected epochs, its own predictions otherwise) and returns
the next ``n`` vectors from :meth:`predict_window`. :meth:`mse_estimate`
gives the per-attribute squared prediction error used to calibrate radii.
"""

from __future__ import annotations

import abc

import numpy as np

__all__ = [
    "Forecaster",
    "PersistenceForecaster",
    "ARForecaster",
    "GaussianOracleForecaster",
    "nrmse",
    "make_forecaster",
]


class Forecaster(abc.ABC):
    name = "forecaster"
    min_history = 1  # observations needed before the first prediction

    def __init__(self, n: int, d: int):
        if n < 1 or d < 1:
            raise ValueError("n and d must be positive")
        self.n = int(n)
        self.d = int(d)

    @abc.abstractmethod
    def observe(self, x) -> None: ...

    @abc.abstractmethod
    def predict_window(self) -> np.ndarray: ...

    @abc.abstractmethod
    def mse_estimate(self) -> np.ndarray:
        """Per-attribute prediction MSE, shape ``(d,)``."""

    def _vec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.d,) or not np.all(np.isfinite(x)):
            raise ValueError(f"expected a finite vector of dimension {self.d}")
        return x

    def describe(self) -> dict:
        return {"name": self.name, "n": self.n, "d": self.d}


class PersistenceForecaster(Forecaster):
    """Repeats the last observed vector; error tracked as an EWMA of squared one-step errors."""

    name = "persistence"

    def __init__(self, n: int, d: int, alpha: float = 0.05):
        super().__init__(n, d)
        self.alpha = alpha
        self.last: np.ndarray | None = None
        self.last_error: np.ndarray | None = None
        self._mse: np.ndarray | None = None

    def observe(self, x) -> None:
        x = self._vec(x)
        if self.last is not None:
            err = x - self.last
            self.last_error = err
            sq = err * err
            self._mse = sq if self._mse is None else (1 - self.alpha) * self._mse + self.alpha * sq
        self.last = x

    def predict_window(self) -> np.ndarray:
        if self.last is None:
            raise RuntimeError("persistence forecaster has not observed anything")
        return np.tile(self.last, (self.n, 1))

    def mse_estimate(self) -> np.ndarray:
        return np.zeros(self.d) if self._mse is None else self._mse.copy()

    def describe(self) -> dict:
        return {**super().describe(), "alpha": self.alpha}


class ARForecaster(Forecaster):
    """Per-feature AR(p) with intercept, fitted by ridge-damped normal equations.

    Multi-step predictions are rolled forward by feeding predictions back in.
    The model is refitted on the trailing ``max_history`` samples at every
    prediction.
    """

    name = "ar"

    def __init__(self, p: int, n: int, d: int, min_fit: int | None = None, ridge: float = 1e-8,
                 max_history: int = 2000):
        super().__init__(n, d)
        if p < 1:
            raise ValueError("order must be >= 1")
        self.p = int(p)
        self.min_fit = 10 * self.p if min_fit is None else int(min_fit)
        self.ridge = ridge
        self.max_history = max_history
        self.min_history = self.p + self.min_fit
        self.history: list[np.ndarray] = []
        self.coef: np.ndarray | None = None  # (d, p + 1): lags 1..p then intercept
        self._resid_mse: np.ndarray | None = None

    def observe(self, x) -> None:
        self.history.append(self._vec(x))
        if len(self.history) > self.max_history:
            del self.history[: len(self.history) - self.max_history]

    def fit(self) -> np.ndarray:
        H = np.asarray(self.history)
        if len(H) < self.p + self.min_fit:
            raise RuntimeError(f"AR({self.p}) needs at least {self.p + self.min_fit} samples, have {len(H)}")
        m = len(H) - self.p
        coef = np.empty((self.d, self.p + 1))
        mse = np.empty(self.d)
        for f in range(self.d):
            s = H[:, f]
            X = np.column_stack([s[self.p - k : self.p - k + m] for k in range(1, self.p + 1)] + [np.ones(m)])
            y = s[self.p :]
            A = X.T @ X + self.ridge * np.eye(self.p + 1)
            c = np.linalg.solve(A, X.T @ y)
            coef[f] = c
            r = y - X @ c
            mse[f] = float(r @ r) / m
        self.coef = coef
        self._resid_mse = mse
        return coef

    def predict_window(self) -> np.ndarray:
        coef = self.fit()
        buf = [h.copy() for h in self.history[-self.p :]]
        out = np.empty((self.n, self.d))
        for step in range(self.n):
            lags = np.stack([buf[-k] for k in range(1, self.p + 1)], axis=1)  # (d, p)
            nxt = (lags * coef[:, : self.p]).sum(axis=1) + coef[:, self.p]
            out[step] = nxt
            buf.append(nxt)
        return out

    def mse_estimate(self) -> np.ndarray:
        if self._resid_mse is None:
            self.fit()
        return self._resid_mse.copy()

    def describe(self) -> dict:
        return {**super().describe(), "p": self.p, "ridge": self.ridge, "min_fit": self.min_fit}


class GaussianOracleForecaster(Forecaster):
    """Predicts the true stream minus i.i.d. N(0, sigma2 I) noise.

    The stream position advances by one per :meth:`observe`; values passed to
    observe are ignored. Noise for a window is drawn once and cached, so
    repeated calls for the same window agree.
    """

    name = "oracle"
    min_history = 0  # reads the true stream directly

    def __init__(self, truth, n: int, sigma2: float, seed: int = 0):
        truth = np.atleast_2d(np.asarray(truth, dtype=float))
        super().__init__(n, truth.shape[1])
        if sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        self.truth = truth
        self.sigma2 = float(sigma2)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.cursor = 0
        self._cache: tuple[int, np.ndarray] | None = None

    def observe(self, x=None) -> None:
        self.cursor += 1

    def skip(self, count: int) -> None:
        self.cursor += count

    def errors(self) -> np.ndarray:
        """Truth minus prediction for the upcoming window."""
        if self._cache is None or self._cache[0] != self.cursor:
            xi = self.rng.normal(0.0, np.sqrt(self.sigma2), size=(self.n, self.d))
            self._cache = (self.cursor, xi)
        return self._cache[1]

    def predict_window(self) -> np.ndarray:
        end = self.cursor + self.n
        if end > len(self.truth):
            raise RuntimeError("oracle ran past the end of the stream")
        return self.truth[self.cursor : end] - self.errors()

    def mse_estimate(self) -> np.ndarray:
        return np.full(self.d, self.sigma2)

    def describe(self) -> dict:
        return {**super().describe(), "sigma2": self.sigma2, "seed": self.seed}


def nrmse(predicted, true) -> float:
    """Root mean squared error divided by the magnitude of the true series' mean."""
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(true, dtype=float)
    if p.shape != t.shape or t.size == 0:
        raise ValueError("series must be non-empty and of equal shape")
    mean = float(t.mean())
    if mean == 0.0:
        raise ValueError("true series has zero mean")
    return float(np.sqrt(np.mean((p - t) ** 2)) / abs(mean))


def make_forecaster(kind: str, n: int, d: int, *, truth=None, sigma2: float = 0.0, seed: int = 0,
                    order: int = 2) -> Forecaster:
    if kind == "persistence":
        return PersistenceForecaster(n, d)
    if kind == "ar":
        return ARForecaster(order, n, d)
    if kind == "oracle":
        if truth is None:
            raise ValueError("the oracle forecaster needs the true stream")
        return GaussianOracleForecaster(truth, n, sigma2, seed)
    raise ValueError(f"unknown forecaster {kind!r}")
