"""Single-response partial least squares (NIPALS) and evaluation metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, VersionError

log = logging.getLogger(__name__)

PLS_VERSION = 1
DEFAULT_COMPONENTS = 4


def _standardize_params(a: np.ndarray, axis=0):
    mean = a.mean(axis=axis)
    scale = a.std(axis=axis, ddof=1)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


@dataclass(frozen=True)
class PLSModel:
    """Fitted PLS1 model on standardised data.

    ``weights`` and ``loadings`` are ``d x c``; ``coefficients`` maps a
    standardised feature row to a standardised response.
    """

    n_components: int
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    weights: np.ndarray
    loadings: np.ndarray
    y_loadings: np.ndarray
    coefficients: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.x_mean)

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features:
            raise ArgumentError(f"expected {self.n_features} features, got {X.shape[-1]}")
        return X

    def predict(self, X) -> np.ndarray | float:
        """Predict one row (returns float) or a batch ``n x d`` (returns array)."""
        X = self._check(X)
        yhat = self.y_mean + self.y_scale * (((X - self.x_mean) / self.x_scale) @ self.coefficients)
        return float(yhat) if X.ndim == 1 else yhat

    def scores(self, X) -> np.ndarray:
        """Latent scores by replaying the deflation sequence, ``n x c``."""
        Xs = (np.atleast_2d(self._check(X)) - self.x_mean) / self.x_scale
        T = np.empty((len(Xs), self.n_components))
        for a in range(self.n_components):
            T[:, a] = Xs @ self.weights[:, a]
            Xs = Xs - np.outer(T[:, a], self.loadings[:, a])
        return T

    def predict_from_scores(self, X) -> np.ndarray:
        return self.y_mean + self.y_scale * (self.scores(X) @ self.y_loadings)

    def to_dict(self) -> dict:
        return {
            "format": "spectralweight.pls",
            "version": PLS_VERSION,
            "c": self.n_components,
            "d": self.n_features,
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "weights": self.weights.ravel().tolist(),
            "loadings": self.loadings.ravel().tolist(),
            "y_loadings": self.y_loadings.tolist(),
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PLSModel":
        if d.get("version") != PLS_VERSION:
            raise VersionError(f"unsupported PLS model version {d.get('version')!r}")
        try:
            c, n = int(d["c"]), int(d["d"])
            arr = lambda key, shape: np.array(d[key], dtype=np.float64).reshape(shape)  # noqa: E731
            return cls(
                n_components=c,
                x_mean=arr("x_mean", (n,)),
                x_scale=arr("x_scale", (n,)),
                y_mean=float(d["y_mean"]),
                y_scale=float(d["y_scale"]),
                weights=arr("weights", (n, c)),
                loadings=arr("loadings", (n, c)),
                y_loadings=arr("y_loadings", (c,)),
                coefficients=arr("coefficients", (n,)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise VersionError(f"malformed PLS model: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PLSModel":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise VersionError(f"PLS model is not valid JSON: {exc}") from None


def fit_pls(X, y, n_components: int = DEFAULT_COMPONENTS) -> PLSModel:
    """NIPALS PLS1 on column-standardised ``X`` and standardised ``y``.

    Zero-variance columns keep unit scale. ``n_components`` must lie in
    ``[1, min(d, n - 1)]``; it is never reduced silently.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise ArgumentError("X must be a 2-D array")
    n, d = X.shape
    if len(y) != n:
        raise ArgumentError(f"X has {n} rows but y has {len(y)} entries")
    if n < 3:
        raise ArgumentError(f"need at least 3 samples, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ArgumentError("X and y must be finite")
    limit = min(d, n - 1)
    if not 1 <= n_components <= limit:
        raise ArgumentError(f"n_components must be in [1, {limit}], got {n_components}")
    if np.ptp(y) == 0:
        raise ArgumentError("target is constant")

    x_mean, x_scale = _standardize_params(X)
    y_mean, y_scale = float(y.mean()), float(y.std(ddof=1))
    Xa = (X - x_mean) / x_scale
    ya = (y - y_mean) / y_scale

    W = np.zeros((d, n_components))
    P = np.zeros((d, n_components))
    q = np.zeros(n_components)
    for a in range(n_components):
        w = Xa.T @ ya
        norm = np.linalg.norm(w)
        if norm <= 1e-14 * np.sqrt(n):
            log.warning("PLS: response fully explained after %d of %d components", a, n_components)
            break
        w /= norm
        t = Xa @ w
        tt = t @ t
        p = Xa.T @ t / tt
        W[:, a] = w
        P[:, a] = p
        q[a] = (ya @ t) / tt
        Xa = Xa - np.outer(t, p)
        ya = ya - q[a] * t
    used = np.flatnonzero(np.any(W != 0, axis=0))
    B = np.zeros(d)
    if len(used):
        Wu, Pu = W[:, used], P[:, used]
        B = Wu @ np.linalg.solve(Pu.T @ Wu, q[used])
    return PLSModel(n_components, x_mean, x_scale, y_mean, y_scale, W, P, q, B)


def predict(model: PLSModel, x) -> float | np.ndarray:
    return model.predict(x)


@dataclass(frozen=True)
class EvalReport:
    r2: float
    rmse: float
    cve_percent: float
    y: np.ndarray = field(repr=False)
    yhat: np.ndarray = field(repr=False)
    labels: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return len(self.y)

    def describe(self) -> dict:
        return {
            "mean": float(self.y.mean()),
            "sd": float(self.y.std(ddof=1)),
            "min": float(self.y.min()),
            "max": float(self.y.max()),
        }

    def to_dict(self) -> dict:
        out = {"r2": self.r2, "rmse": self.rmse, "cve_percent": self.cve_percent, "n": self.n}
        out.update(self.describe())
        out["predictions"] = [
            {"label": lab, "y": float(a), "yhat": float(b)}
            for lab, a, b in zip(self.labels or [str(i) for i in range(self.n)], self.y, self.yhat)
        ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


TABLE_HEADER = ("Dependent variable", "Mean (kg)", "S. D.", "Min", "Max", "R2", "RMSE", "CVe (%)")


def format_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Aligned text table with one line per named report."""
    cells = [TABLE_HEADER]
    for name, rep in rows:
        s = rep.describe()
        cells.append((
            name, f"{s['mean']:.3f}", f"{s['sd']:.3f}", f"{s['min']:.3f}", f"{s['max']:.3f}",
            f"{rep.r2:.2f}", f"{rep.rmse:.3f}", f"{rep.cve_percent:.2f}",
        ))
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_HEADER))]
    lines = []
    for k, r in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cve(rmse: float, mean: float) -> float:
    """Coefficient of variation of the error, in percent."""
    return 100.0 * rmse / mean


def metrics(y, yhat, labels=()) -> EvalReport:
    """R^2, RMSE and CVe of predictions ``yhat`` against ``y``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if len(y) != len(yhat):
        raise ArgumentError(f"length mismatch: {len(y)} targets, {len(yhat)} predictions")
    if len(y) < 2:
        raise ArgumentError("need at least 2 samples")
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0:
        raise ArgumentError("R^2 is undefined for a constant target")
    sse = float(((y - yhat) ** 2).sum())
    rmse = float(np.sqrt(sse / len(y)))
    return EvalReport(1.0 - sse / sst, rmse, cve(rmse, float(y.mean())), y, yhat, tuple(labels))


def loocv(X, y, n_components: int = DEFAULT_COMPONENTS, labels=()) -> EvalReport:
    """Leave-one-out predictions of a PLS model refit on every fold."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = len(y)
    if n < 4:
        raise ArgumentError(f"leave-one-out needs at least 4 samples, got {n}")
    yhat = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        try:
            model = fit_pls(X[mask], y[mask], n_components)
        except Exception as exc:
            raise type(exc)(f"fold {i}: {exc}") from exc
        mask[i] = True
        yhat[i] = model.predict(X[i])
    return metrics(y, yhat, labels)
