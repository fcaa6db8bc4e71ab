"""Exact GP regression with a zero prior mean on standardized targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri

from .kernels import KernelKind, KernelParams, PairwiseFeatures, covariance, prior_variance
from .space import MixedPoint, SearchSpace, stack

log = logging.getLogger(__name__)

NOISE_BOUNDS = (1e-5, 0.1)
LOG_2PI = np.log(2.0 * np.pi)


class GPFitError(RuntimeError):
    """Cholesky factorization failed even with the largest jitter."""


class NotFittedError(RuntimeError):
    pass


def standardize(y_raw: Sequence[float]) -> tuple[np.ndarray, float, float]:
    """Zero-mean, unit-variance targets. A constant vector keeps ``std = 1``."""
    y = np.asarray(y_raw, dtype=float)
    if y.size == 0:
        raise ValueError("cannot standardize an empty vector")
    mean = float(y.mean())
    std = float(y.std())
    if not std > 0:
        std = 1.0
    return (y - mean) / std, mean, std


def robust_cholesky(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, adding diagonal jitter on failure.

    Jitter starts at ``1e-8 * mean(diag)`` and grows tenfold up to
    ``1e-2 * mean(diag)``.
    """
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(A)))
    eye = np.eye(A.shape[0])
    jitter = 1e-8 * scale
    while jitter <= 1e-2 * scale * (1 + 1e-12):
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GPFitError(
        f"Cholesky failed with jitter up to {1e-2 * scale:.3g}; "
        f"n={A.shape[0]}, diag range [{np.min(np.diag(A)):.3g}, {np.max(np.diag(A)):.3g}], "
        f"finite={bool(np.all(np.isfinite(A)))}"
    )


@dataclass(frozen=True)
class FitSettings:
    n_restarts: int = 5
    max_steps: int = 100
    lr: float = 0.03
    tol: float = 1e-6


def _rows(A, d: int, n: Optional[int] = None, dtype=float) -> np.ndarray:
    """View ``A`` as an ``(n, d)`` array; ``d = 0`` needs ``n`` or a 2-D input."""
    A = np.asarray(A, dtype=dtype)
    if A.ndim == 2:
        return A
    if n is None:
        n = A.size // d if d else 1
    return A.reshape(n, d)


class GaussianProcess:
    """GP surrogate over a :class:`SearchSpace`.

    Instances are treated as immutable: :meth:`fit` and :meth:`condition_on`
    return new models. Targets are kept on the standardized scale; ``y_mean``
    and ``y_std`` convert back to raw values.
    """

    def __init__(
        self,
        space: SearchSpace,
        H: np.ndarray,
        X: np.ndarray,
        y: np.ndarray,
        params: KernelParams,
        noise: float,
        kind: KernelKind = "categorical",
        y_mean: float = 0.0,
        y_std: float = 1.0,
    ):
        self.space = space
        self.kind = kind
        self.y = np.asarray(y, dtype=float)
        self.H = _rows(H, space.d_h, self.y.size, np.int64)
        self.X = _rows(X, space.d_x, self.y.size)
        self.params = params
        self.noise = float(noise)
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)
        self.n = self.y.size
        self.jitter = 0.0
        self.chol = None
        self.alpha = None
        if self.n:
            K = PairwiseFeatures(self.H, self.X, space, kind).gram(params)
            self.chol, self.jitter = robust_cholesky(K + self.noise * np.eye(self.n))
            self.alpha = cho_solve((self.chol, True), self.y)

    @classmethod
    def from_data(
        cls,
        space: SearchSpace,
        points: Sequence[MixedPoint],
        y_raw: Sequence[float],
        kind: KernelKind = "categorical",
        params: Optional[KernelParams] = None,
        noise: Optional[float] = None,
        y_stats: Optional[tuple[float, float]] = None,
        ard: bool = True,
        lam: float = 0.5,
    ) -> "GaussianProcess":
        """Build an (unfitted) model; standardization from ``y_stats`` or the data."""
        y_raw = np.asarray(y_raw, dtype=float)
        if y_stats is None:
            _, mean, std = standardize(y_raw) if y_raw.size else (None, 0.0, 1.0)
        else:
            mean, std = y_stats
        H, X = stack(points, space)
        params = params if params is not None else KernelParams.default(space, ard=ard, lam=lam)
        noise = noise if noise is not None else sum(NOISE_BOUNDS) / 2
        return cls(space, H, X, (y_raw - mean) / std, params, noise, kind, mean, std)

    # ------------------------------------------------------------------ likelihood

    def theta(self) -> np.ndarray:
        return np.append(self.params.to_log_vector(), np.log(self.noise))

    def theta_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.params.log_bounds()
        return np.append(lo, np.log(NOISE_BOUNDS[0])), np.append(hi, np.log(NOISE_BOUNDS[1]))

    def _unpack(self, theta: np.ndarray) -> tuple[KernelParams, float]:
        return self.params.with_log_vector(theta[:-1]), float(np.exp(theta[-1]))

    def log_marginal_likelihood(self, theta: Optional[np.ndarray] = None, features=None) -> float:
        return self.lml_and_grad(theta, features, need_grad=False)[0]

    def lml_and_grad(self, theta: Optional[np.ndarray] = None, features=None, need_grad: bool = True):
        """Log marginal likelihood and its gradient in log-hyperparameters."""
        theta = self.theta() if theta is None else np.asarray(theta, dtype=float)
        feats = features or PairwiseFeatures(self.H, self.X, self.space, self.kind)
        params, noise = self._unpack(theta)
        K, contract = feats.gram_and_contract(params)
        n = self.n
        L, _ = robust_cholesky(K + noise * np.eye(n))
        alpha = cho_solve((L, True), self.y)
        lml = -0.5 * self.y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
        if not need_grad:
            return float(lml), None
        # only the lower triangle of the inverse is needed: W is symmetric
        inv, info = dpotri(L, lower=1)
        if info != 0:
            inv = cho_solve((L, True), np.eye(n))
        w_pairs = alpha[feats.ia] * alpha[feats.ib] - inv.ravel()[feats.lower]
        w_diag = alpha * alpha - np.diag(inv)
        grad = np.append(0.5 * contract.pairs(w_pairs, w_diag), 0.5 * np.sum(w_diag) * noise)
        return float(lml), grad

    def fit(self, rng: np.random.Generator, settings: FitSettings = FitSettings()) -> "GaussianProcess":
        """Multi-start Adam ascent on the log marginal likelihood.

        The first start is the current hyperparameters; the rest are drawn
        log-uniformly within the bounds. Each step is clamped to the box.
        """
        if self.n < 2:
            raise ValueError("fitting needs at least two observations")
        feats = PairwiseFeatures(self.H, self.X, self.space, self.kind)
        lo, hi = self.theta_bounds()
        starts = [np.clip(self.theta(), lo, hi)]
        for _ in range(settings.n_restarts - 1):
            starts.append(lo + rng.random(lo.size) * (hi - lo))

        best_theta, best_lml = None, -np.inf
        b1, b2, eps = 0.9, 0.999, 1e-8
        for theta in starts:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
            try:
                lml, grad = self.lml_and_grad(theta, feats)
            except GPFitError:
                continue
            run_best, run_lml = theta, lml
            for t in range(1, settings.max_steps + 1):
                m = b1 * m + (1 - b1) * grad
                v = b2 * v + (1 - b2) * grad * grad
                step = settings.lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
                theta = np.clip(theta + step, lo, hi)
                try:
                    new_lml, grad = self.lml_and_grad(theta, feats)
                except GPFitError:
                    break
                if new_lml > run_lml:
                    run_best, run_lml = theta, new_lml
                converged = abs(new_lml - lml) < settings.tol
                lml = new_lml
                if converged:
                    break
            if run_lml > best_lml:
                best_theta, best_lml = run_best, run_lml
        if best_theta is None:
            raise GPFitError("every hyperparameter start failed to factorize")
        params, noise = self._unpack(best_theta)
        return self.with_hyperparameters(params, noise)

    # ------------------------------------------------------------------ updates

    def with_hyperparameters(self, params: KernelParams, noise: float) -> "GaussianProcess":
        return GaussianProcess(
            self.space, self.H, self.X, self.y, params, noise, self.kind, self.y_mean, self.y_std
        )

    def condition_on(self, H_new: np.ndarray, X_new: np.ndarray, y_new: np.ndarray) -> "GaussianProcess":
        """Append observations given on the standardized scale; no refit."""
        y_new = np.atleast_1d(np.asarray(y_new, dtype=float))
        H = np.vstack([self.H, _rows(H_new, self.space.d_h, y_new.size, np.int64)])
        X = np.vstack([self.X, _rows(X_new, self.space.d_x, y_new.size)])
        y = np.concatenate([self.y, y_new])
        return GaussianProcess(self.space, H, X, y, self.params, self.noise, self.kind, self.y_mean, self.y_std)

    # ------------------------------------------------------------------ prediction

    def predict(self, H: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Standardized-scale posterior mean and variance for array batches."""
        H = _rows(H, self.space.d_h, dtype=np.int64)
        X = _rows(X, self.space.d_x)
        m = max(H.shape[0], X.shape[0])
        kss = prior_variance(self.params, self.space, self.kind)
        if self.n == 0:
            return np.zeros(m), np.full(m, kss)
        Ks = covariance(H, X, self.H, self.X, self.params, self.space, self.kind)
        mu = Ks @ self.alpha
        v = solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        var = kss - np.sum(v * v, axis=0)
        return mu, np.maximum(var, 0.0)

    def posterior(self, z: MixedPoint) -> tuple[float, float]:
        H, X = stack([z], self.space)
        mu, var = self.predict(H, X)
        return float(mu[0]), float(var[0])

    def posterior_raw(self, z: MixedPoint) -> tuple[float, float]:
        mu, var = self.posterior(z)
        return self.y_mean + self.y_std * mu, self.y_std**2 * var

    @property
    def best_y(self) -> float:
        """Best standardized observation, or ``-inf`` for an empty model."""
        return float(self.y.max()) if self.n else -np.inf
