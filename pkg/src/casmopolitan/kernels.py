"""Covariance functions for categorical, ordinal, continuous and mixed inputs.

The categorical kernel is the exponentiated overlap kernel

    k_h(h, h') = exp( (1/d_h) * sum_i l_i * delta(h_i, h'_i) )

and the ordinal variant replaces ``delta`` with ``1 - |h_i - h'_i| / max``.
Continuous inputs use an ARD Matern-5/2 kernel. Mixed inputs combine both as
``lam * k_h * k_x + (1 - lam) * (k_h + k_x)``. A single outputscale multiplies
the combined kernel.

Hyperparameter gradients are taken with respect to log-parameters, in the
order given by :meth:`KernelParams.to_log_vector`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .space import DimensionError, MixedPoint, SearchSpace, stack

KernelKind = Literal["categorical", "ordinal"]

CAT_LENGTHSCALE_BOUNDS = (1e-3, 5.0)
CONT_LENGTHSCALE_BOUNDS = (0.01, 0.5)
OUTPUTSCALE_BOUNDS = (0.5, 5.0)
SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelParams:
    cat_lengthscales: np.ndarray = field(default_factory=lambda: np.ones(1))
    cont_lengthscales: np.ndarray = field(default_factory=lambda: np.full(1, 0.2))
    outputscale: float = 1.0
    lam: float = 0.5
    ard: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cat_lengthscales", np.atleast_1d(np.asarray(self.cat_lengthscales, dtype=float)))
        object.__setattr__(self, "cont_lengthscales", np.atleast_1d(np.asarray(self.cont_lengthscales, dtype=float)))
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.outputscale <= 0 or np.any(self.cat_lengthscales <= 0) or np.any(self.cont_lengthscales <= 0):
            raise ValueError("kernel hyperparameters must be positive")

    @classmethod
    def default(cls, space: SearchSpace, ard: bool = True, lam: float = 0.5) -> "KernelParams":
        """Midpoints of the hyperparameter bounds."""
        n_cat = (space.d_h if ard else 1) if space.d_h else 0
        n_cont = (space.d_x if ard else 1) if space.d_x else 0
        return cls(
            cat_lengthscales=np.full(n_cat, sum(CAT_LENGTHSCALE_BOUNDS) / 2),
            cont_lengthscales=np.full(n_cont, sum(CONT_LENGTHSCALE_BOUNDS) / 2),
            outputscale=sum(OUTPUTSCALE_BOUNDS) / 2,
            lam=lam,
            ard=ard,
        )

    @property
    def n_cat(self) -> int:
        return self.cat_lengthscales.size

    @property
    def n_cont(self) -> int:
        return self.cont_lengthscales.size

    def to_log_vector(self) -> np.ndarray:
        return np.concatenate(
            [np.log(self.cat_lengthscales), np.log(self.cont_lengthscales), [np.log(self.outputscale)]]
        )

    def with_log_vector(self, theta: np.ndarray) -> "KernelParams":
        a, b = self.n_cat, self.n_cat + self.n_cont
        return replace(
            self,
            cat_lengthscales=np.exp(theta[:a]),
            cont_lengthscales=np.exp(theta[a:b]),
            outputscale=float(np.exp(theta[b])),
        )

    def log_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate(
            [
                np.full(self.n_cat, np.log(CAT_LENGTHSCALE_BOUNDS[0])),
                np.full(self.n_cont, np.log(CONT_LENGTHSCALE_BOUNDS[0])),
                [np.log(OUTPUTSCALE_BOUNDS[0])],
            ]
        )
        hi = np.concatenate(
            [
                np.full(self.n_cat, np.log(CAT_LENGTHSCALE_BOUNDS[1])),
                np.full(self.n_cont, np.log(CONT_LENGTHSCALE_BOUNDS[1])),
                [np.log(OUTPUTSCALE_BOUNDS[1])],
            ]
        )
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "cat_lengthscales": self.cat_lengthscales.tolist(),
            "cont_lengthscales": self.cont_lengthscales.tolist(),
            "outputscale": self.outputscale,
            "lam": self.lam,
            "ard": self.ard,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        return cls(
            cat_lengthscales=np.asarray(d["cat_lengthscales"], dtype=float),
            cont_lengthscales=np.asarray(d["cont_lengthscales"], dtype=float),
            outputscale=float(d["outputscale"]),
            lam=float(d["lam"]),
            ard=bool(d["ard"]),
        )


# ---------------------------------------------------------------------------
# per-dimension similarities


def _ordinal_tables(space: SearchSpace) -> list:
    """Per dimension, an ``(n_j, n_j)`` similarity table or ``None`` for delta."""
    tables = []
    for levels in space.ordinal:
        if levels is None:
            tables.append(None)
            continue
        v = np.asarray(levels)
        dist = np.abs(v[:, None] - v[None, :])
        tables.append(1.0 - dist / (v.max() - v.min()))
    return tables


def categorical_similarity(
    H1: np.ndarray, H2: np.ndarray, space: SearchSpace, kind: KernelKind = "categorical"
) -> np.ndarray:
    """Per-dimension similarity tensor of shape ``(n1, n2, d_h)``.

    ``kind="categorical"`` gives the Kronecker delta on every dimension;
    ``kind="ordinal"`` uses the ordinal metric on dimensions that carry one.
    """
    H1 = np.asarray(H1)
    H2 = np.asarray(H2)
    if H1.shape[-1] != H2.shape[-1]:
        raise DimensionError(f"categorical width mismatch: {H1.shape[-1]} vs {H2.shape[-1]}")
    sim = (H1[:, None, :] == H2[None, :, :]).astype(float)
    if kind == "ordinal":
        if not space.has_ordinal:
            raise ValueError("ordinal kernel requested but no dimension carries an ordinal metric")
        for j, table in enumerate(_ordinal_tables(space)):
            if table is not None:
                sim[:, :, j] = table[H1[:, j][:, None], H2[:, j][None, :]]
    elif kind != "categorical":
        raise ValueError(f"unknown kernel kind {kind!r}")
    return sim


def _cat_exponent(sim: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    d_h = sim.shape[-1]
    if lengthscales.size == 1:
        return lengthscales[0] * sim.sum(axis=-1) / d_h
    if lengthscales.size != d_h:
        raise DimensionError(f"expected {d_h} categorical lengthscales, got {lengthscales.size}")
    return sim @ lengthscales / d_h


def _matern52_from_r(r: np.ndarray) -> np.ndarray:
    return (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)


def _scaled_sqdist(X1: np.ndarray, X2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    if X1.shape[-1] != X2.shape[-1]:
        raise DimensionError(f"continuous width mismatch: {X1.shape[-1]} vs {X2.shape[-1]}")
    diff = (X1[:, None, :] - X2[None, :, :]) / lengthscales
    return np.einsum("abj,abj->ab", diff, diff)


# ---------------------------------------------------------------------------
# single-pair kernels


def k_categorical(h: Sequence[int], h2: Sequence[int], params: KernelParams) -> float:
    h = np.asarray(h)
    h2 = np.asarray(h2)
    if h.shape != h2.shape:
        raise DimensionError(f"length mismatch: {h.shape} vs {h2.shape}")
    sim = (h == h2).astype(float)[None, None, :]
    return float(np.exp(_cat_exponent(sim, params.cat_lengthscales))[0, 0])


def k_ordinal(h: Sequence[int], h2: Sequence[int], params: KernelParams, space: SearchSpace) -> float:
    H1 = np.asarray(h).reshape(1, -1)
    H2 = np.asarray(h2).reshape(1, -1)
    if H1.shape != H2.shape:
        raise DimensionError(f"length mismatch: {H1.shape} vs {H2.shape}")
    sim = categorical_similarity(H1, H2, space, "ordinal")
    return float(np.exp(_cat_exponent(sim, params.cat_lengthscales))[0, 0])


def k_matern52(x: Sequence[float], x2: Sequence[float], params: KernelParams) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise DimensionError(f"length mismatch: {x.shape} vs {x2.shape}")
    r = np.sqrt(np.sum(((x - x2) / params.cont_lengthscales) ** 2))
    return float(_matern52_from_r(r))


def combine(k_h, k_x, params: KernelParams):
    """Outputscale times the lambda-mix of the two sub-kernels (either may be None)."""
    if k_x is None:
        return params.outputscale * k_h
    if k_h is None:
        return params.outputscale * k_x
    lam = params.lam
    return params.outputscale * (lam * k_h * k_x + (1.0 - lam) * (k_h + k_x))


def k_mixed(
    z: MixedPoint, z2: MixedPoint, params: KernelParams, space: SearchSpace, kind: KernelKind = "categorical"
) -> float:
    kh = kx = None
    if space.d_h:
        kh = k_ordinal(z.cats, z2.cats, params, space) if kind == "ordinal" else k_categorical(z.cats, z2.cats, params)
    if space.d_x:
        kx = k_matern52(z.conts, z2.conts, params)
    return float(combine(kh, kx, params))


# ---------------------------------------------------------------------------
# matrices


def covariance(
    H1: np.ndarray,
    X1: np.ndarray,
    H2: np.ndarray,
    X2: np.ndarray,
    params: KernelParams,
    space: SearchSpace,
    kind: KernelKind = "categorical",
) -> np.ndarray:
    """Cross-covariance matrix between two batches given as arrays."""
    kh = kx = None
    if space.d_h:
        kh = np.exp(_cat_exponent(categorical_similarity(H1, H2, space, kind), params.cat_lengthscales))
    if space.d_x:
        kx = _matern52_from_r(np.sqrt(_scaled_sqdist(X1, X2, params.cont_lengthscales)))
    return combine(kh, kx, params)


def prior_variance(params: KernelParams, space: SearchSpace, kind: KernelKind = "categorical") -> float:
    """``k(z, z)``, identical for every ``z``."""
    kh = float(np.exp(params.cat_lengthscales.mean())) if space.d_h else None
    kx = 1.0 if space.d_x else None
    return float(combine(kh, kx, params))


def gram(
    points: Sequence[MixedPoint], params: KernelParams, space: SearchSpace, kind: KernelKind = "categorical"
) -> np.ndarray:
    if len(points) == 0:
        raise ValueError("gram needs at least one point")
    H, X = stack(points, space)
    K = covariance(H, X, H, X, params, space, kind)
    return 0.5 * (K + K.T)


class PairwiseFeatures:
    """Training-set pair statistics reused across hyperparameter evaluations.

    Stores per-dimension similarities (categorical part) and squared
    differences (continuous part) for the strict upper triangle of pairs
    only; the diagonal is known in closed form. Gradient contractions then
    reduce to matrix-vector products over ``N(N-1)/2`` rows.
    """

    def __init__(self, H: np.ndarray, X: np.ndarray, space: SearchSpace, kind: KernelKind = "categorical"):
        self.space = space
        self.kind = kind
        self.n = H.shape[0] if space.d_h else X.shape[0]
        n = self.n
        ia, ib = np.triu_indices(n, 1)
        self.ia, self.ib = ia, ib
        self.upper = ia * n + ib
        self.lower = ib * n + ia
        self._diag = np.arange(n) * (n + 1)
        self.sim = None
        self.sqdiff = None
        if space.d_h:
            sim = (H[ia] == H[ib]).astype(float)
            if kind == "ordinal":
                if not space.has_ordinal:
                    raise ValueError("ordinal kernel requested but no dimension carries an ordinal metric")
                for j, table in enumerate(_ordinal_tables(space)):
                    if table is not None:
                        sim[:, j] = table[H[ia, j], H[ib, j]]
            elif kind != "categorical":
                raise ValueError(f"unknown kernel kind {kind!r}")
            self.sim = sim
        if space.d_x:
            diff = X[ia] - X[ib]
            self.sqdiff = diff * diff

    def _square(self, pair_values: np.ndarray, diag_value: float) -> np.ndarray:
        n = self.n
        M = np.empty(n * n)
        M[self.upper] = pair_values
        M[self.lower] = pair_values
        M[self._diag] = diag_value
        return M.reshape(n, n)

    def _parts(self, params: KernelParams):
        """Sub-kernel values on the pairs and on the diagonal."""
        kh = kx = r = None
        kh_d = kx_d = None
        if self.sim is not None:
            ls = params.cat_lengthscales
            d_h = self.sim.shape[1]
            expo = (self.sim.sum(1) * ls[0] if ls.size == 1 else self.sim @ ls) / d_h
            kh, kh_d = np.exp(expo), float(np.exp(ls.mean()))
        if self.sqdiff is not None:
            ls = params.cont_lengthscales
            inv = 1.0 / ls**2
            r2 = self.sqdiff.sum(1) * inv[0] if ls.size == 1 else self.sqdiff @ inv
            r = np.sqrt(r2)
            kx, kx_d = _matern52_from_r(r), 1.0
        return kh, kx, r, kh_d, kx_d

    def gram(self, params: KernelParams) -> np.ndarray:
        kh, kx, _, kh_d, kx_d = self._parts(params)
        return self._square(combine(kh, kx, params), combine(kh_d, kx_d, params))

    def gram_and_contract(self, params: KernelParams):
        """Return ``K`` and a function mapping symmetric ``W`` to ``sum(W * dK/dlog(theta))``.

        The contraction is what a marginal-likelihood gradient needs; it
        avoids materializing one ``N x N`` matrix per hyperparameter. The
        returned function also exposes ``contract.pairs(w_pairs, w_diag)``,
        which takes ``W`` already reduced to the stored pairs and the diagonal.
        """
        kh, kx, r, kh_d, kx_d = self._parts(params)
        K_p, K_d = combine(kh, kx, params), combine(kh_d, kx_d, params)
        K = self._square(K_p, K_d)
        s, lam = params.outputscale, params.lam
        base = None
        if kx is not None:
            # d k_x / d log(ls_j) = 5/3 (1 + sqrt5 r) exp(-sqrt5 r) (dx_j / ls_j)^2
            base = 5.0 / 3.0 * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)

        def pairs(w: np.ndarray, w_diag: np.ndarray) -> np.ndarray:
            out = []
            tr = float(np.sum(w_diag))
            if kh is not None:
                coeff = s * (lam * kx + (1.0 - lam)) if kx is not None else s
                coeff_d = s * (lam * kx_d + (1.0 - lam)) if kx is not None else s
                ls = params.cat_lengthscales
                d_h = self.sim.shape[1]
                # off-diagonal pairs count twice; diagonal similarity is 1 on every dim
                g = 2.0 * ((w * coeff * kh) @ self.sim) + tr * coeff_d * kh_d
                if ls.size == 1:
                    out.append(np.array([ls[0] * g.sum() / d_h]))
                else:
                    out.append(ls * g / d_h)
            if kx is not None:
                coeff = s * (lam * kh + (1.0 - lam)) if kh is not None else s
                ls = params.cont_lengthscales
                g = 2.0 * ((w * coeff * base) @ self.sqdiff)
                if ls.size == 1:
                    out.append(np.array([g.sum() / ls[0] ** 2]))
                else:
                    out.append(g / ls**2)
            out.append(np.array([2.0 * (w @ K_p) + tr * K_d]))
            return np.concatenate(out)

        def contract(W: np.ndarray) -> np.ndarray:
            return pairs(W.ravel()[self.upper], np.diag(W))

        contract.pairs = pairs
        return K, contract


def gram_gradients(
    points: Sequence[MixedPoint], params: KernelParams, space: SearchSpace, kind: KernelKind = "categorical"
) -> np.ndarray:
    """``dK/dlog(theta)`` for every kernel hyperparameter, shape ``(P, N, N)``.

    Built by contracting against unit matrices, so it shares code with the
    fast likelihood-gradient path.
    """
    H, X = stack(points, space)
    feats = PairwiseFeatures(H, X, space, kind)
    _, contract = feats.gram_and_contract(params)
    n = len(points)
    P = params.to_log_vector().size
    grads = np.zeros((P, n, n))
    E = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            w = 1.0 if a == b else 0.5
            E[a, b] = E[b, a] = w
            grads[:, a, b] = grads[:, b, a] = contract(E)
            E[a, b] = E[b, a] = 0.0
    return grads
