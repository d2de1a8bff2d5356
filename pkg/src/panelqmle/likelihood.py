"""Gaussian quasi log-likelihood of the simultaneous-equations system.

Two forms are provided. The full likelihood over theta = (alpha, delta, F, D)

    l(theta) = -(N/2) log|FF'+D| - (1/2) sum_i (B y_i - delta)'(FF'+D)^{-1}(B y_i - delta)

(the Jacobian term vanishes because det B = 1), and the concentrated form
obtained by profiling out the free location parameter (whose maximizer is the
cross-section mean ybar):

    l_c(alpha, F, D) = -(N/2) log|FF'+D|
                       - (1/2) sum_i (y_i - ybar)' B'(FF'+D)^{-1} B (y_i - ybar).

Both evaluations run through the Woodbury factorization. The concentrated
form depends on the data only through ybar and the demeaned second-moment
matrix S = (1/N) sum_i (y_i - ybar)(y_i - ybar)', which PanelData caches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .structural import build_structural, factorize_covariance


@dataclass(frozen=True)
class ModelParams:
    """Parameter point (alpha, delta, F, Dvec) of the system likelihood.

    delta may be None when only the concentrated likelihood is used.
    """

    alpha: float
    F: np.ndarray
    Dvec: np.ndarray
    delta: np.ndarray | None = None

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Dvec", np.asarray(self.Dvec, dtype=float))
        if self.F.shape[0] != self.Dvec.shape[0]:
            raise ValueError("F and Dvec disagree on the panel length T")
        if np.any(self.Dvec <= 0):
            raise ValueError("all variances must be positive")
        if self.delta is not None:
            d = np.asarray(self.delta, dtype=float)
            if d.shape != (self.T,):
                raise ValueError("delta must have length T")
            object.__setattr__(self, "delta", d)

    @property
    def T(self) -> int:
        return self.F.shape[0]

    @property
    def r(self) -> int:
        return self.F.shape[1]


@dataclass(frozen=True)
class PanelData:
    """Observed N x T outcome panel."""

    Y: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2:
            raise ValueError("Y must be an N x T array")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y must be finite")
        if Y.shape[0] < 1 or Y.shape[1] < 2:
            raise ValueError("need N >= 1 individuals and T >= 2 periods")
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    @cached_property
    def ybar(self) -> np.ndarray:
        return self.Y.mean(axis=0)

    @cached_property
    def demeaned_cov(self) -> np.ndarray:
        """S = (1/N) sum_i (y_i - ybar)(y_i - ybar)', a T x T matrix."""
        Z = self.Y - self.ybar
        return (Z.T @ Z) / self.N


def loglik_full(params: ModelParams, data: PanelData) -> float:
    """Full quasi log-likelihood; requires params.delta."""
    if params.delta is None:
        raise ValueError("loglik_full needs delta; use loglik_concentrated otherwise")
    if params.T != data.T:
        raise ValueError("params and data disagree on T")
    fac = factorize_covariance(params.F, params.Dvec)
    B = build_structural(params.alpha, data.T).B
    resid = data.Y @ B.T - params.delta  # rows are (B y_i - delta)'
    quad = fac.quad_form_sum(resid.T)
    return -0.5 * data.N * fac.logdet - 0.5 * quad


def loglik_concentrated(params: ModelParams, data: PanelData) -> float:
    """Concentrated quasi log-likelihood (location profiled out at ybar)."""
    if params.T != data.T:
        raise ValueError("params and data disagree on T")
    fac = factorize_covariance(params.F, params.Dvec)
    B = build_structural(params.alpha, data.T).B
    C = B @ data.demeaned_cov @ B.T
    # tr((FF'+D)^{-1} C) via the Woodbury pieces
    Dinv = 1.0 / params.Dvec
    trace = float(np.sum(Dinv * np.diag(C)))
    W = (params.F.T * Dinv) @ C @ (Dinv[:, None] * params.F)
    trace -= float(np.trace(fac.small_core @ W))
    return -0.5 * data.N * (fac.logdet + trace)


# parameter vector layout used by both scores and the stage-2 optimizer:
# [alpha, F flattened row-major (f_1', ..., f_T'), log sigma_1^2, ..., log sigma_T^2]


def pack_params(params: ModelParams) -> np.ndarray:
    return np.concatenate(
        [[params.alpha], params.F.ravel(), np.log(params.Dvec)]
    )


def unpack_params(theta: np.ndarray, T: int, r: int) -> ModelParams:
    theta = np.asarray(theta, dtype=float)
    alpha = float(theta[0])
    F = theta[1 : 1 + T * r].reshape(T, r)
    Dvec = np.exp(theta[1 + T * r :])
    return ModelParams(alpha=alpha, F=F, Dvec=Dvec)


def score_analytic(params: ModelParams, data: PanelData) -> np.ndarray:
    """Closed-form gradient of loglik_concentrated in pack_params layout.

    Derived from matrix differentials of -(N/2)[log|Sigma| + tr(Sigma^{-1} C)]
    with Sigma = FF'+D and C = B S B'; the alpha component uses dB/dalpha = -J.
    """
    T, r = params.T, params.r
    fac = factorize_covariance(params.F, params.Dvec)
    st = build_structural(params.alpha, T)
    S = data.demeaned_cov
    BS = st.B @ S
    C = BS @ st.B.T
    P = fac.inv
    W = P @ C @ P
    N = data.N

    g_alpha = N * float(np.trace(P @ BS @ st.J.T))
    A = W - P
    g_F = N * (A @ params.F)
    g_logD = 0.5 * N * np.diag(A) * params.Dvec
    return np.concatenate([[g_alpha], g_F.ravel(), g_logD])


def score_numeric(
    params: ModelParams, data: PanelData, step: float = 1e-5
) -> np.ndarray:
    """Central finite-difference gradient of loglik_concentrated.

    Validates the analytic score and backs the optimizer when debugging.
    """
    if not 1e-7 <= step <= 1e-4:
        raise ValueError("step must lie in [1e-7, 1e-4]")
    theta0 = pack_params(params)
    T, r = params.T, params.r
    grad = np.empty_like(theta0)
    for k in range(theta0.size):
        hi = theta0.copy()
        lo = theta0.copy()
        hi[k] += step
        lo[k] -= step
        f_hi = loglik_concentrated(unpack_params(hi, T, r), data)
        f_lo = loglik_concentrated(unpack_params(lo, T, r), data)
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise FloatingPointError("non-finite likelihood at perturbed point")
        grad[k] = (f_hi - f_lo) / (2.0 * step)
    return grad


def normalize_F(F: np.ndarray, Dvec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotate F so that F'D^{-1}F is diagonal with nonincreasing entries.

    Returns (F @ R, R) with R orthogonal, so FF' is unchanged. Column signs
    are fixed by making the first nonzero entry of each column positive.
    """
    F = np.asarray(F, dtype=float)
    Dvec = np.asarray(Dvec, dtype=float)
    G = (F.T / Dvec) @ F
    evals, evecs = np.linalg.eigh(G)
    if evals.min() <= 0 or evals.min() / evals.max() < 1e-14:
        raise np.linalg.LinAlgError("F is rank deficient in the D^{-1} metric")
    order = np.argsort(evals)[::-1]
    R = evecs[:, order]
    Fn = F @ R
    for j in range(Fn.shape[1]):
        nz = np.nonzero(Fn[:, j])[0]
        if nz.size and Fn[nz[0], j] < 0:
            Fn[:, j] *= -1.0
            R[:, j] *= -1.0
    return Fn, R
