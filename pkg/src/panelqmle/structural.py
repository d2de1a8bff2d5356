"""Structural matrices of the simultaneous-equations form and the
low-rank-plus-diagonal covariance algebra.

The dynamic panel y_it = alpha*y_{i,t-1} + delta_t + lambda_i'f_t + eps_it
stacks, per individual, into B(alpha) y_i = delta + F lambda_i + eps_i with

    B = unit lower bidiagonal with -alpha on the first subdiagonal,
    J = shift matrix (ones on the first subdiagonal),
    L = J B^{-1}, strictly lower triangular with L[t, s] = alpha^(t-s-1).

The implied covariance of B y_i is FF' + D with D = diag(sigma_t^2); its
inverse and log-determinant are computed through the Woodbury identity

    (FF'+D)^{-1} = D^{-1} - D^{-1} F (I_r + F'D^{-1}F)^{-1} F'D^{-1}
    log|FF'+D|   = log|D| + log|I_r + F'D^{-1}F|

so the main path never forms or inverts a dense T x T matrix beyond O(T^2 r).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericDegeneracyError

VARIANCE_FLOOR = 1e-8
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class StructuralSet:
    """B, J and L = J B^{-1} for a given autoregressive coefficient."""

    alpha: float
    T: int
    B: np.ndarray
    J: np.ndarray
    L: np.ndarray


@dataclass(frozen=True)
class CovarianceFactorization:
    """Woodbury factorization of FF' + D.

    Attributes
    ----------
    F : ndarray of shape (T, r)
        Factor matrix.
    Dvec : ndarray of shape (T,)
        Idiosyncratic variances sigma_t^2 (all positive).
    logdet : float
        log|FF' + D|.
    inv : ndarray of shape (T, T)
        (FF' + D)^{-1}, assembled from the Woodbury pieces.
    small_core : ndarray of shape (r, r)
        (I_r + F'D^{-1}F)^{-1}.
    """

    F: np.ndarray
    Dvec: np.ndarray
    logdet: float
    inv: np.ndarray
    small_core: np.ndarray

    def solve(self, X: np.ndarray) -> np.ndarray:
        """Apply (FF'+D)^{-1} to a vector or matrix without forming inv."""
        Dinv = 1.0 / self.Dvec
        DX = (X.T * Dinv).T
        W = self.F.T @ DX
        return DX - (Dinv[:, None] * self.F) @ (self.small_core @ W)

    def quad_form_sum(self, X: np.ndarray) -> float:
        """Sum of x_i'(FF'+D)^{-1}x_i over the columns x_i of X."""
        Dinv = 1.0 / self.Dvec
        base = float(np.sum(X * X * Dinv[:, None]))
        W = (self.F.T * Dinv) @ X
        corr = float(np.sum(W * (self.small_core @ W)))
        return base - corr


def build_structural(alpha: float, T: int) -> StructuralSet:
    """Construct the T x T matrices B(alpha), J and L(alpha) = J B^{-1}.

    Parameters
    ----------
    alpha : float
        Autoregressive coefficient; any finite value.
    T : int
        Panel length, at least 2.
    """
    if T < 2:
        raise ValueError(f"panel length T must be >= 2, got {T}")
    alpha = float(alpha)
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")

    B = np.eye(T)
    idx = np.arange(T - 1)
    B[idx + 1, idx] = -alpha

    J = np.zeros((T, T))
    J[idx + 1, idx] = 1.0

    # L[t, s] = alpha^(t-s-1) for t > s; closed form of J B^{-1}
    t = np.arange(T)[:, None]
    s = np.arange(T)[None, :]
    power = t - s - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(power >= 0, np.float_power(alpha, np.maximum(power, 0)), 0.0)
    # alpha = 0 needs 0^0 = 1 on the first subdiagonal only
    if alpha == 0.0:
        L = np.zeros((T, T))
        L[idx + 1, idx] = 1.0
    return StructuralSet(alpha=alpha, T=T, B=B, J=J, L=L)


def apply_L(alpha: float, X: np.ndarray) -> np.ndarray:
    """Compute L(alpha) @ X by the recursion (LX)_t = alpha*(LX)_{t-1} + X_{t-1}.

    Avoids forming the dense T x T matrix L; useful for large T. X may be a
    vector of length T or a T x k matrix; the output has the same shape.
    """
    X = np.asarray(X, dtype=float)
    vector = X.ndim == 1
    Xm = X[:, None] if vector else X
    out = np.zeros_like(Xm)
    for t in range(1, Xm.shape[0]):
        out[t] = alpha * out[t - 1] + Xm[t - 1]
    return out[:, 0] if vector else out


def factorize_covariance(F: np.ndarray, Dvec: np.ndarray) -> CovarianceFactorization:
    """Factorize FF' + D through the Woodbury identity.

    Cost is O(T^2 r + r^3); no dense T x T inversion. Variances below the
    floor (1e-8) are rejected, as is an ill-conditioned core matrix
    I_r + F'D^{-1}F (condition number above 1e12).
    """
    F = np.asarray(F, dtype=float)
    Dvec = np.asarray(Dvec, dtype=float)
    if F.ndim != 2:
        raise ValueError("F must be a T x r matrix")
    T = F.shape[0]
    if Dvec.shape != (T,):
        raise ValueError(f"Dvec must have shape ({T},), got {Dvec.shape}")
    if not np.all(np.isfinite(F)):
        raise ValueError("F must be finite")
    if np.any(Dvec < VARIANCE_FLOOR):
        raise ValueError(
            f"variances must be >= {VARIANCE_FLOOR}; min was {Dvec.min():.3e}"
        )

    r = F.shape[1]
    Dinv = 1.0 / Dvec
    K = np.eye(r) + (F.T * Dinv) @ F
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericDegeneracyError(
            f"I_r + F'D^-1F has condition number {cond:.3e} > {CONDITION_LIMIT:.0e}"
        )
    small_core = np.linalg.inv(K)
    small_core = 0.5 * (small_core + small_core.T)

    DinvF = Dinv[:, None] * F
    inv = np.diag(Dinv) - DinvF @ small_core @ DinvF.T
    inv = 0.5 * (inv + inv.T)

    sign, logdet_K = np.linalg.slogdet(K)
    if sign <= 0:
        raise NumericDegeneracyError("I_r + F'D^-1F is not positive definite")
    logdet = float(np.sum(np.log(Dvec)) + logdet_K)
    return CovarianceFactorization(
        F=F, Dvec=Dvec, logdet=logdet, inv=inv, small_core=small_core
    )


def projection_M(F: np.ndarray, Dvec: np.ndarray) -> np.ndarray:
    """Projection kernel M = D^{-1} - D^{-1}F(F'D^{-1}F)^{-1}F'D^{-1}.

    M annihilates F (MF = 0), is positive semidefinite, and is idempotent
    in the D metric (M D M = M). Requires F'D^{-1}F to be invertible.
    """
    F = np.asarray(F, dtype=float)
    Dvec = np.asarray(Dvec, dtype=float)
    if np.any(Dvec <= 0):
        raise ValueError("variances must be positive")
    Dinv = 1.0 / Dvec
    G = (F.T * Dinv) @ F
    cond = np.linalg.cond(G) if G.size else np.inf
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericDegeneracyError(
            "F'D^-1F is singular or near-singular (rank-deficient factors)"
        )
    DinvF = Dinv[:, None] * F
    M = np.diag(Dinv) - DinvF @ np.linalg.solve(G, DinvF.T)
    return 0.5 * (M + M.T)
