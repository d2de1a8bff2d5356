"""Finite-T efficiency quantities for the autoregressive coefficient and the
factors.

gamma_T is the variance of the efficient score for alpha,

    gamma_T = (1/T) sum_{t=2}^T sigma_t^{-2} (sigma_{t-1}^2 + alpha^2 sigma_{t-2}^2
              + ... + alpha^{2(t-2)} sigma_1^2)
            = (1/T) tr(L D L' D^{-1}),

whose reciprocal 1/gamma_T is the variance bound for regular estimators of
alpha under bounded (ell-infinity style) factor perturbations. Under
square-summable (ell-2) perturbations the bound tightens to 1/(gamma_T+nu_T)
with

    nu_T = (1/T) tr[(LF)' M (LF)],
    M    = D^{-1} - D^{-1}F(F'D^{-1}F)^{-1}F'D^{-1}.

The per-period bound for the factors is sigma_t^2 I_r. All quantities are
reported at finite T; the T -> infinity limits are what the asymptotic
theory assumes about them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .structural import apply_L, build_structural


@dataclass(frozen=True)
class EfficiencyReport:
    """Finite-T bounds for one parameter point (alpha, F, D)."""

    gamma_T: float
    nu_T: float
    bound_alpha_ellinf: float  # 1/gamma_T
    bound_alpha_ell2: float  # 1/(gamma_T + nu_T)
    factor_bounds: np.ndarray  # per-t variance bound sigma_t^2


def _check_inputs(alpha: float, sigma2s: np.ndarray) -> np.ndarray:
    sigma2s = np.asarray(sigma2s, dtype=float)
    if sigma2s.ndim != 1 or sigma2s.size < 2:
        raise ValueError("sigma2s must be a vector of length T >= 2")
    if np.any(sigma2s <= 0):
        raise ValueError("variances must be positive")
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    return sigma2s


def gamma_T_closed(alpha: float, sigma2s: np.ndarray) -> float:
    """Efficient-score variance via the closed-form double sum.

    Evaluated by the recursion s_t = sigma_{t-1}^2 + alpha^2 s_{t-1}, which
    reproduces the inner geometric sum exactly in O(T).
    """
    sigma2s = _check_inputs(alpha, sigma2s)
    T = sigma2s.size
    a2 = alpha * alpha
    total = 0.0
    s = 0.0
    for t in range(1, T):
        s = sigma2s[t - 1] + a2 * s
        total += s / sigma2s[t]
    return total / T


def gamma_T_trace(alpha: float, sigma2s: np.ndarray) -> float:
    """Efficient-score variance via the explicit trace (1/T) tr(L D L' D^{-1})."""
    sigma2s = _check_inputs(alpha, sigma2s)
    T = sigma2s.size
    L = build_structural(alpha, T).L
    LD = L * sigma2s[None, :]
    return float(np.trace((LD @ L.T) / sigma2s[:, None])) / T


def nu_T(alpha: float, F: np.ndarray, Dvec: np.ndarray) -> float:
    """Extra efficient-score variance term (1/T) tr[(LF)' M (LF)].

    Computed through r x r blocks (no dense T x T projection matrix):
    with Q = LF, the trace equals tr(Q'D^{-1}Q) - tr[(F'D^{-1}Q)'(F'D^{-1}F)^{-1}(F'D^{-1}Q)].
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    Dvec = _check_inputs(alpha, np.asarray(Dvec, dtype=float))
    if F.shape[0] != Dvec.size:
        raise ValueError("F and Dvec disagree on T")
    Dinv = 1.0 / Dvec
    G = (F.T * Dinv) @ F
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError("F is rank deficient in the D^{-1} metric")
    Q = apply_L(alpha, F)
    A = (Q.T * Dinv) @ Q
    Bm = (F.T * Dinv) @ Q
    val = float(np.trace(A) - np.trace(Bm.T @ np.linalg.solve(G, Bm)))
    T = Dvec.size
    return max(val / T, 0.0)


def h_norm_sq(
    atilde: float,
    ftilde_seq: np.ndarray,
    gamma: float,
    nu: float,
    sigma2s: np.ndarray,
) -> float:
    """Squared norm of the local parameter h = (atilde, ftilde) on the
    square-summable neighborhood: atilde^2 (gamma+nu) + sum_s ||ftilde_s||^2 / sigma_s^2."""
    ftilde = np.asarray(ftilde_seq, dtype=float)
    if ftilde.ndim == 1:
        ftilde = ftilde[:, None]
    sigma2s = np.asarray(sigma2s, dtype=float)
    if ftilde.shape[0] > sigma2s.size:
        raise ValueError("ftilde_seq longer than the available variances")
    weights = 1.0 / sigma2s[: ftilde.shape[0]]
    return float(atilde * atilde * (gamma + nu) + np.sum(weights * np.sum(ftilde**2, axis=1)))


def efficiency_report(alpha: float, F: np.ndarray, Dvec: np.ndarray) -> EfficiencyReport:
    """Assemble gamma_T, nu_T and the implied bounds at one parameter point."""
    g = gamma_T_closed(alpha, Dvec)
    n = nu_T(alpha, F, Dvec)
    return EfficiencyReport(
        gamma_T=g,
        nu_T=n,
        bound_alpha_ellinf=1.0 / g,
        bound_alpha_ell2=1.0 / (g + n),
        factor_bounds=np.asarray(Dvec, dtype=float).copy(),
    )
