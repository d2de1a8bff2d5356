"""Estimators: the system QMLE and the fixed-effects comparator.

The QMLE maximizes the concentrated likelihood over (alpha, F, D) in two
stages. Stage 1 is cyclic exact coordinate ascent: given (F, D) the
concentrated likelihood is quadratic in alpha (because B(alpha) = I - alpha*J),
so the alpha update is closed form; given alpha, (F, D) are improved with EM
steps for the heteroskedastic factor model fitted to B S B'. Both updates are
exact or EM-monotone, so the likelihood never decreases. Stage 2 polishes
with L-BFGS-B on (alpha, vec F, log sigma_t^2) using the analytic score.

The fixed-effects comparator minimizes the homoskedastic sum of squares

    sum_i sum_{t>=2} (y_it - alpha*y_{i,t-1} - delta_t - lambda_i'f_t)^2

by alternating exact least squares for (alpha, delta) with a rank-r principal
components update for (Lambda, F). It carries the usual O(1/T) dynamic-panel
bias; the QMLE does not.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .efficiency import gamma_T_closed
from .errors import DegenerateDataError, NumericDegeneracyError
from .likelihood import (
    ModelParams,
    PanelData,
    loglik_concentrated,
    normalize_F,
    pack_params,
    score_analytic,
    unpack_params,
)
from .structural import VARIANCE_FLOOR, build_structural


@dataclass
class EstimationOptions:
    """Tolerances and iteration caps for estimate_qmle."""

    stage1_cycles: int = 60
    em_steps: int = 20
    stage1_rel_tol: float = 1e-9
    stage2_max_iter: int = 2000
    rel_tol: float = 1e-10
    grad_tol: float = 1e-6
    variance_floor: float = VARIANCE_FLOOR
    keep_trace: bool = False


@dataclass
class FitResult:
    """QMLE output. params.F is normalized (F'D^{-1}F diagonal, signs fixed)."""

    params: ModelParams
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    se_alpha: float
    nobs: int
    loglik_trace: list = field(default_factory=list)


@dataclass
class FEOptions:
    max_iter: int = 500
    rel_tol: float = 1e-9


@dataclass
class FEFitResult:
    """Fixed-effects output. F[0] and delta[0] are zero: the objective sums
    over t >= 2, so the first-period nuisance terms are not identified."""

    alpha: float
    Lambda: np.ndarray
    F: np.ndarray
    delta: np.ndarray
    sigma2: float
    objective: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)


def max_identifiable_factors(T: int) -> int:
    """Largest r with (T - r)^2 >= T + r (the classic counting bound)."""
    r = 0
    while r + 1 < T and (T - (r + 1)) ** 2 >= T + (r + 1):
        r += 1
    return r


def validate_estimation_inputs(data: PanelData, r: int) -> None:
    if data.T < 4:
        raise ValueError(f"estimation needs T >= 4, got T={data.T}")
    if data.N < 2:
        raise ValueError(f"estimation needs N >= 2, got N={data.N}")
    if r < 1:
        raise ValueError("r must be >= 1")
    rmax = max_identifiable_factors(data.T)
    if r > rmax:
        raise ValueError(
            f"r={r} exceeds the identifiable maximum {rmax} for T={data.T}"
        )
    if data.N <= data.T * r:
        raise ValueError(
            f"need N > T*r for a stable fit (N={data.N}, T*r={data.T * r})"
        )


def _anderson_hsiao_alpha(Y: np.ndarray) -> float:
    """Instrumental-variable starting value from the moment
    sum_i y_i1 (dy_i3 - alpha dy_i2) = 0, with a pooled least-squares
    fallback when the denominator degenerates."""
    scale = float(np.mean(Y * Y)) + 1e-300
    num = float(np.sum(Y[:, 0] * (Y[:, 2] - Y[:, 1])))
    den = float(np.sum(Y[:, 0] * (Y[:, 1] - Y[:, 0])))
    if abs(den) > 1e-10 * Y.shape[0] * scale:
        alpha = num / den
    else:
        Z = Y -Y.mean(axis=0)
        x = Z[:, :-1].ravel()
        y = Z[:, 1:].ravel()
        xx = float(x @ x)
        if xx <= 1e-12 * x.size * scale:
            raise DegenerateDataError("panel has no usable variation")
        alpha = float(x @ y) / xx
    return float(np.clip(alpha, -0.99, 0.99))


def init_params(data: PanelData, r: int) -> ModelParams:
    """Starting point: alpha from the IV moment, (F, D) from the leading
    eigenstructure of the sample covariance of B(alpha0)(y_i - ybar)."""
    validate_estimation_inputs(data, r)
    S = data.demeaned_cov
    if float(np.trace(S)) <= 1e-300:
        raise DegenerateDataError("panel has zero cross-section variance")
    alpha0 = _anderson_hsiao_alpha(data.Y)
    B = build_structural(alpha0, data.T).B
    Sz = B @ S @ B.T
    evals, evecs = np.linalg.eigh(Sz)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    sigma_bar = max(float(np.mean(evals[r:])), VARIANCE_FLOOR)
    load = np.sqrt(np.maximum(evals[:r] - sigma_bar, 0.05 * np.maximum(evals[:r], VARIANCE_FLOOR)))
    F0 = evecs[:, :r] * load[None, :]
    D0 = np.maximum(np.diag(Sz - F0 @ F0.T), VARIANCE_FLOOR)
    return ModelParams(alpha=alpha0, F=F0, Dvec=D0)


def _em_step(Sz: np.ndarray, F: np.ndarray, Dvec: np.ndarray, floor: float):
    """One EM update of the factor model FF'+D fitted to the covariance Sz."""
    r = F.shape[1]
    Dinv = 1.0 / Dvec
    G = np.linalg.inv(np.eye(r) + (F.T * Dinv) @ F)
    W = G @ (F.T * Dinv)  # r x T, posterior loading weights
    Czl = Sz @ W.T
    Cll = G + W @ Czl
    F_new = np.linalg.solve(Cll.T, Czl.T).T
    D_new = np.maximum(np.diag(Sz - F_new @ Czl.T), floor)
    return F_new, D_new


def _alpha_update(S: np.ndarray, P: np.ndarray) -> float:
    """Exact maximizer of the alpha-quadratic tr(P B(alpha) S B(alpha)')."""
    T = S.shape[0]
    # tr(P J S) and tr(P J S J'): J shifts rows down, so (J S)[t] = S[t-1]
    JS = np.zeros_like(S)
    JS[1:] = S[:-1]
    JSJ = np.zeros_like(S)
    JSJ[1:, 1:] = S[:-1, :-1]
    a = float(np.sum(P * JSJ))
    b = float(np.sum(P * JS.T))  # tr(P J S) with P symmetric
    if a <= 0:
        return 0.0
    return b / a


def estimate_qmle(
    data: PanelData, r: int, options: EstimationOptions | None = None
) -> FitResult:
    """Maximize the concentrated likelihood; returns a normalized fit.

    Deterministic given (data, options). The likelihood at the result is
    never below its value at the starting point (every stage-1 update is an
    exact or EM-monotone coordinate step; stage 2 uses a line search).
    """
    opts = options or EstimationOptions()
    params = init_params(data, r)
    T = data.T
    S = data.demeaned_cov
    N = data.N

    ll = loglik_concentrated(params, data)
    ll_init = ll
    trace = [ll] if opts.keep_trace else []

    alpha, F, Dvec = params.alpha, params.F, params.Dvec
    cycles = 0
    for cycles in range(1, opts.stage1_cycles + 1):
        B = build_structural(alpha, T).B
        Sz = B @ S @ B.T
        for _ in range(opts.em_steps):
            F, Dvec = _em_step(Sz, F, Dvec, opts.variance_floor)
        Dinv = 1.0 / Dvec
        K = np.linalg.inv(np.eye(r) + (F.T * Dinv) @ F)
        P = np.diag(Dinv) - (Dinv[:, None] * F) @ K @ (F.T * Dinv)
        alpha = _alpha_update(S, P)
        ll_new = loglik_concentrated(ModelParams(alpha=alpha, F=F, Dvec=Dvec), data)
        if opts.keep_trace:
            trace.append(ll_new)
        if abs(ll_new - ll) <= opts.stage1_rel_tol * (1.0 + abs(ll)):
            ll = ll_new
            break
        ll = ll_new

    # stage 2: quasi-Newton on (alpha, vec F, log sigma^2) with analytic score
    theta0 = pack_params(ModelParams(alpha=alpha, F=F, Dvec=Dvec))

    def negative_loglik(theta):
        p = unpack_params(theta, T, r)
        val = loglik_concentrated(p, data)
        grad = score_analytic(p, data)
        if opts.keep_trace:
            trace.append(val)
        return -val, -grad

    res = minimize(
        negative_loglik,
        theta0,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": opts.stage2_max_iter,
            "ftol": 1e-14,
            "gtol": 0.5 * opts.grad_tol * (1.0 + abs(ll)),
            "maxcor": 25,
        },
    )
    final = unpack_params(res.x, T, r)
    ll_final = loglik_concentrated(final, data)
    if not np.isfinite(ll_final):
        raise NumericDegeneracyError("likelihood is non-finite at the optimum")
    if np.any(final.Dvec <= 1.5 * opts.variance_floor):
        raise NumericDegeneracyError(
            "a variance collapsed to the floor; likelihood appears unbounded"
        )
    if ll_final < ll_init - 1e-8 * (1.0 + abs(ll_init)):
        raise NumericDegeneracyError("optimizer lost likelihood relative to init")

    grad = score_analytic(final, data)
    grad_norm = float(np.max(np.abs(grad)))
    rel_change = abs(ll_final - ll) / (1.0 + abs(ll_final))
    converged = bool(
        grad_norm < opts.grad_tol * (1.0 + abs(ll_final)) and rel_change < 1e-6
    ) and bool(res.success or res.status == 0)

    if abs(final.alpha) >= 1.0:
        warnings.warn(
            f"|alpha_hat| = {abs(final.alpha):.4f} >= 1; the asymptotic theory "
            "assumes |alpha| < 1",
            RuntimeWarning,
            stacklevel=2,
        )

    F_norm, _ = normalize_F(final.F, final.Dvec)
    Bhat = build_structural(final.alpha, T).B
    params_out = ModelParams(
        alpha=final.alpha, F=F_norm, Dvec=final.Dvec, delta=Bhat @ data.ybar
    )
    fit = FitResult(
        params=params_out,
        loglik=ll_final,
        iterations=cycles + int(res.nit),
        converged=converged,
        grad_norm=grad_norm,
        se_alpha=np.nan,
        nobs=N,
        loglik_trace=trace,
    )
    fit.se_alpha = standard_error_alpha(fit, data)
    return fit


def standard_error_alpha(fit: FitResult, data: PanelData) -> float:
    """Plug-in standard error (N T gamma_T(alpha_hat, D_hat))^{-1/2}."""
    g = gamma_T_closed(fit.params.alpha, fit.params.Dvec)
    return float(1.0 / np.sqrt(data.N * data.T * g))


def estimate_factors_se(fit: FitResult) -> np.ndarray:
    """Per-period factor standard errors sqrt(sigma_t^2 / N).

    The variance bound for each coordinate of f_t is sigma_t^2 / N, so the
    same value applies to every one of the r coordinates at period t.
    """
    return np.sqrt(fit.params.Dvec / fit.nobs)


def estimate_fixed_effects(
    data: PanelData, r: int, options: FEOptions | None = None
) -> FEFitResult:
    """Alternating least squares for the homoskedastic fixed-effects model.

    Given (Lambda, F) the (alpha, delta) step is exact least squares with
    time dummies; given (alpha, delta) the (Lambda, F) step is the rank-r
    principal components truncation of the residual matrix. Each half-step
    is an exact minimization, so the objective is monotone nonincreasing;
    any observed increase aborts with a diagnostic.
    """
    opts = options or FEOptions()
    validate_estimation_inputs(data, r)
    Y = data.Y
    N, T = data.N, data.T
    Ylead = Y[:, 1:]  # y_it for t = 2..T
    Ylag = Y[:, :-1]  # y_{i,t-1}

    alpha = _anderson_hsiao_alpha(Y)
    delta = (Ylead - alpha * Ylag).mean(axis=0)
    E = Ylead - alpha * Ylag - delta
    U, s, Vt = np.linalg.svd(E, full_matrices=False)
    Lam = U[:, :r] * s[:r]
    F2 = Vt[:r].T

    def objective(alpha, delta, Lam, F2):
        R = Ylead - alpha * Ylag - delta - Lam @ F2.T
        return float(np.sum(R * R))

    obj = objective(alpha, delta, Lam, F2)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        # (alpha, delta) step: within-period least squares on w = y - Lam f'
        w = Ylead - Lam @ F2.T
        xbar = Ylag.mean(axis=0)
        wbar = w.mean(axis=0)
        xd = Ylag - xbar
        denom = float(np.sum(xd * xd))
        if denom <= 0:
            raise DegenerateDataError("lagged outcomes have no variation")
        alpha = float(np.sum(xd * (w - wbar))) / denom
        delta = wbar - alpha * xbar

        # (Lambda, F) step: principal components of the residual matrix
        E = Ylead - alpha * Ylag - delta
        U, s, Vt = np.linalg.svd(E, full_matrices=False)
        Lam = U[:, :r] * s[:r]
        F2 = Vt[:r].T

        obj_new = objective(alpha, delta, Lam, F2)
        if obj_new > obj + 1e-9 * (1.0 + obj):
            raise NumericDegeneracyError(
                f"alternating objective increased at iteration {it}: "
                f"{obj:.6e} -> {obj_new:.6e}"
            )
        trace.append(obj_new)
        rel = (obj - obj_new) / max(obj, 1e-300)
        obj = obj_new
        if rel < opts.rel_tol:
            converged = True
            break

    F_full = np.zeros((T, r))
    F_full[1:] = F2
    delta_full = np.zeros(T)
    delta_full[1:] = delta
    return FEFitResult(
        alpha=alpha,
        Lambda=Lam,
        F=F_full,
        delta=delta_full,
        sigma2=obj / (N * (T - 1)),
        objective=obj,
        iterations=it,
        converged=converged,
        objective_trace=trace,
    )
