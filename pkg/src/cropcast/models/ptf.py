"""Piecewise-linear trend plus Fourier seasonality, MAP-estimated.

The trend is a continuous piecewise line: base slope k, offset m, and slope
adjustments delta_j at 25 candidate changepoints placed uniformly over the
first ``cp_range`` fraction of training time (offset adjustments are fixed
by continuity, so each changepoint contributes a hinge basis function).
Seasonality is a 10-harmonic Fourier series with a 12-month period.

Estimation is penalized least squares: squared-error data term, L1 penalty
with weight 1/tau on the slope adjustments (Laplace prior), L2 penalty with
weight 1/sigma_s^2 on the Fourier coefficients (Normal prior).  The L1 term
is handled by splitting delta into nonnegative parts so the objective stays
smooth for a bounded quasi-Newton solver.  Multiplicative mode fits the
model to log prices and exponentiates forecasts.

Time enters in raw month units (0-based index), so the extrapolated slope
k + sum(delta) is a price change per month.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..errors import InputError
from ..timeseries import MonthSeries

N_CHANGEPOINTS = 25
N_HARMONICS = 10
PERIOD = 12
MIN_HISTORY = 36


@dataclass(frozen=True)
class PtfModel:
    base_slope: float            # k
    offset: float                # m
    delta: np.ndarray            # slope adjustments, one per changepoint
    changepoints: np.ndarray     # month-index locations
    fourier_cos: np.ndarray      # a_n, n = 1..N_HARMONICS
    fourier_sin: np.ndarray      # b_n
    tau: float
    sigma_s: float
    mode: str
    cp_range: float
    n_train: int

    @property
    def gamma_cp(self) -> np.ndarray:
        """Offset adjustments implied by trend continuity."""
        return -self.changepoints * self.delta

    @property
    def final_slope(self) -> float:
        return float(self.base_slope + self.delta.sum())

    def _evaluate(self, t: np.ndarray) -> np.ndarray:
        trend = self.base_slope * t + self.offset
        for cp, d in zip(self.changepoints, self.delta):
            trend = trend + d * np.clip(t - cp, 0.0, None)
        phase = 2.0 * np.pi * np.outer(t, np.arange(1, N_HARMONICS + 1)) / PERIOD
        seasonal = np.cos(phase) @ self.fourier_cos + np.sin(phase) @ self.fourier_sin
        return trend + seasonal

    def forecast(self, h: int) -> np.ndarray:
        if h < 1:
            raise InputError(f"horizon must be >= 1, got {h}")
        t = np.arange(self.n_train, self.n_train + h, dtype=float)
        out = self._evaluate(t)
        if self.mode == "multiplicative":
            out = np.exp(out)
        return out


def _objective_value(
    beta: np.ndarray, XtX: np.ndarray, Xty: np.ndarray, yty: float,
    n_lin: int, J: int, l1: float, l2: float,
) -> float:
    sse = float(beta @ XtX @ beta - 2.0 * beta @ Xty + yty)
    delta = beta[n_lin : n_lin + J]
    four = beta[n_lin + J :]
    return sse + l1 * float(np.abs(delta).sum()) + l2 * float(four @ four)


def _polish_active_set(
    beta0: np.ndarray, XtX: np.ndarray, Xty: np.ndarray, yty: float,
    n_lin: int, J: int, l1: float, l2: float, max_iter: int = 200,
) -> np.ndarray:
    """Refine the quasi-Newton solution to the exact KKT point.

    The problem is a lasso-penalized quadratic; given the correct active set
    and signs for delta, the optimum solves one linear system.  The loop
    drops sign-inconsistent coordinates and admits the worst KKT violator
    until the conditions hold, keeping whichever iterate scores best.
    """
    dim = len(beta0)
    delta0 = beta0[n_lin : n_lin + J]
    active = np.abs(delta0) > 1e-12
    signs = np.sign(delta0)
    best = beta0
    best_val = _objective_value(beta0, XtX, Xty, yty, n_lin, J, l1, l2)
    ridge = np.zeros(dim)
    ridge[n_lin + J :] = l2
    for _ in range(max_iter):
        keep = np.ones(dim, dtype=bool)
        keep[n_lin : n_lin + J] = active
        Q = XtX[np.ix_(keep, keep)] + np.diag(ridge[keep])
        rhs = Xty[keep].copy()
        d_pos = np.flatnonzero(keep[: n_lin + J][n_lin:])  # active delta indices
        offsets = n_lin + np.arange(len(d_pos))
        rhs[offsets] -= 0.5 * l1 * signs[d_pos]
        sol, *_ = np.linalg.lstsq(Q, rhs, rcond=None)
        beta = np.zeros(dim)
        beta[keep] = sol
        # sign consistency on the active set
        flipped = [j for k, j in enumerate(d_pos) if np.sign(beta[n_lin + j]) not in (0.0, signs[j])]
        if flipped:
            for j in flipped:
                active[j] = False
            continue
        val = _objective_value(beta, XtX, Xty, yty, n_lin, J, l1, l2)
        if val < best_val - 1e-15:
            best, best_val = beta, val
        # KKT check on inactive deltas
        g = 2.0 * (XtX @ beta - Xty)
        inactive = np.flatnonzero(~active)
        viol = np.abs(g[n_lin + inactive]) - l1
        if inactive.size and viol.max() > 1e-9 * max(l1, 1.0):
            j = inactive[int(np.argmax(viol))]
            active[j] = True
            signs[j] = -np.sign(g[n_lin + j])
            continue
        if val <= best_val + 1e-15:
            best, best_val = beta, val
        break
    return best


def _design_matrix(t: np.ndarray, changepoints: np.ndarray) -> np.ndarray:
    hinges = np.clip(t[:, None] - changepoints[None, :], 0.0, None)
    phase = 2.0 * np.pi * np.outer(t, np.arange(1, N_HARMONICS + 1)) / PERIOD
    return np.column_stack([t, np.ones_like(t), hinges, np.cos(phase), np.sin(phase)])


def ptf_fit(
    history: MonthSeries,
    tau: float,
    sigma_s: float,
    mode: str = "additive",
    cp_range: float = 0.8,
) -> PtfModel:
    """MAP point estimate of the trend-plus-seasonality model."""
    if mode not in ("additive", "multiplicative"):
        raise InputError(f"mode must be additive or multiplicative, got {mode!r}")
    if tau <= 0 or sigma_s <= 0:
        raise InputError("tau and sigma_s must be positive")
    if not 0.0 < cp_range <= 1.0:
        raise InputError(f"cp_range must be in (0, 1], got {cp_range}")
    n = len(history)
    if n < MIN_HISTORY:
        raise InputError(f"model needs >= {MIN_HISTORY} observations, got {n}")
    y = history.values
    if mode == "multiplicative":
        if np.any(y <= 0):
            raise InputError("multiplicative mode requires strictly positive data")
        y = np.log(y)

    t = np.arange(n, dtype=float)
    changepoints = np.linspace(0.0, cp_range * (n - 1), N_CHANGEPOINTS + 1)[1:]
    X = _design_matrix(t, changepoints)
    n_lin = 2  # slope and offset, unpenalized
    J = N_CHANGEPOINTS
    F = 2 * N_HARMONICS

    XtX = X.T @ X
    Xty = X.T @ y
    yty = float(y @ y)
    l1 = 1.0 / tau
    l2 = 1.0 / (sigma_s * sigma_s)

    # variables: [k, m, delta_plus(J), delta_minus(J), fourier(F)]
    def unpack(z: np.ndarray) -> np.ndarray:
        beta = np.empty(n_lin + J + F)
        beta[:n_lin] = z[:n_lin]
        beta[n_lin : n_lin + J] = z[n_lin : n_lin + J] - z[n_lin + J : n_lin + 2 * J]
        beta[n_lin + J :] = z[n_lin + 2 * J :]
        return beta

    def objective(z: np.ndarray):
        beta = unpack(z)
        g_beta = 2.0 * (XtX @ beta - Xty)
        sse = float(beta @ XtX @ beta - 2.0 * beta @ Xty + yty)
        dp = z[n_lin : n_lin + J]
        dm = z[n_lin + J : n_lin + 2 * J]
        four = z[n_lin + 2 * J :]
        val = sse + l1 * float(dp.sum() + dm.sum()) + l2 * float(four @ four)
        grad = np.empty_like(z)
        grad[:n_lin] = g_beta[:n_lin]
        grad[n_lin : n_lin + J] = g_beta[n_lin : n_lin + J] + l1
        grad[n_lin + J : n_lin + 2 * J] = -g_beta[n_lin : n_lin + J] + l1
        grad[n_lin + 2 * J :] = g_beta[n_lin + J :] + 2.0 * l2 * four
        return val, grad

    z0 = np.zeros(n_lin + 2 * J + F)
    # warm start for the unpenalized line
    slope, intercept = np.polyfit(t, y, 1)
    z0[0], z0[1] = slope, intercept
    bounds = [(None, None)] * n_lin + [(0.0, None)] * (2 * J) + [(None, None)] * F
    res = minimize(
        objective,
        z0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options=dict(maxiter=5000, ftol=1e-14, gtol=1e-10),
    )
    beta = unpack(res.x)
    beta = _polish_active_set(beta, XtX, Xty, yty, n_lin, J, l1, l2)
    return PtfModel(
        base_slope=float(beta[0]),
        offset=float(beta[1]),
        delta=beta[n_lin : n_lin + J].copy(),
        changepoints=changepoints,
        fourier_cos=beta[n_lin + J : n_lin + J + N_HARMONICS].copy(),
        fourier_sin=beta[n_lin + J + N_HARMONICS :].copy(),
        tau=tau,
        sigma_s=sigma_s,
        mode=mode,
        cp_range=cp_range,
        n_train=n,
    )


def ptf_forecast(model: PtfModel, h: int) -> np.ndarray:
    return model.forecast(h)
