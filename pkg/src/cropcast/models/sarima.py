"""Seasonal ARIMA fitted by conditional sum of squares with AIC selection.

The model is phi(B) Phi(B^12) (1-B)^d (1-B^12)^D y_t = theta(B) Theta(B^12) e_t.
Coefficients minimize the conditional sum of squared one-step residuals on
the differenced series (pre-sample residuals fixed at zero) and order
selection scans the grid p,q,P,Q in {0,1,2}, d,D in {0,1} for minimal
AIC = n*ln(SSE/n) + 2*(k+1).

When d + D == 0 the series is mean-centered before estimation (prices have
a far-from-zero level and the CSS recursion carries no intercept); after
differencing no centering is applied, which preserves the exact
random-walk == last-value and pure-seasonal == last-cycle identities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..errors import ConvergenceError, InputError, SelectionError
from ..timeseries import MonthSeries

SEASON = 12
_GRID_VALUES = dict(p=(0, 1, 2), d=(0, 1), q=(0, 1, 2), P=(0, 1, 2), D=(0, 1), Q=(0, 1, 2))
_ROOT_MARGIN = 1.001  # factor roots must lie outside |z| = 1 by this margin
_SSE_FLOOR = 1e-300


@dataclass(frozen=True)
class SarimaOrder:
    p: int
    d: int
    q: int
    P: int
    D: int
    Q: int
    s: int = SEASON

    def __post_init__(self) -> None:
        for name in ("p", "q", "P", "Q"):
            if getattr(self, name) not in (0, 1, 2):
                raise InputError(f"order {name} must be in {{0,1,2}}")
        for name in ("d", "D"):
            if getattr(self, name) not in (0, 1):
                raise InputError(f"order {name} must be in {{0,1}}")
        if self.s != SEASON:
            raise InputError("seasonal period is fixed at 12")

    @property
    def n_coefficients(self) -> int:
        return self.p + self.q + self.P + self.Q

    def min_history(self) -> int:
        return 2 * (self.p + self.q + self.P * self.s + self.Q * self.s) + (
            self.d + self.D * self.s
        ) + SEASON

    def as_tuple(self) -> Tuple[int, int, int, int, int, int]:
        return (self.p, self.d, self.q, self.P, self.D, self.Q)

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})_{self.s}"


def _difference_stages(y: np.ndarray, order: SarimaOrder) -> List[Tuple[int, np.ndarray]]:
    """Successively differenced series; each entry is (lag, series before diff)."""
    stages = []
    cur = y
    for _ in range(order.D):
        stages.append((SEASON, cur))
        cur = cur[SEASON:] - cur[:-SEASON]
    for _ in range(order.d):
        stages.append((1, cur))
        cur = cur[1:] - cur[:-1]
    stages.append((0, cur))
    return stages


def _expand_poly(coefs: np.ndarray, seasonal: np.ndarray, sign: float) -> np.ndarray:
    """(1 + sign*c1 B + ...) * (1 + sign*C1 B^12 + ...) as dense lag weights."""
    base = np.zeros(len(coefs) + 1)
    base[0] = 1.0
    base[1:] = sign * coefs
    seas = np.zeros(SEASON * len(seasonal) + 1)
    seas[0] = 1.0
    for j, c in enumerate(seasonal, start=1):
        seas[SEASON * j] = sign * c
    return np.convolve(base, seas)


def _split_params(x: np.ndarray, order: SarimaOrder):
    i = 0
    phi = x[i : i + order.p]; i += order.p
    theta = x[i : i + order.q]; i += order.q
    sphi = x[i : i + order.P]; i += order.P
    stheta = x[i : i + order.Q]
    return phi, theta, sphi, stheta


def _css_residuals(w: np.ndarray, x: np.ndarray, order: SarimaOrder) -> np.ndarray:
    phi, theta, sphi, stheta = _split_params(x, order)
    c_ar = _expand_poly(phi, sphi, -1.0)
    c_ma = _expand_poly(theta, stheta, +1.0)
    u = np.convolve(w, c_ar, mode="valid")  # AR side for t >= max AR lag
    if len(c_ma) == 1:
        return u
    return lfilter([1.0], c_ma, u)


def _min_root_modulus(coefs: np.ndarray, sign: float) -> float:
    """Smallest |root| of 1 + sign*c1 z + sign*c2 z^2; inf when no coefficients."""
    nz = np.trim_zeros(np.asarray(coefs, dtype=float), "b")
    if nz.size == 0:
        return np.inf
    poly = np.concatenate([[1.0], sign * nz])[::-1]
    roots = np.roots(poly)
    return float(np.min(np.abs(roots))) if roots.size else np.inf


def _stability_margin(x: np.ndarray, order: SarimaOrder) -> float:
    phi, theta, sphi, stheta = _split_params(x, order)
    return min(
        _min_root_modulus(phi, -1.0),
        _min_root_modulus(theta, +1.0),
        _min_root_modulus(sphi, -1.0),
        _min_root_modulus(stheta, +1.0),
    )


@dataclass(frozen=True)
class SarimaFit:
    order: SarimaOrder
    params: np.ndarray
    mean: float
    sigma2: float
    sse: float
    n_resid: int
    aic: float
    _stages: tuple
    _residuals: np.ndarray

    @property
    def coefficients(self):
        phi, theta, sphi, stheta = _split_params(self.params, self.order)
        return dict(phi=phi, theta=theta, seasonal_phi=sphi, seasonal_theta=stheta)

    def log_likelihood_proxy(self) -> float:
        return -0.5 * self.n_resid * np.log(max(self.sse / max(self.n_resid, 1), _SSE_FLOOR))

    def forecast(self, h: int) -> np.ndarray:
        """Recursive h-step mean forecasts on the original scale."""
        if h < 1:
            raise InputError(f"horizon must be >= 1, got {h}")
        order = self.order
        phi, theta, sphi, stheta = _split_params(self.params, order)
        c_ar = _expand_poly(phi, sphi, -1.0)
        c_ma = _expand_poly(theta, stheta, +1.0)
        w = self._stages[-1][1] - self.mean
        t0 = len(c_ar) - 1
        eps = np.zeros(len(w))
        eps[t0:] = self._residuals
        w_ext = np.concatenate([w, np.zeros(h)])
        e_ext = np.concatenate([eps, np.zeros(h)])
        n = len(w)
        for i in range(h):
            t = n + i
            acc = 0.0
            for k in range(1, len(c_ar)):
                if c_ar[k] != 0.0 and t - k >= 0:
                    acc -= c_ar[k] * w_ext[t - k]
            for k in range(1, len(c_ma)):
                if c_ma[k] != 0.0 and t - k >= 0:
                    acc += c_ma[k] * e_ext[t - k]
            w_ext[t] = acc
        future = w_ext[n:] + self.mean
        # invert differencing, innermost stage first
        for lag, base in reversed(self._stages[:-1]):
            ext = list(base)
            out = np.empty(h)
            for i in range(h):
                out[i] = future[i] + ext[len(base) + i - lag]
                ext.append(out[i])
            future = out
        return future


def sarima_fit(
    history: MonthSeries,
    order: SarimaOrder,
    params: Optional[Sequence[float]] = None,
) -> SarimaFit:
    """Estimate coefficients by CSS, or evaluate fixed ``params`` when given.

    A non-stationary or non-invertible optimum triggers a penalized refit
    that pushes every factor's roots back outside the unit circle.
    """
    n = len(history)
    if n <= order.min_history():
        raise InputError(
            f"history of {n} months too short for order {order}; "
            f"needs more than {order.min_history()}"
        )
    stages = _difference_stages(history.values, order)
    mean = float(stages[-1][1].mean()) if (order.d + order.D) == 0 else 0.0
    w = stages[-1][1] - mean
    k = order.n_coefficients
    t0 = order.p + SEASON * order.P
    n_resid = len(w) - t0
    if n_resid < 2:
        raise InputError(f"too few residuals ({n_resid}) for order {order}")
    scale = max(float(w @ w), _SSE_FLOOR)

    def sse_of(x: np.ndarray) -> float:
        eps = _css_residuals(w, x, order)
        return float(eps @ eps)

    if params is not None:
        if len(params) != k:
            raise InputError(f"order {order} expects {k} parameters, got {len(params)}")
        x_hat = np.asarray(params, dtype=float)
    elif k == 0:
        x_hat = np.zeros(0)
    else:
        res = minimize(lambda x: sse_of(x) / scale, np.full(k, 0.1),
                       method="Nelder-Mead",
                       options=dict(maxiter=250 * k, xatol=1e-4, fatol=1e-10))
        if not res.success and res.status == 2:  # hit maxiter without converging
            raise ConvergenceError(f"CSS optimizer failed for order {order}: {res.message}")
        x_hat = res.x
        if _stability_margin(x_hat, order) < _ROOT_MARGIN:
            def penalized(x: np.ndarray) -> float:
                shortfall = max(0.0, _ROOT_MARGIN - _stability_margin(x, order))
                return sse_of(x) / scale + 1e3 * shortfall**2

            res2 = minimize(penalized, 0.5 * x_hat, method="Nelder-Mead",
                            options=dict(maxiter=250 * k, xatol=1e-4, fatol=1e-10))
            x_hat = res2.x
            shrink = 0
            while _stability_margin(x_hat, order) < 1.0 and shrink < 200:
                x_hat = 0.95 * x_hat
                shrink += 1

    eps = _css_residuals(w, x_hat, order)
    sse = float(eps @ eps)
    sigma2 = sse / n_resid
    aic = n_resid * np.log(max(sse / n_resid, _SSE_FLOOR)) + 2.0 * (k + 1)
    return SarimaFit(
        order=order,
        params=np.asarray(x_hat, dtype=float),
        mean=mean,
        sigma2=sigma2,
        sse=sse,
        n_resid=n_resid,
        aic=float(aic),
        _stages=tuple(stages),
        _residuals=eps,
    )


def sarima_forecast(fitted: SarimaFit, h: int) -> np.ndarray:
    return fitted.forecast(h)


def full_order_grid() -> List[SarimaOrder]:
    """All 324 grid orders in lexicographic (p,d,q,P,D,Q) order."""
    combos = itertools.product(
        _GRID_VALUES["p"], _GRID_VALUES["d"], _GRID_VALUES["q"],
        _GRID_VALUES["P"], _GRID_VALUES["D"], _GRID_VALUES["Q"],
    )
    return [SarimaOrder(*c) for c in combos]


def sarima_select(
    history: MonthSeries, orders: Optional[Sequence[SarimaOrder]] = None
) -> SarimaOrder:
    """Minimal-AIC order over the grid.

    Ties break toward fewer total coefficients, then lexicographic
    (p,d,q,P,D,Q); orders whose precondition fails or whose optimizer does
    not converge are skipped.
    """
    if np.ptp(history.values) == 0.0:
        # degenerate zero-variance input: every grid point has zero CSS, so
        # AIC cannot discriminate; the random walk reproduces the constant
        return SarimaOrder(0, 1, 0, 0, 0, 0)
    candidates = list(orders) if orders is not None else full_order_grid()
    best = None
    failures = []
    for order in candidates:
        try:
            fit = sarima_fit(history, order)
        except (InputError, ConvergenceError) as exc:
            failures.append((order, str(exc)))
            continue
        key = (fit.aic, order.n_coefficients, order.as_tuple())
        if best is None or key < best[0]:
            best = (key, order)
    if best is None:
        raise SelectionError(
            f"no SARIMA order could be fitted ({len(failures)} failures; "
            f"first: {failures[0] if failures else 'none'})"
        )
    return best[1]
