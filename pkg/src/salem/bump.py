"""Compactly supported spline bump, its periodizations, and decay constants.

The bump on ``R^m`` is a tensor power of the centred, rescaled cardinal
B-spline of order ``p = K + 2``::

    f(x) = (p/2) B_p(p (x + 1) / 2),      f_hat(xi) = sinc(2 xi / p) ** p

so it is ``C^K``, non-negative, positive exactly on ``(-1, 1)``, integrates
to one, and has a closed-form Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import minimize_scalar

from .errors import DomainError

GRID_PER_UNIT = 2**16


@dataclass(frozen=True)
class BumpSpec:
    m: int
    K: int

    def __post_init__(self):
        if self.m < 1 or self.K < 0:
            raise DomainError("bump needs m >= 1 and K >= 0")

    @property
    def p(self) -> int:
        return self.K + 2

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline.basis_element(np.arange(self.p + 1, dtype=float), extrapolate=False)

    @cached_property
    def C1(self) -> float:
        return decay_constant(self)

    def factor(self, x) -> np.ndarray:
        """The 1D factor f, vectorized."""
        x = np.asarray(x, dtype=float)
        t = self.p * (x + 1.0) / 2.0
        inside = np.abs(x) < 1.0
        vals = np.zeros_like(t)
        if np.any(inside):
            vals[inside] = 0.5 * self.p * self._spline(t[inside])
        return np.maximum(vals, 0.0)

    def factor_hat(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.sinc(2.0 * xi / self.p) ** self.p


def _tensor(spec: BumpSpec, pts, fn):
    pts = np.asarray(pts, dtype=float)
    if spec.m == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        out = fn(pts)
    else:
        if pts.shape[-1] != spec.m:
            raise DomainError(f"expected points with last axis of size m={spec.m}")
        out = np.prod(fn(pts), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def bump_eval(spec: BumpSpec, x):
    """phi(x) for x of shape (..., m); plain scalars/arrays are accepted when m = 1."""
    return _tensor(spec, x, spec.factor)


def bump_hat(spec: BumpSpec, xi):
    """phi_hat(xi) = prod_i sinc(2 xi_i / p)^p, real and even."""
    return _tensor(spec, xi, spec.factor_hat)


def tail_majorant(spec: BumpSpec, xi) -> np.ndarray:
    """(p / (2 pi xi))^p (1 + xi)^K, an upper bound for (1+xi)^K |f_hat(xi)|; decreasing in xi."""
    xi = np.asarray(xi, dtype=float)
    p, K = spec.p, spec.K
    return (p / (2.0 * np.pi * xi)) ** p * (1.0 + xi) ** K


def decay_constant(spec: BumpSpec, per_unit: int = GRID_PER_UNIT) -> float:
    """C1 = sup_xi (1 + |xi|)^K |phi_hat(xi)|.

    The sup in m dimensions equals the 1D sup (the other factors are at most
    one).  Dense grid on [0, 10p], local refinement of the grid maximum,
    and the decreasing analytic majorant beyond 10p.
    """
    p, K = spec.p, spec.K
    xi_star = 10.0 * p
    grid = np.linspace(0.0, xi_star, int(xi_star * per_unit) + 1)
    vals = (1.0 + grid) ** K * np.abs(spec.factor_hat(grid))
    k = int(np.argmax(vals))
    best = float(vals[k])
    h = grid[1] - grid[0]
    lo, hi = max(grid[k] - h, 0.0), min(grid[k] + h, xi_star)
    if hi > lo:
        res = minimize_scalar(
            lambda t: -(1.0 + t) ** K * abs(float(spec.factor_hat(t))),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return max(best, float(tail_majorant(spec, xi_star)))


def periodized_factor(spec: BumpSpec, eps: float, y) -> np.ndarray:
    """sum_k eps^-1 f((y - k)/eps) over every translate whose support meets y."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    y = np.asarray(y, dtype=float)
    base = np.floor(y)
    r = y - base
    reach = int(np.ceil(eps)) + 1
    total = np.zeros_like(y)
    for j in range(-reach, reach + 1):
        total += spec.factor((r - j) / eps)
    return total / eps


def periodized_eval(spec: BumpSpec, eps: float, q, theta, x) -> np.ndarray | float:
    """Phi^eps(xq - theta) with x in R^{mn} read as an m x n matrix, row-major.

    Accepts x of shape (mn,) or (N, mn); the bump is a tensor product, so the
    lattice sum over Z^m factorizes into 1D periodizations.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    q = np.asarray(q, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    m, n = spec.m, q.size
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and x.size == m * n)
    X = x.reshape(-1, m, n)
    y = X @ q - theta
    out = np.prod(periodized_factor(spec, eps, y), axis=-1)
    return float(out[0]) if single else out


def cutoff_bump(m: int, n: int, K: int) -> BumpSpec:
    """chi_0 on R^{mn}: the same spline construction in mn dimensions."""
    return BumpSpec(m * n, K)


def tensor_hat_on_grid(spec: BumpSpec, axis: np.ndarray) -> np.ndarray:
    """phi_hat on the product grid axis^m, shape (len(axis),)*m."""
    f = spec.factor_hat(axis)
    out = f
    for _ in range(spec.m - 1):
        out = np.multiply.outer(out, f)
    return out
