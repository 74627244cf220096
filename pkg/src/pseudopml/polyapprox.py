"""Best uniform polynomial approximation and unbiased polynomial estimators.

The minimax polynomial is computed by Remez exchange in a Chebyshev basis
on the interval mapped to ``[-1, 1]`` and then converted to monomial
coefficients in the original variable. Plugging falling powers of a count
into those coefficients gives an estimator whose expectation under
``Binomial(n, p)`` sampling is exactly the polynomial evaluated at ``p``.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import chebyshev as C
from scipy.optimize import minimize_scalar

log = logging.getLogger(__name__)

NEG_X_LOG_X = "neg_x_log_x"
ABS_X_MINUS_C = "abs_x_minus_c"

MAX_REMEZ_ITER = 50
REMEZ_RTOL = 1e-9
_GRID = 4001


def neg_x_log_x(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = -x[pos] * np.log(x[pos])
    return out


def target_function(g, c: float | None = None) -> tuple[Callable, list]:
    """Resolve a function tag (or callable) to ``(f, kinks)``."""
    if callable(g):
        return g, []
    if g == NEG_X_LOG_X:
        return neg_x_log_x, []
    if g == ABS_X_MINUS_C:
        if c is None:
            raise ValueError("abs_x_minus_c needs the centre c")
        return (lambda x: np.abs(np.asarray(x, dtype=float) - c)), [c]
    raise ValueError(f"unknown target function {g!r}")


@dataclass(frozen=True)
class PolyApprox:
    """Polynomial ``sum_i coeffs[i] * x**i`` approximating ``g`` on ``interval``."""

    degree: int
    interval: tuple
    coeffs: np.ndarray
    sup_error: float
    near_best_only: bool = False
    iterations: int = 0
    reference: np.ndarray | None = None

    def __call__(self, x):
        return Polynomial(self.coeffs)(np.asarray(x, dtype=float))

    def scaled_max_coeff(self, n: int) -> float:
        """Largest ``|b_i| * b**(i-1) / n`` over ``i >= 1`` (``b`` = right end).

        This is the per-sample sensitivity scale of the polynomial estimator
        for counts inside the approximation interval.
        """
        b = self.interval[1]
        if self.degree == 0:
            return 0.0
        i = np.arange(1, self.degree + 1)
        return float(np.max(np.abs(self.coeffs[1:]) * b ** (i - 1)) / n)


def _alternating(xs, es):
    """Collapse runs of same-signed errors, keeping the largest of each run."""
    px, pe = [], []
    for x, e in zip(xs, es):
        if pe and np.sign(e) == np.sign(pe[-1]):
            if abs(e) > abs(pe[-1]):
                px[-1], pe[-1] = x, e
        else:
            px.append(x)
            pe.append(e)
    return px, pe


def _local_extrema(grid, err):
    """Indices of local extrema of ``err`` on ``grid`` (endpoints included)."""
    idx = [0]
    d = np.diff(err)
    turn = np.flatnonzero(np.sign(d[:-1]) != np.sign(d[1:])) + 1
    idx.extend(turn.tolist())
    idx.append(len(grid) - 1)
    return sorted(set(idx))


def _refine(errfun, grid, k, sign):
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    x0, e0 = grid[k], errfun(grid[k])
    if k == 0 or k == len(grid) - 1 or hi <= lo:
        return x0, e0
    res = minimize_scalar(lambda t: -sign * errfun(t), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-15 * max(1.0, abs(hi))})
    e1 = errfun(res.x)
    if sign * e1 > sign * e0:
        return float(res.x), e1
    return x0, e0


def _chebyshev_fallback(f, L, a, b, grid_u):
    cheb = Chebyshev.interpolate(lambda u: f(a + (b - a) * (u + 1) / 2), L)
    err = cheb(grid_u) - f(a + (b - a) * (grid_u + 1) / 2)
    return cheb.coef, float(np.max(np.abs(err)))


def _to_monomial(cheb_coef, a, b):
    p = Chebyshev(cheb_coef, domain=[a, b]).convert(kind=Polynomial)
    out = np.zeros(len(cheb_coef))
    out[: len(p.coef)] = p.coef
    return out


@functools.lru_cache(maxsize=512)
def _remez_cached(g, c, L, a, b, tol):
    return _remez(g, c, L, a, b, tol)


def best_uniform_approx(g, L: int, interval, tol: float = REMEZ_RTOL,
                        c: float | None = None) -> PolyApprox:
    """Near-minimax degree-``L`` polynomial for ``g`` on ``interval``.

    ``g`` is ``"neg_x_log_x"``, ``"abs_x_minus_c"`` (with ``c``) or any
    vectorised callable. Results for string tags are cached in-process.
    If Remez fails to converge within ``MAX_REMEZ_ITER`` exchanges the
    Chebyshev interpolant is returned with ``near_best_only=True``.
    """
    a, b = float(interval[0]), float(interval[1])
    if L < 0:
        raise ValueError("degree must be non-negative")
    if not b - a >= 1e-15:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    if callable(g):
        return _remez(g, c, int(L), a, b, float(tol))
    return _remez_cached(g, None if c is None else float(c), int(L), a, b, float(tol))


def _remez(g, c, L, a, b, tol) -> PolyApprox:
    f, kinks = target_function(g, c)
    to_x = lambda u: a + (b - a) * (np.asarray(u, dtype=float) + 1) / 2
    grid = -np.cos(np.pi * np.linspace(0.0, 1.0, _GRID))
    kinks_u = [2 * (k - a) / (b - a) - 1 for k in kinks if a < k < b]
    grid = np.unique(np.concatenate([grid, kinks_u]))
    fg = f(to_x(grid))
    m = L + 2
    scale = max(float(np.max(np.abs(fg))), 1e-300)

    ref = -np.cos(np.pi * np.arange(m) / (m - 1))
    signs = (-1.0) ** np.arange(m)
    coef, levelled, emax = None, 0.0, np.inf
    for it in range(1, MAX_REMEZ_ITER + 1):
        A = np.hstack([C.chebvander(ref, L), signs[:, None]])
        sol = np.linalg.solve(A, f(to_x(ref)))
        coef, levelled = sol[:-1], abs(sol[-1])

        errfun = lambda u: float(C.chebval(u, coef) - f(to_x(u)))
        err = C.chebval(grid, coef) - fg
        ext = _local_extrema(grid, err)
        pts = [_refine(errfun, grid, k, np.sign(err[k]) or 1.0) for k in ext]
        xs, es = _alternating([p[0] for p in pts], [p[1] for p in pts])
        emax = max(float(np.max(np.abs(err))), max(abs(e) for e in es))

        if emax <= 1e-14 * scale:
            return PolyApprox(L, (a, b), _to_monomial(coef, a, b), emax, False, it, to_x(ref))
        if emax - levelled <= tol * emax:
            return PolyApprox(L, (a, b), _to_monomial(coef, a, b), emax, False, it, to_x(ref))

        while len(xs) > m:
            k = int(np.argmin(np.abs(es)))
            del xs[k], es[k]
            xs, es = _alternating(xs, es)
        if len(xs) < m:
            break
        ref = np.asarray(xs)

    log.warning("Remez did not converge for %s, L=%d on [%g, %g]; using Chebyshev interpolant",
                g, L, a, b)
    coef, emax = _chebyshev_fallback(f, L, a, b, grid)
    return PolyApprox(L, (a, b), _to_monomial(coef, a, b), emax, True, MAX_REMEZ_ITER, None)


def equioscillation_count(pa: PolyApprox, g, c: float | None = None,
                          rtol: float = 1e-6, grid_size: int = 200001) -> int:
    """Number of alternating points where ``|g - P|`` reaches ``sup_error`` (to ``rtol``)."""
    f, kinks = target_function(g, c)
    a, b = pa.interval
    u = -np.cos(np.pi * np.linspace(0.0, 1.0, grid_size))
    x = np.unique(np.concatenate([a + (b - a) * (u + 1) / 2,
                                  [k for k in kinks if a < k < b],
                                  [] if pa.reference is None else pa.reference]))
    err = pa(x) - f(x)
    hits = np.abs(err) >= pa.sup_error * (1 - rtol)
    s = np.sign(err[hits])
    return int(1 + np.count_nonzero(s[1:] != s[:-1])) if s.size else 0


# -- unbiased estimation ----------------------------------------------------

def falling_ratio(n_y, n: int, i: int):
    """``n_y^(i) / n^(i)`` with ``x^(i) = x (x-1) ... (x-i+1)``."""
    n_y = np.asarray(n_y, dtype=float)
    out = np.ones_like(n_y)
    for t in range(i):
        out = out * (n_y - t) / (n - t)
    return out


def falling_factorial_estimate(pa: PolyApprox, n_y, n: int, raw_monomials: bool = False):
    """Unbiased estimate of ``P(p)`` from a ``Binomial(n, p)`` count ``n_y``.

    With ``raw_monomials`` the plain powers ``(n_y / n)**i`` are used instead,
    which is biased for ``i >= 2``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    n_y_arr = np.asarray(n_y)
    if np.any(n_y_arr > n) or np.any(n_y_arr < 0):
        raise ValueError("count must lie in [0, n]")
    if not raw_monomials and pa.degree > n:
        raise ValueError(f"degree {pa.degree} exceeds n={n}; no unbiased estimator exists")
    total = np.full(n_y_arr.shape, float(pa.coeffs[0]))
    for i in range(1, pa.degree + 1):
        term = (n_y_arr / n) ** i if raw_monomials else falling_ratio(n_y_arr, n, i)
        total = total + pa.coeffs[i] * term
    return float(total) if total.ndim == 0 else total


# -- configurations ---------------------------------------------------------

@dataclass(frozen=True)
class PolyConfig:
    n: int
    N: int
    alpha: float = 0.5
    c1: float = 70.0
    c2: float = 35.0
    raw_monomials: bool = False

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0 or self.alpha <= 0:
            raise ValueError("alpha, c1 and c2 must be positive")

    @classmethod
    def entropy(cls, n, N, alpha=0.5, c2=35.0, **kw):
        return cls(n, N, alpha, 2 * c2, c2, **kw)

    @classmethod
    def dtu(cls, n, N, alpha=0.5, c1=71.0, c2=35.0, **kw):
        return cls(n, N, alpha, c1, c2, **kw)

    @property
    def degree(self) -> int:
        return max(1, math.floor(0.25 * self.alpha * math.log(self.n) + 0.5))


def entropy_poly_config(cfg: PolyConfig) -> PolyApprox:
    """Minimax approximation of ``-x log x`` on ``[0, c1 ln N / n]``."""
    if cfg.n <= 1 or cfg.N <= 1:
        raise ValueError("need n > 1 and N > 1")
    hi = cfg.c1 * math.log(cfg.N) / cfg.n
    if hi >= 1:
        warnings.warn(f"approximation interval [0, {hi:.3g}] clamped to [0, 1]", stacklevel=2)
        hi = 1.0
    pa = best_uniform_approx(NEG_X_LOG_X, cfg.degree, (0.0, hi))
    bound = cfg.n ** cfg.alpha / cfg.n
    if pa.scaled_max_coeff(cfg.n) > bound:
        warnings.warn(f"coefficient scale {pa.scaled_max_coeff(cfg.n):.3g} exceeds n^alpha/n={bound:.3g}",
                      stacklevel=2)
    return pa


def dtu_case(cfg: PolyConfig) -> int:
    return 1 if 1.0 / cfg.N < cfg.c2 * math.log(cfg.N) / cfg.n else 2


def dtu_radius(cfg: PolyConfig, c: float) -> float:
    return math.sqrt(c * math.log(cfg.N) / (cfg.N * cfg.n))


def dtu_poly_config(cfg: PolyConfig, case: int | None = None) -> PolyApprox:
    """Minimax approximation of ``|x - 1/N|`` for the small- or large-sample regime."""
    if cfg.n < 2 or cfg.N < 2:
        raise ValueError("need n, N >= 2")
    case = dtu_case(cfg) if case is None else case
    centre = 1.0 / cfg.N
    if case == 1:
        lo, hi = 0.0, min(1.0, 2 * cfg.c1 * math.log(cfg.N) / cfg.n)
    elif case == 2:
        r = dtu_radius(cfg, cfg.c1)
        lo, hi = max(0.0, centre - r), min(1.0, centre + r)
    else:
        raise ValueError("case must be 1 or 2")
    return best_uniform_approx(ABS_X_MINUS_C, cfg.degree, (lo, hi), c=centre)
