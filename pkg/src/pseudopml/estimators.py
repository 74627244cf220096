"""Symmetric properties, plug-in evaluation and per-symbol estimators.

All properties are separable, ``f(p) = sum_x g(p_x)``, with natural logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .pml import DiscreteDistribution
from .polyapprox import (PolyApprox, PolyConfig, dtu_case, dtu_poly_config, dtu_radius,
                         entropy_poly_config, falling_factorial_estimate, neg_x_log_x)
from .profiles import Histogram

ENTROPY = "entropy"
DTU = "dtu"
SUPPORT = "support"
KINDS = (ENTROPY, DTU, SUPPORT)

CORRECTIONS = ("none", "per_symbol_half", "s_bar_over_n")


@dataclass(frozen=True)
class Property:
    """A separable symmetric property.

    ``N`` is required for ``dtu`` (it fixes the uniform reference) and
    ``k`` for ``support``. For entropy ``N`` is optional and only used to
    clamp estimates to ``[0, ln N]``.
    """

    kind: str
    N: int | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown property {self.kind!r}; expected one of {KINDS}")
        if self.kind == DTU and self.N is None:
            raise ValueError("dtu needs the domain size N")
        if self.kind == SUPPORT and self.k is None:
            raise ValueError("support needs the lower-bound parameter k")
        if self.kind != SUPPORT and self.k is not None:
            raise ValueError("k only applies to support")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be positive")

    @classmethod
    def entropy(cls, N: int | None = None) -> "Property":
        return cls(ENTROPY, N)

    @classmethod
    def dtu(cls, N: int) -> "Property":
        return cls(DTU, N)

    @classmethod
    def support(cls, k: int, N: int | None = None) -> "Property":
        return cls(SUPPORT, N, k)

    def g(self, x):
        """Per-symbol contribution ``g(x)``, vectorised; ``0 log 0 = 0``."""
        x = np.asarray(x, dtype=float)
        if self.kind == ENTROPY:
            return neg_x_log_x(x)
        if self.kind == DTU:
            return np.abs(x - 1.0 / self.N)
        return (x > 0).astype(float)

    @property
    def f_max(self) -> float:
        if self.kind == ENTROPY:
            return math.log(self.N) if self.N else math.inf
        if self.kind == DTU:
            return 2.0
        return float(min(self.k, self.N) if self.N else self.k)

    def clamp(self, value: float) -> float:
        return float(min(max(value, 0.0), self.f_max))


@dataclass(frozen=True)
class Estimate:
    """Combined estimate; ``raw = bad + good + bias`` and ``value`` is ``raw`` clamped."""

    value: float
    bad: float
    good: float
    bias: float
    raw: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "bad_set_value": self.bad, "good_set_value": self.good,
                "bias_correction": self.bias, "raw": self.raw, "diagnostics": self.diagnostics}


def _sum_g(prop: Property, values: np.ndarray, mults: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return float(np.dot(mults, prop.g(values)))


def plugin_property(p: DiscreteDistribution, prop: Property, subset: Iterable[int] | None = None) -> float:
    """``sum_x g(p_x)`` over ``subset`` (default: the whole domain).

    Without a ``subset`` the levels are used directly and any outside mass
    is spread evenly over the symbols the levels do not cover. With a
    ``subset`` and a symbol assignment, the listed symbols are read off the
    per-symbol vector. With a ``subset`` but no assignment the levels are
    taken to describe the subset (the pseudo-PML convention); symbols of the
    subset not covered by any level get probability 0.
    """
    vals, mults = p.values, p.multiplicities
    if subset is None:
        total = _sum_g(prop, vals, mults)
        free = p.domain_size - int(mults.sum())
        if free > 0:
            total += free * float(prop.g(p.outside_mass / free))
        return total
    subset = frozenset(subset)
    if any(x < 0 or x >= p.domain_size for x in subset):
        raise ValueError("subset reaches outside the domain")
    if p.assignment is not None:
        idx = np.fromiter(sorted(subset), dtype=np.int64, count=len(subset))
        return float(prop.g(p.probs()[idx]).sum())
    covered = int(mults.sum())
    if covered > len(subset):
        raise ValueError(f"levels cover {covered} symbols but the subset has {len(subset)}")
    return _sum_g(prop, vals, mults) + (len(subset) - covered) * float(prop.g(0.0))


def plugin_from_probs(probs, prop: Property) -> float:
    """Plug-in value for an explicit per-symbol probability vector."""
    return float(prop.g(np.asarray(probs, dtype=float)).sum())


# -- good-set estimator -------------------------------------------------------

def _subset_counts(hist: Histogram, subset) -> tuple[np.ndarray, int]:
    """Counts of the seen symbols of ``subset`` (fixed symbol order) and the unseen count."""
    if subset is None:
        seen = np.array([c for _, c in sorted(hist.counts.items())], dtype=np.int64)
        return seen, hist.domain_size - seen.size
    subset = frozenset(subset)
    seen = np.array([c for x, c in sorted(hist.counts.items()) if x in subset], dtype=np.int64)
    return seen, len(subset) - seen.size


def bias_correction(prop: Property, n: int, seen: int, subset_size: int, correction: str) -> float:
    """First-order bias term added to the empirical entropy of a subset.

    ``per_symbol_half`` adds ``1/(2n)`` per seen symbol, ``s_bar_over_n``
    adds ``|subset|/n``. Distance to uniformity and support get no correction.
    """
    if correction not in CORRECTIONS:
        raise ValueError(f"unknown correction {correction!r}; expected one of {CORRECTIONS}")
    if prop.kind != ENTROPY or correction == "none" or n == 0:
        return 0.0
    if correction == "per_symbol_half":
        return seen / (2.0 * n)
    return subset_size / n


def empirical_parts(hist2: Histogram, prop: Property, subset=None,
                    correction: str = "per_symbol_half") -> tuple[float, float]:
    """``(sum_{x in subset} g(n_x / n), correction)`` kept separate."""
    n = hist2.total
    seen, unseen = _subset_counts(hist2, subset)
    if n == 0:
        plug = (seen.size + unseen) * float(prop.g(0.0))
    else:
        plug = float(prop.g(seen / n).sum()) + unseen * float(prop.g(0.0))
    size = seen.size + unseen
    return plug, bias_correction(prop, n, int(seen.size), size, correction)


def empirical_with_bias(hist2: Histogram, prop: Property, subset=None,
                        correction: str = "per_symbol_half") -> float:
    """Empirical plug-in on ``subset`` plus the chosen bias correction.

    Examples
    --------
    >>> h = Histogram({0: 5, 1: 5}, 10, 2)
    >>> round(empirical_with_bias(h, Property.entropy(2), {0, 1}), 4)
    0.7931
    """
    plug, bias = empirical_parts(hist2, prop, subset, correction)
    return plug + bias


# -- per-symbol polynomial estimator ----------------------------------------

POLY, ZERO, PLUGIN = 0, 1, 2


def _cfg_for(prop: Property, cfg: PolyConfig) -> PolyConfig:
    if prop.N is not None and cfg.N != prop.N:
        raise ValueError(f"PolyConfig.N={cfg.N} disagrees with the property's N={prop.N}")
    return cfg


def branch_of(n1, n2, n: int, prop: Property, cfg: PolyConfig, n_first: int | None = None):
    """Which branch of the piecewise rule each ``(n'_y, n_y)`` pair takes.

    Returns an integer array with ``POLY`` (polynomial estimate of the
    count), ``ZERO`` (drop the symbol) or ``PLUGIN`` (empirical value plus
    bias term). For distance to uniformity in the large-sample regime the
    thresholds are windows around ``1/N`` instead of upper cut-offs.
    """
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    n_first = n if n_first is None else n_first
    lnN = math.log(cfg.N)
    if prop.kind == DTU and dtu_case(cfg) == 2:
        centre = 1.0 / cfg.N
        small_first = np.abs(n1 / n_first - centre) < dtu_radius(cfg, cfg.c2)
        small_second = np.abs(n2 / n - centre) < dtu_radius(cfg, cfg.c1)
    else:
        small_first = n1 < cfg.c2 * lnN
        small_second = n2 < cfg.c1 * lnN
    out = np.full(np.broadcast(n1, n2).shape, PLUGIN, dtype=np.int64)
    out[small_first & small_second] = POLY
    out[small_first & ~small_second] = ZERO
    return out


def poly_for(prop: Property, cfg: PolyConfig) -> PolyApprox:
    if prop.kind == ENTROPY:
        return entropy_poly_config(cfg)
    if prop.kind == DTU:
        return dtu_poly_config(cfg)
    raise ValueError("the polynomial estimator covers entropy and dtu only")


def bias_term(prop: Property, n: int) -> float:
    """``g_n``: ``1/(2n)`` for entropy, 0 otherwise."""
    return 1.0 / (2 * n) if prop.kind == ENTROPY else 0.0


def per_symbol_sum(hist1: Histogram, hist2: Histogram, S, prop: Property, cfg: PolyConfig,
                   pa: PolyApprox | None = None) -> tuple[float, dict]:
    """Unclamped ``sum_{y in S} g_y`` and a breakdown by branch.

    Symbols of ``S`` seen in neither half are handled in bulk: they all sit
    in the same branch and contribute the same value.
    """
    cfg = _cfg_for(prop, cfg)
    n = hist2.total
    if n < 1:
        raise ValueError("the second half is empty")
    n_first = hist1.total or n
    S = frozenset(S) if S is not None else None
    if S is None:
        seen_syms = sorted(set(hist1.counts) | set(hist2.counts))
        n_unseen = hist2.domain_size - len(seen_syms)
    else:
        seen_syms = sorted(x for x in set(hist1.counts) | set(hist2.counts) if x in S)
        n_unseen = len(S) - len(seen_syms)
    c1 = np.array([hist1.count(x) for x in seen_syms], dtype=np.int64)
    c2 = np.array([hist2.count(x) for x in seen_syms], dtype=np.int64)
    br = branch_of(c1, c2, n, prop, cfg, n_first)
    br0 = int(branch_of(0, 0, n, prop, cfg, n_first))
    need_poly = bool(np.any(br == POLY)) or (n_unseen > 0 and br0 == POLY)
    if need_poly and pa is None:
        pa = poly_for(prop, cfg)
    gn = bias_term(prop, n)

    vals = np.zeros(c2.size)
    if np.any(br == POLY):
        vals[br == POLY] = falling_factorial_estimate(pa, c2[br == POLY], n, cfg.raw_monomials)
    plug = br == PLUGIN
    vals[plug] = prop.g(c2[plug] / n) + gn
    if n_unseen == 0:
        v0 = 0.0
    elif br0 == POLY:
        v0 = float(pa.coeffs[0])
    elif br0 == PLUGIN:
        v0 = float(prop.g(0.0)) + gn
    else:
        v0 = 0.0
    total = float(vals.sum()) + n_unseen * v0
    info = {"poly": int(np.sum(br == POLY)) + (n_unseen if br0 == POLY else 0),
            "zero": int(np.sum(br == ZERO)) + (n_unseen if br0 == ZERO else 0),
            "plugin": int(np.sum(plug)) + (n_unseen if br0 == PLUGIN else 0)}
    if pa is not None:
        info.update(degree=pa.degree, interval=list(pa.interval), sup_error=pa.sup_error)
    return total, info


def per_symbol_estimator(hist1: Histogram, hist2: Histogram, S, prop: Property, cfg: PolyConfig,
                         pa: PolyApprox | None = None) -> float:
    """Three-branch per-symbol estimate of ``sum_{y in S} g(p_y)``, clamped.

    A symbol rarely seen in the first half is estimated from its second-half
    count with the unbiased estimator of the best polynomial approximation
    of ``g``, or dropped when its second-half count is large; a symbol seen
    often in the first half gets its empirical value plus ``g_n``.
    """
    total, _ = per_symbol_sum(hist1, hist2, S, prop, cfg, pa)
    return prop.clamp(total)


def lipschitz_constant(prop: Property, n: int) -> float:
    """``L_g = n * max_i |g(i/n) - g((i-1)/n)|`` evaluated over ``i = 1..n``."""
    x = np.arange(n + 1) / n
    return float(n * np.max(np.abs(np.diff(prop.g(x)))))


def sensitivity_bound(prop: Property, cfg: PolyConfig, n: int, pa: PolyApprox | None = None) -> float:
    """Worst-case change of the per-symbol estimator when one sample changes.

    ``9 max(e^{L^2/n} B, L_g/n, g(c1 ln n / n), g_n)`` where ``B`` is the
    coefficient scale ``max_i |b_i| b^(i-1) / n`` of the approximation on
    ``[a, b]``.
    """
    pa = poly_for(prop, cfg) if pa is None else pa
    L = pa.degree
    x = min(1.0, cfg.c1 * math.log(n) / n)
    terms = (math.exp(L * L / n) * pa.scaled_max_coeff(n),
             lipschitz_constant(prop, n) / n,
             float(prop.g(x)),
             bias_term(prop, n))
    return 9.0 * max(terms)
