"""Profile likelihoods and an approximate (pseudo-)PML solver.

Two regimes:

* oracle scale -- the profile probability is an explicit sum over the ways
  of assigning the observed frequencies to domain symbols, so it can be
  evaluated (and maximised) exactly;
* everything else -- the sum is replaced by its Stirling/entropic
  relaxation, whose maximiser over a fixed coupling is a matrix-scaling
  (Sinkhorn) problem. The solver runs an EM-style block ascent on that
  relaxation over a geometric grid of probability levels, rounds to integer
  multiplicities and polishes the level values.

A pseudo profile only constrains the symbols of its subset ``S``; draws
outside ``S`` are absorbed by a single free "outside" mass.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammaln

from .profiles import Histogram, Profile, PseudoProfile, SampleSequence, distinct_count

log = logging.getLogger(__name__)

ORACLE_MAX_N = 8
ORACLE_MAX_DOMAIN = 8


class OracleScaleError(ValueError):
    """Instance too large for exact enumeration; use the approximate solver."""


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    """Distribution stored as probability levels with integer multiplicities.

    ``values[v]`` is shared by ``multiplicities[v]`` symbols. For pseudo-PML
    results the levels describe the subset ``S`` only and ``outside_mass``
    is the total probability of the remaining ``domain_size - sum(m)``
    symbols. ``assignment`` optionally pins symbols to levels.
    """

    values: np.ndarray
    multiplicities: np.ndarray
    domain_size: int
    assignment: Mapping[int, int] | None = None
    outside_mass: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        m = np.asarray(self.multiplicities, dtype=np.int64).reshape(-1)
        if v.shape != m.shape:
            raise ValueError("values and multiplicities differ in length")
        if np.any(v < 0) or np.any(v > 1 + 1e-12) or np.any(m < 0):
            raise ValueError("level values must lie in [0, 1] with non-negative multiplicities")
        if m.sum() > self.domain_size:
            raise ValueError("more symbols than the domain holds")
        total = float(v @ m) + self.outside_mass
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "multiplicities", m)

    @property
    def levels(self) -> list[tuple[float, int]]:
        return list(zip(self.values.tolist(), self.multiplicities.tolist()))

    @property
    def support_size(self) -> int:
        return int(self.multiplicities[self.values > 0].sum())

    @classmethod
    def from_probs(cls, probs, domain_size: int | None = None) -> "DiscreteDistribution":
        """Group an explicit per-symbol vector into levels (exact value equality)."""
        probs = np.asarray(probs, dtype=float)
        probs = probs / probs.sum()
        vals, inv, counts = np.unique(probs, return_inverse=True, return_counts=True)
        order = np.argsort(-vals, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        assignment = {int(x): int(rank[i]) for x, i in enumerate(inv)}
        return cls(vals[order], counts[order], domain_size or probs.size, assignment)

    @classmethod
    def uniform(cls, k: int, domain_size: int | None = None) -> "DiscreteDistribution":
        return cls(np.array([1.0 / k]), np.array([k]), domain_size or k)

    def probs(self) -> np.ndarray:
        """Per-symbol probability vector of length ``domain_size``.

        Uses ``assignment`` when present, otherwise fills symbols level by
        level in order. Outside mass is spread evenly over unassigned symbols.
        """
        out = np.zeros(self.domain_size)
        if self.assignment is not None:
            for x, v in self.assignment.items():
                out[x] = self.values[v]
            free = np.setdiff1d(np.arange(self.domain_size),
                                np.fromiter(self.assignment, dtype=np.int64))
        else:
            vals = np.repeat(self.values, self.multiplicities)
            out[: vals.size] = vals
            free = np.arange(vals.size, self.domain_size)
        if self.outside_mass > 0:
            if free.size == 0:
                raise ValueError("outside mass with no outside symbols")
            out[free] = self.outside_mass / free.size
        return out

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(),
                "multiplicities": self.multiplicities.tolist(),
                "domain_size": self.domain_size,
                "outside_mass": self.outside_mass}


@dataclass(frozen=True)
class SolverOptions:
    domain_size: int | None = None
    delta: float = 0.05
    max_rounds: int = 500
    tol: float = 1e-8
    polish_rounds: int = 100
    sinkhorn_tol: float = 1e-8
    sinkhorn_max_sweeps: int = 1000
    min_prob: float | None = None
    pin_s_mass: bool = False
    exact_max_assignments: int = 20000
    dp_max_states: int = 20000
    seed: int = 0


@dataclass
class PmlResult:
    distribution: DiscreteDistribution
    log_likelihood: float
    beta_certificate: float | None = None
    solver_stats: dict = field(default_factory=dict)

    def to_json(self, **kw) -> str:
        stats = {k: v for k, v in self.solver_stats.items() if k != "trace"}
        return json.dumps({"distribution": self.distribution.to_dict(),
                           "log_likelihood": self.log_likelihood,
                           "beta_certificate": self.beta_certificate,
                           "solver_stats": stats}, **kw)


# -- profile bookkeeping ----------------------------------------------------

@dataclass(frozen=True)
class _Parts:
    freqs: np.ndarray   # distinct observed frequencies j >= 1
    counts: np.ndarray  # phi(j)
    n: int              # sequence length
    n_inside: int       # samples landing on the constrained symbols
    slots: int          # number of constrained symbols (N or |S|)

    @property
    def distinct(self) -> int:
        return int(self.counts.sum())

    @property
    def outside(self) -> int:
        return self.n - self.n_inside

    @property
    def log_const(self) -> float:
        """``log n! - sum_j phi_j log j! - log (n - n_S)!``."""
        return float(gammaln(self.n + 1) - self.counts @ gammaln(self.freqs + 1)
                     - gammaln(self.outside + 1))


def _parts(phi, slots: int | None) -> _Parts:
    if isinstance(phi, PseudoProfile):
        table, slots = phi.phi_s, phi.subset_size
    else:
        table = phi.phi
        if slots is None:
            raise ValueError("a full profile needs the domain size")
    freqs = np.array(sorted(table), dtype=np.int64)
    counts = np.array([table[j] for j in freqs], dtype=np.int64)
    n_inside = int(freqs @ counts) if freqs.size else 0
    return _Parts(freqs, counts, phi.length, n_inside, int(slots))


# -- exact evaluation --------------------------------------------------------

def sequence_probability(p: DiscreteDistribution, seq: SampleSequence) -> float:
    if p.assignment is not None:
        missing = set(seq.symbols.tolist()) - set(p.assignment)
        if missing:
            raise ValueError(f"symbols without an assigned level: {sorted(missing)[:5]}")
    probs = p.probs()
    return float(np.prod(probs[seq.symbols])) if len(seq) else 1.0


def _multiset_permutations(items):
    items = sorted(items)
    n = len(items)
    out = []

    def rec(prefix, pool):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        last = None
        for i, v in enumerate(pool):
            if v == last:
                continue
            last = v
            rec(prefix + [v], pool[:i] + pool[i + 1:])

    rec([], items)
    return out


def _assignment_count(parts: _Parts) -> float:
    zeros = parts.slots - parts.distinct
    if zeros < 0:
        return 0.0
    logc = gammaln(parts.slots + 1) - gammaln(zeros + 1) - gammaln(parts.counts + 1).sum()
    return math.exp(min(float(logc), 700.0))


class _AssignmentKernel:
    """All distinct placements of the observed frequencies onto the slots."""

    def __init__(self, parts: _Parts):
        self.parts = parts
        base = [0] * (parts.slots - parts.distinct)
        for j, c in zip(parts.freqs.tolist(), parts.counts.tolist()):
            base += [j] * c
        self.F = np.array(_multiset_permutations(base), dtype=np.int64).reshape(-1, parts.slots)

    def terms(self, p: np.ndarray) -> np.ndarray:
        return np.prod(p[None, :] ** self.F, axis=1)

    def sum_terms(self, P: np.ndarray, chunk: int = 256) -> np.ndarray:
        """``sum_a prod_x P[k, x] ** F[a, x]`` for every row ``k`` of ``P``."""
        P = np.atleast_2d(P)
        out = np.zeros(P.shape[0])
        for s in range(0, self.F.shape[0], chunk):
            Fc = self.F[s:s + chunk]
            out += np.prod(P[:, None, :] ** Fc[None, :, :], axis=2).sum(axis=1)
        return out

    def log_likelihood(self, p: np.ndarray, q: float) -> float:
        """Exact log-probability with slot probabilities ``p`` and outside mass ``q``."""
        parts = self.parts
        s = float(self.terms(p).sum())
        if s <= 0 or (parts.outside > 0 and q <= 0):
            return -np.inf
        outside = parts.outside * math.log(q) if parts.outside else 0.0
        return parts.log_const + outside + math.log(s)


def _check_oracle_scale(n: int, N: int):
    if n > ORACLE_MAX_N or N > ORACLE_MAX_DOMAIN:
        raise OracleScaleError(f"exact enumeration is capped at n<={ORACLE_MAX_N}, "
                               f"N<={ORACLE_MAX_DOMAIN}; use approximate_pml/surrogate_log_likelihood")


def profile_probability_exact(p: DiscreteDistribution, phi: Profile) -> float:
    """``P(p, phi)``: total probability of all length-n sequences with profile ``phi``."""
    _check_oracle_scale(phi.length, p.domain_size)
    parts = _parts(phi, p.domain_size)
    if parts.distinct > parts.slots:
        return 0.0
    kern = _AssignmentKernel(parts)
    return float(math.exp(parts.log_const) * kern.sum_terms(p.probs())[0])


def pseudo_profile_probability_exact(p: DiscreteDistribution, phi_s: PseudoProfile) -> float:
    """Probability that the ``S``-restricted profile of a draw equals ``phi_s``."""
    _check_oracle_scale(phi_s.length, p.domain_size)
    probs = p.probs()
    S = sorted(phi_s.subset)
    if S and max(S) >= p.domain_size:
        raise ValueError("subset exceeds the domain")
    parts = _parts(phi_s, None)
    if parts.distinct > parts.slots:
        return 0.0
    q = 1.0 - float(probs[S].sum()) if S else 1.0
    q = max(q, 0.0)
    inside = _AssignmentKernel(parts).sum_terms(probs[S])[0] if S else 1.0
    return float(math.exp(parts.log_const) * q ** parts.outside * inside)


def profile_probabilities_batch(P: np.ndarray, phi: Profile | PseudoProfile) -> np.ndarray:
    """Exact (pseudo-)profile probability for each row of ``P`` (per-slot vectors).

    For a pseudo profile the columns of ``P`` are the subset's symbols and the
    outside mass is ``1 - row sum``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    parts = _parts(phi, P.shape[1])
    if parts.distinct > parts.slots:
        return np.zeros(P.shape[0])
    kern = _AssignmentKernel(parts)
    q = np.clip(1.0 - P.sum(axis=1), 0.0, None) if isinstance(phi, PseudoProfile) else 1.0
    return math.exp(parts.log_const) * q ** parts.outside * kern.sum_terms(P)


# -- surrogate ---------------------------------------------------------------

def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    return a if b == -math.inf else a + math.log1p(math.exp(b - a))


def _dp_log_sum(values, mults, parts: _Parts) -> float:
    """Exact ``log sum_X prod_v m_v!/prod_j X_vj! * p_v^(sum_j j X_vj)`` by DP over levels."""
    freqs, target = parts.freqs.tolist(), tuple(parts.counts.tolist())
    B = len(freqs)
    dp = {target: 0.0}
    for p, m in zip(values, mults):
        logp = math.log(p) if p > 0 else -math.inf
        cur = {(s, 0): w for s, w in dp.items()}
        for b in range(B):
            nxt = {}
            j = freqs[b]
            for (state, used), w in cur.items():
                top = min(state[b], m - used)
                if logp == -math.inf:
                    top = 0
                for c in range(top + 1):
                    ns = state[:b] + (state[b] - c,) + state[b + 1:]
                    val = w + (c * j * logp if c else 0.0) - math.lgamma(c + 1)
                    key = (ns, used + c)
                    nxt[key] = _logaddexp(nxt[key], val) if key in nxt else val
            cur = nxt
        dp = {}
        lm = math.lgamma(m + 1)
        for (state, used), w in cur.items():
            val = w + lm - math.lgamma(m - used + 1)
            dp[state] = _logaddexp(dp[state], val) if state in dp else val
    return float(dp.get((0,) * B, -math.inf))


def _dp_states(parts: _Parts) -> float:
    return float(np.prod(parts.counts + 1.0))


_DP_MAX_OPS = 2e6


def _dp_affordable(parts: _Parts, mults, opts: SolverOptions) -> bool:
    """States within budget and a rough transition count below ``_DP_MAX_OPS``."""
    states = _dp_states(parts)
    if states > opts.dp_max_states:
        return False
    m_max = min(int(np.max(mults)), parts.distinct) + 1
    ops = states * m_max * float(parts.counts.sum() + parts.counts.size) * len(mults)
    return ops <= _DP_MAX_OPS


def _lse(A, axis):
    """``log(sum(exp(A)))`` along ``axis``; rows of all ``-inf`` give ``-inf``."""
    mx = A.max(axis=axis, keepdims=True)
    mx[~np.isfinite(mx)] = 0.0
    E = np.exp(A - mx)
    with np.errstate(divide="ignore"):
        out = np.log(E.sum(axis=axis, keepdims=True))
    out += mx
    return out.squeeze(axis=axis)


def _sinkhorn(logK, rows, cols, tol, max_sweeps, lb=None):
    """Entropic coupling with the given marginals.

    Returns ``(logX, converged, sweeps, lb)``; pass ``lb`` back in to warm
    start a nearby problem.
    """
    lr, lc = np.log(rows), np.log(cols)
    lb = np.zeros(cols.size) if lb is None or lb.size != cols.size else lb
    rs = _lse(logK + lb[None, :], axis=1)
    converged, sweep = False, 0
    while sweep < max_sweeps:
        sweep += 1
        la = lr - rs
        lb = lc - _lse(logK + la[:, None], axis=0)
        # row sums after the column update; also the next row scaling
        rs = _lse(logK + lb[None, :], axis=1)
        if np.max(np.abs(np.expm1(la + rs - lr))) < tol:
            converged = True
            break
    return logK + la[:, None] + lb[None, :], converged, sweep, lb


def _relaxed_value(logX, logK, rows, parts: _Parts, q: float) -> float:
    X = np.exp(logX)
    live = X > 0
    val = float(rows @ np.log(rows)) - float((X[live] * logX[live]).sum()) + float((X[live] * logK[live]).sum())
    if parts.outside:
        val += parts.outside * math.log(q)
    return parts.log_const + val


def _columns(parts: _Parts, total_slots: int):
    cols_j = np.concatenate([[0], parts.freqs])
    cols_phi = np.concatenate([[total_slots - parts.distinct], parts.counts]).astype(float)
    return cols_j, cols_phi


def _log_kernel(values, cols_j):
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = np.log(values)
        logK = cols_j[None, :] * lv[:, None]
    logK[:, cols_j == 0] = 0.0
    return logK


def _surrogate_parts(values, mults, parts: _Parts, q: float, method: str, opts: SolverOptions):
    keep = mults > 0
    values, mults = values[keep], mults[keep]
    total = int(mults.sum())
    if total < parts.slots:
        values = np.append(values, 0.0)
        mults = np.append(mults, parts.slots - total)
        total = parts.slots
    if total != parts.slots:
        raise ValueError(f"distribution covers {total} symbols but the profile constrains {parts.slots}")
    if parts.distinct > int(mults[values > 0].sum()):
        return -np.inf, {"method": "infeasible"}
    if parts.outside and q <= 0:
        return -np.inf, {"method": "infeasible"}
    outside = parts.outside * math.log(q) if parts.outside else 0.0
    if parts.distinct == 0:
        return parts.log_const + outside, {"method": "closed_form"}
    if method == "auto" and values.size == 1:
        m, p = int(mults[0]), values[0]
        val = (gammaln(m + 1) - gammaln(m - parts.distinct + 1) - gammaln(parts.counts + 1).sum()
               + parts.n_inside * math.log(p))
        return parts.log_const + outside + float(val), {"method": "closed_form"}
    if method == "exact" or (method == "auto" and _dp_affordable(parts, mults, opts)):
        return parts.log_const + outside + _dp_log_sum(values.tolist(), mults.tolist(), parts), {"method": "dp"}
    cols_j, cols_phi = _columns(parts, total)
    # zero-probability rows can only fill the frequency-0 column and add
    # exactly nothing; dropping them keeps the scaling problem well posed
    pos = values > 0
    cols_phi[0] -= float(mults[~pos].sum())
    live_cols = cols_phi > 0.5
    values, rows = values[pos], mults[pos].astype(float)
    logK = _log_kernel(values, cols_j)[:, live_cols]
    logX, ok, sweeps, _ = _sinkhorn(logK, rows, cols_phi[live_cols],
                                    opts.sinkhorn_tol, opts.sinkhorn_max_sweeps)
    if not ok:
        log.debug("Sinkhorn scaling did not converge in %d sweeps", sweeps)
    val = _relaxed_value(logX, logK, rows, parts, q)
    return val, {"method": "sinkhorn", "converged": ok, "sweeps": sweeps}


def surrogate_log_likelihood(p: DiscreteDistribution, phi: Profile | PseudoProfile,
                             method: str = "auto", opts: SolverOptions | None = None) -> float:
    """Tractable log of the (pseudo-)profile probability.

    ``method="auto"`` is exact (closed form or DP over levels) when the DP
    state space is small and otherwise uses the matrix-scaling relaxation.
    For a pseudo profile the levels of ``p`` describe the subset only.
    """
    opts = opts or SolverOptions()
    parts = _parts(phi, p.domain_size)
    return _surrogate_parts(p.values, p.multiplicities, parts, p.outside_mass, method, opts)[0]


# -- relaxed solver ----------------------------------------------------------

def _grid(parts: _Parts, N: int, opts: SolverOptions) -> np.ndarray:
    floor = opts.min_prob if opts.min_prob else 1.0 / (max(parts.n, 1) * N)
    ratio = 1.0 + opts.delta
    count = int(math.floor(math.log(1.0 / floor) / math.log(ratio))) + 1
    levels = ratio ** -np.arange(count)
    levels = levels[levels >= floor * (1 - 1e-12)]
    if opts.min_prob and levels[-1] > floor:
        levels = np.append(levels, floor)
    return np.concatenate([[0.0], levels])


def _solve_lambda(h, lam0, positive):
    """Root of the decreasing function ``h`` (bracketed by outward doubling)."""
    lo = hi = lam0
    step = max(abs(lam0), 1.0)
    h_lo = h_hi = h(lam0)
    if h_lo == 0:
        return lam0
    for _ in range(200):
        if h_hi > 0:
            lo, h_lo = hi, h_hi
            hi = hi + step
            h_hi = h(hi)
        elif h_lo < 0:
            hi, h_hi = lo, h_lo
            lo = lo / 2 if positive else lo - step
            h_lo = h(lo)
        else:
            break
        step *= 2
    if not (h_lo >= 0 >= h_hi):
        raise InfeasibleError("cannot balance probability mass on the level grid")
    return brentq(h, lo, hi, xtol=1e-12 * max(1.0, abs(hi)), rtol=1e-14)


def _relaxed_em(grid, parts: _Parts, opts: SolverOptions, init_m: np.ndarray):
    """EM-style block ascent on the relaxed likelihood over a fixed level grid.

    Alternates (i) the coupling of frequency buckets to levels, which for
    fixed multiplicities is a per-column normalisation plus one mass
    multiplier, and (ii) multiplicities as coupling row sums. Each round
    can only increase the relaxed objective.
    """
    cols_j, cols_phi = _columns(parts, parts.slots)
    live = cols_phi > 0
    cols_j, cols_phi = cols_j[live], cols_phi[live]
    logK = _log_kernel(grid, cols_j)
    r = parts.outside
    pinned = opts.pin_s_mass or r == 0
    q_fixed = r / parts.n if parts.n else 1.0
    target_inside = 1.0 - q_fixed

    m = init_m.copy()
    lam = float(max(parts.n, 1))
    trace = []
    obj_prev = -np.inf
    rounds = 0
    for rounds in range(1, opts.max_rounds + 1):
        with np.errstate(divide="ignore"):
            base = np.log(m)[:, None] + logK

        def coupling(lam):
            A = base - lam * grid[:, None]
            return A - _lse(A, axis=0)[None, :]

        def h(lam):
            mass = float(grid @ (np.exp(coupling(lam)) @ cols_phi))
            return mass - (target_inside if pinned else 1.0 - r / lam)

        lam = _solve_lambda(h, lam, positive=not pinned)
        logW = coupling(lam)
        logX = logW + np.log(cols_phi)[None, :]
        m = np.exp(_lse(logX, axis=1))
        q = q_fixed if pinned else r / lam
        rows = m[m > 0]
        obj = _relaxed_value(logX[m > 0], logK[m > 0], rows, parts, q)
        trace.append(obj)
        if obj - obj_prev < opts.tol * max(1.0, abs(obj)):
            break
        obj_prev = obj
    return m, (q_fixed if pinned else r / lam), trace, rounds


def _dual_warm_start(grid, parts: _Parts, opts: SolverOptions, t_max=1e10):
    """Multiplicities from a log-barrier Newton solve of the relaxation's dual.

    The dual has one variable per frequency bucket plus the mass multiplier
    and one constraint ``logsumexp_j(j log p_v - mu_j) - lam p_v <= 0`` per
    level; the barrier's multiplier estimates are the level multiplicities.
    """
    cols_j, cols_phi = _columns(parts, parts.slots)
    live = cols_phi > 0
    cols_j, cols_phi = cols_j[live], cols_phi[live]
    logK = _log_kernel(grid, cols_j)
    usable = np.isfinite(logK).any(axis=1)
    G, logK = grid[usable], logK[usable]
    r = parts.outside
    pinned = opts.pin_s_mass or r == 0
    M = 1.0 - r / parts.n if pinned else 1.0
    J = cols_j.size

    def parts_at(y):
        A = logK - y[:J][None, :]
        lse = _lse(A, axis=1)
        g = lse - y[J] * G
        W = np.exp(A - lse[:, None])
        return g, W

    def f0(y):
        val = float(cols_phi @ y[:J] + y[J] * M)
        if not pinned:
            val += r * math.log(r / y[J]) - r
        return val

    y = np.empty(J + 1)
    y[J] = float(parts.n)
    y[:J] = np.max(np.where(np.isfinite(logK), logK, -np.inf), axis=0) + math.log(J) + 1.0

    def phi_t(y, t):
        if not pinned and y[J] <= 0:
            return np.inf
        g = _lse(logK - y[:J][None, :], axis=1) - y[J] * G
        if np.any(g >= 0):
            return np.inf
        return t * f0(y) - float(np.sum(np.log(-g)))

    t = 1.0 / max(parts.n, 1)
    a_prev = 1.0
    while True:
        for _ in range(100):
            g, W = parts_at(y)
            inv = 1.0 / (-g)
            grad0 = np.concatenate([cols_phi, [M - (r / y[J] if not pinned else 0.0)]])
            dg = np.concatenate([-W, -G[:, None]], axis=1)          # d g_v / d y
            grad = t * grad0 + dg.T @ inv
            H = (dg * (inv ** 2)[:, None]).T @ dg
            Hmu = (W * inv[:, None]).T @ W
            H[:J, :J] += np.diag(W.T @ inv) - Hmu
            if not pinned:
                H[J, J] += t * r / y[J] ** 2
            H[np.diag_indices_from(H)] += 1e-12 * (1.0 + np.abs(np.diag(H)))
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -grad
            dec = float(-grad @ step)
            if dec / 2 < 1e-10:
                break
            cur = phi_t(y, t)
            a = min(1.0, 4.0 * a_prev)
            while a > 1e-12:
                trial = y + a * step
                val = phi_t(trial, t)
                if val <= cur - 0.25 * a * dec:
                    break
                a *= 0.5
            else:
                break
            y, a_prev = trial, a
        if G.size / t < 1e-9 * max(1.0, abs(f0(y))) or t >= t_max:
            break
        t *= 20.0
    g, _ = parts_at(y)
    m = np.zeros(grid.size)
    m[usable] = 1.0 / (t * (-g))
    m *= parts.slots / m.sum()
    return m, float(y[J])


def _initial_multiplicities(grid, parts: _Parts):
    emp = np.zeros(grid.size)
    logg = np.log(grid[1:])
    for j, c in zip(parts.freqs, parts.counts):
        k = int(np.argmin(np.abs(logg - math.log(j / parts.n)))) + 1
        emp[k] += c
    emp[0] += parts.slots - parts.distinct
    return 0.9 * emp + 0.1 * parts.slots / grid.size


def _round_levels(grid, m, parts: _Parts, mass_inside: float, opts: SolverOptions):
    """Turn a continuous level histogram into integer multiplicities.

    Positive levels are laid out in decreasing order over unit-width symbol
    slots; each slot takes the average value over its width, so total mass
    is preserved. Adjacent slots within one grid ratio are then merged.
    """
    zero = float(m[0])
    pos_vals, pos_m = grid[1:], m[1:]
    z = int(round(zero))
    positive = max(parts.distinct, parts.slots - z, 1 if mass_inside > 0 else 0)
    positive = min(positive, parts.slots)
    if positive == 0 or mass_inside <= 0:
        return np.array([0.0]), np.array([parts.slots])
    keep = pos_m > 1e-300
    pv, pm = pos_vals[keep], pos_m[keep]
    pm = pm * positive / pm.sum()
    edges = np.concatenate([[0.0], np.cumsum(pm)])
    cum_mass = np.concatenate([[0.0], np.cumsum(pm * pv)])
    slots = np.arange(positive + 1, dtype=float)
    slots[-1] = edges[-1]
    idx = np.clip(np.searchsorted(edges, slots, side="right") - 1, 0, pv.size - 1)
    at = cum_mass[idx] + (slots - edges[idx]) * pv[idx]
    at[0], at[-1] = 0.0, cum_mass[-1]
    vals = np.diff(at)
    vals = _project_mass(vals, np.ones(vals.size), mass_inside, opts.min_prob or 0.0)

    out_v, out_m = [], []
    start = 0
    ratio = 1.0 + opts.delta
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[start] > vals[i] * ratio:
            seg = vals[start:i]
            out_v.append(float(seg.mean()))
            out_m.append(i - start)
            start = i
    out_v, out_m = np.array(out_v), np.array(out_m)
    if parts.slots - positive:
        out_v = np.append(out_v, 0.0)
        out_m = np.append(out_m, parts.slots - positive)
    out_v[out_v > 0] = _project_mass(out_v[out_v > 0], out_m[out_v > 0], mass_inside, opts.min_prob or 0.0)
    return out_v, out_m


def _project_mass(vals, mults, mass, lb):
    """Scale values so ``sum(m * v) == mass`` while keeping each ``v >= lb``."""
    vals = np.asarray(vals, dtype=float)
    if lb <= 0:
        return vals * (mass / float(vals @ mults))
    if lb * mults.sum() > mass * (1 + 1e-12):
        raise InfeasibleError("minimum probability constraint cannot hold")

    def excess(c):
        return float(np.maximum(lb, c * vals) @ mults) - mass

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
    c = brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-15) if excess(0.0) < 0 else 0.0
    out = np.maximum(lb, c * vals)
    return out * (mass / float(out @ mults))


def _polish(values, mults, parts: _Parts, q, opts: SolverOptions):
    """Alternate Sinkhorn couplings and closed-form level updates."""
    pos = values > 0
    cols_j, cols_phi = _columns(parts, int(mults.sum()))
    v = values[pos].copy()
    mm = mults[pos].astype(float)
    # zero-probability symbols can only sit in the frequency-0 bucket and add
    # nothing to the relaxed objective
    cols_phi[0] -= float(mults[~pos].sum())
    keep_cols = cols_phi > 0.5
    cols_j, cols_phi = cols_j[keep_cols], cols_phi[keep_cols]
    lb = opts.min_prob or 0.0
    mass_inside = 1.0 - q
    trace = []
    prev = -np.inf
    pot = None
    for _ in range(opts.polish_rounds):
        logK = _log_kernel(v, cols_j)
        logX, _, _, pot = _sinkhorn(logK, mm, cols_phi, opts.sinkhorn_tol, opts.sinkhorn_max_sweeps, pot)
        obj = _relaxed_value(logX, logK, mm, parts, q)
        trace.append(obj)
        if obj - prev < opts.tol * max(1.0, abs(obj)):
            break
        prev = obj
        weighted = np.exp(logX) @ cols_j
        new = np.maximum(weighted / mm, 1e-300)
        v = _project_mass(new, mm, mass_inside, lb)
    out_v = np.concatenate([v, values[~pos]])
    out_m = np.concatenate([mults[pos], mults[~pos]])
    order = np.argsort(-out_v, kind="stable")
    return out_v[order], out_m[order], trace


# -- oracle-scale exact solver -----------------------------------------------

def _exact_em(kern: _AssignmentKernel, p, q, max_iter=2000, tol=1e-13):
    parts = kern.parts
    ll = kern.log_likelihood(p, q)
    for _ in range(max_iter):
        t = kern.terms(p)
        s = t.sum()
        if s <= 0:
            break
        ef = (t @ kern.F) / s
        p_new = ef / parts.n
        ll_new = kern.log_likelihood(p_new, q)
        if ll_new < ll + tol * max(1.0, abs(ll)):
            if ll_new > ll:
                p, ll = p_new, ll_new
            break
        p, ll = p_new, ll_new
    return p, ll


def _pairwise_polish(kern: _AssignmentKernel, p, q, sweeps=30):
    p = p.copy()
    ll = kern.log_likelihood(p, q)
    k = p.size
    for _ in range(sweeps):
        start = ll
        for a in range(k):
            for b in range(a + 1, k):
                s = p[a] + p[b]
                if s <= 0:
                    continue

                def neg(t):
                    trial = p.copy()
                    trial[a], trial[b] = t, s - t
                    return -kern.log_likelihood(trial, q)

                cands = [(neg(0.0), 0.0), (neg(s), s)]
                res = minimize_scalar(neg, bounds=(0.0, s), method="bounded",
                                      options={"xatol": 1e-12 * s})
                cands.append((res.fun, float(res.x)))
                fval, t = min(cands)
                if -fval > ll:
                    p[a], p[b] = t, s - t
                    ll = -fval
        if ll - start <= 1e-13 * max(1.0, abs(ll)):
            break
    return p, ll


def _exact_solve(parts: _Parts, q, relaxed_vals, relaxed_mults):
    kern = _AssignmentKernel(parts)
    inside = 1.0 - q
    k = parts.slots
    emp = np.zeros(k)
    observed = np.repeat(parts.freqs, parts.counts)[::-1] / parts.n
    emp[: observed.size] = observed
    starts = [emp]
    relaxed = np.repeat(relaxed_vals, relaxed_mults)[:k]
    if relaxed.sum() > 0:
        starts.append(np.sort(relaxed)[::-1] * inside / relaxed.sum())
    for support in range(max(parts.distinct, 1), k + 1):
        uni = np.zeros(k)
        uni[:support] = inside / support
        starts.append(uni)
        starts.append(0.5 * uni + 0.5 * emp)
    scored = []
    for s in starts:
        p, ll = _exact_em(kern, s, q)
        scored.append((ll, p))
    scored.sort(key=lambda t: -t[0])
    best_ll, best_p = -np.inf, None
    for ll, p in scored[:3]:
        p2, ll2 = _pairwise_polish(kern, p, q)
        if ll2 > best_ll:
            best_ll, best_p = ll2, p2
    best_cand = max(best_ll, max(ll for ll, _ in scored))
    return np.sort(best_p)[::-1], best_ll, best_cand, len(starts)


def _levels_from_slots(p, tol=1e-9):
    vals, mults = [], []
    for x in p:
        if vals and abs(vals[-1] - x) <= tol * max(vals[-1], 1e-300):
            mults[-1] += 1
        else:
            vals.append(float(x))
            mults.append(1)
    return np.array(vals), np.array(mults)


# -- public solver entry points ---------------------------------------------

def _domain_for(phi, opts: SolverOptions, domain_size):
    N = domain_size or opts.domain_size
    if N is None:
        if isinstance(phi, PseudoProfile):
            return max(max(phi.subset, default=-1) + 1, phi.subset_size, 1)
        raise ValueError("domain size required (opts.domain_size)")
    return int(N)


def approximate_pml(phi: Profile | PseudoProfile, opts: SolverOptions | None = None,
                    domain_size: int | None = None) -> PmlResult:
    """Approximate (pseudo-)PML distribution for ``phi``.

    Deterministic for fixed inputs. The returned ``log_likelihood`` is
    :func:`surrogate_log_likelihood` of the returned distribution.
    """
    opts = opts or SolverOptions()
    N = _domain_for(phi, opts, domain_size)
    slots = N if isinstance(phi, Profile) else None
    parts = _parts(phi, slots)
    if isinstance(phi, PseudoProfile) and phi.subset_size > N:
        raise ValueError("subset larger than the domain")
    if parts.distinct > parts.slots:
        raise InfeasibleError(f"{parts.distinct} distinct symbols cannot fit in {parts.slots} slots")
    return _solve(parts, N, opts)


def _solve(parts: _Parts, N: int, opts: SolverOptions) -> PmlResult:
    q_emp = parts.outside / parts.n if parts.n else (0.0 if parts.slots == N else 1.0)
    if parts.slots == 0:
        dist = DiscreteDistribution(np.zeros(0), np.zeros(0, dtype=np.int64), N, outside_mass=1.0)
        return PmlResult(dist, parts.log_const, None, {"method": "empty_subset", "rounds": 0})
    if parts.n == 0:
        k = parts.slots
        outside = 0.0 if k == N else 1.0 - k / N
        dist = DiscreteDistribution(np.array([1.0 / N]), np.array([k]), N, outside_mass=outside)
        return PmlResult(dist, 0.0, None, {"method": "empty_profile", "rounds": 0})
    if parts.n_inside == 0:
        dist = DiscreteDistribution(np.array([0.0]), np.array([parts.slots]), N, outside_mass=1.0)
        return PmlResult(dist, parts.log_const, None, {"method": "no_subset_samples", "rounds": 0})

    grid = _grid(parts, N, opts)
    try:
        init, _ = _dual_warm_start(grid, parts, opts)
        init = np.maximum(init, 1e-12 * parts.slots / grid.size)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError):
        log.warning("dual warm start failed; starting from the empirical histogram")
        init = _initial_multiplicities(grid, parts)
    m, q, trace, rounds = _relaxed_em(grid, parts, opts, init)
    if opts.min_prob:
        q = q_emp if opts.pin_s_mass else q
    stats = {"grid_size": int(grid.size), "rounds": rounds, "trace": trace,
             "relaxed_log_likelihood": trace[-1] if trace else None}
    vals, mults = _round_levels(grid, m, parts, 1.0 - q, opts)
    vals, mults, ptrace = _polish(vals, mults, parts, q, opts)
    stats["polish_trace"] = ptrace
    beta = None

    if not opts.min_prob and _assignment_count(parts) <= opts.exact_max_assignments:
        q_exact = q_emp
        p_slots, ll, best_cand, n_starts = _exact_solve(parts, q_exact, vals, mults)
        vals, mults = _levels_from_slots(p_slots)
        q = q_exact
        beta = math.exp(ll - best_cand)
        stats.update(method="exact_multistart", starts=n_starts)
    else:
        stats["method"] = "relaxed_grid"

    keep = mults > 0
    vals, mults = vals[keep], mults[keep]
    vals[vals > 0] = _project_mass(vals[vals > 0], mults[vals > 0], 1.0 - q, opts.min_prob or 0.0)
    dist = DiscreteDistribution(vals, mults, N, outside_mass=q if parts.outside else 0.0)
    ll, sstats = _surrogate_parts(dist.values, dist.multiplicities, parts, dist.outside_mass, "auto", opts)
    stats["surrogate"] = sstats
    return PmlResult(dist, float(min(ll, 0.0)), beta, stats)


def constrained_pml_support(phi: Profile, k: int, opts: SolverOptions | None = None) -> PmlResult:
    """PML over distributions whose non-zero probabilities are all at least ``1/k``.

    At most ``k`` symbols can carry such probabilities, so the domain is
    taken to be ``k`` symbols. The support of the result is the plug-in
    support estimate.
    """
    D = distinct_count(phi)
    if k < D:
        raise InfeasibleError(f"k={k} is below the {D} distinct observed symbols")
    opts = replace(opts or SolverOptions(), min_prob=1.0 / k, domain_size=k)
    if phi.length == 0:
        dist = DiscreteDistribution(np.array([1.0 / k]), np.array([k]), k)
        return PmlResult(dist, 0.0, None, {"method": "empty_profile"})
    parts = _parts(phi, k)
    return _solve(parts, k, opts)


def assign_levels(dist: DiscreteDistribution, hist2: Histogram, S) -> DiscreteDistribution:
    """Pin subset symbols to levels by monotone matching.

    Symbols of ``S`` sorted by count (descending, ties by symbol id) receive
    level values sorted in descending order.
    """
    S = sorted(S, key=lambda x: (-hist2.count(x), x))
    order = np.argsort(-dist.values, kind="stable")
    slots = np.repeat(order, dist.multiplicities[order])
    if len(S) != slots.size:
        raise ValueError("subset size does not match the distribution's multiplicities")
    return replace(dist, assignment=dict(zip(S, slots.tolist())))
