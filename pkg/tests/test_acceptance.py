"""Acceptance checks, one per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
and then asserts. Run ``python tests/test_acceptance.py`` for just the
summary lines, or ``pytest -s tests/test_acceptance.py`` to see them under
pytest.
"""

from __future__ import annotations

import itertools
import math
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from oracles import binomial_expectation, brute_profile_distribution, falling, profiles_of_length  # noqa: E402
from pseudopml.bench import (BenchSpec, SyntheticDist, empfrac_table, probability_vector,  # noqa: E402
                             run_benchmark, sample)
from pseudopml.estimators import (Property, per_symbol_sum, plugin_property, poly_for,  # noqa: E402
                                  sensitivity_bound)
from pseudopml.framework import support_estimate  # noqa: E402
from pseudopml.pml import (DiscreteDistribution, SolverOptions, _grid, _parts, approximate_pml,  # noqa: E402
                           profile_probabilities_batch, profile_probability_exact,
                           pseudo_profile_probability_exact)
from pseudopml.polyapprox import (NEG_X_LOG_X, PolyConfig, best_uniform_approx,  # noqa: E402
                                  equioscillation_count, falling_ratio)
from pseudopml.profiles import (Histogram, Profile, PseudoProfile, SampleSequence,  # noqa: E402
                                build_histogram, split_samples)


def report(cid: int, name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {cid:2d} ({name}): {detail}", flush=True)


# -- 1 -------------------------------------------------------------------------

EMPFRAC_TABLE = {10**3: 0.184, 10**4: 0.372, 10**5: 0.562, 10**6: 0.752}
EMPFRAC_TOL = 0.05


def test_criterion_01_empfrac():
    t0 = time.perf_counter()
    rows = empfrac_table(SyntheticDist("zipf", 10**5, 1.0), sorted(EMPFRAC_TABLE), threshold=18,
                         trials=50, seed_base=0, split="none")
    secs = time.perf_counter() - t0
    errs = {r.n: r.mean - EMPFRAC_TABLE[r.n] for r in rows}
    ok = all(abs(e) <= EMPFRAC_TOL for e in errs.values()) and secs < 120
    report(1, "EmpFrac", ok, ", ".join(f"n={r.n}: {r.mean:.3f} (table {EMPFRAC_TABLE[r.n]})" for r in rows)
           + f"; {secs:.1f}s")
    assert ok


# -- 2 -------------------------------------------------------------------------

def _grid_distributions(N: int, q: int = 4):
    """All probability vectors on N symbols with entries in multiples of 1/q."""
    for cut in itertools.combinations(range(q + N - 1), N - 1):
        parts = np.diff((-1,) + cut + (q + N - 1,)) - 1
        yield parts / q


def test_criterion_02_exact_oracle():
    t0 = time.perf_counter()
    worst_sum = worst_pseudo = worst_brute = 0.0
    checked = 0
    for N in range(1, 5):
        for probs in _grid_distributions(N):
            d = DiscreteDistribution.from_probs(probs, N)
            for n in range(1, 7):
                brute = brute_profile_distribution(probs.tolist(), n)
                total = 0.0
                for phi in profiles_of_length(n):
                    prof = Profile(phi, n)
                    pr = profile_probability_exact(d, prof)
                    if sum(phi.values()) <= N:
                        ps = pseudo_profile_probability_exact(d, PseudoProfile(frozenset(range(N)), phi, n))
                    else:  # more distinct symbols than the domain holds
                        ps = 0.0
                    worst_pseudo = max(worst_pseudo, abs(ps - pr))
                    worst_brute = max(worst_brute, abs(pr - brute.get(tuple(sorted(phi.items())), 0.0)))
                    total += pr
                worst_sum = max(worst_sum, abs(total - 1.0))
                checked += 1
    secs = time.perf_counter() - t0
    ok = worst_sum <= 1e-10 and worst_pseudo <= 1e-12 and worst_brute <= 1e-12 and secs < 30
    report(2, "exact oracle", ok, f"{checked} (distribution, n) pairs; max |sum-1|={worst_sum:.1e}, "
           f"max |pseudo-full|={worst_pseudo:.1e}, max |exact-bruteforce|={worst_brute:.1e}; {secs:.1f}s")
    assert ok


# -- 3 -------------------------------------------------------------------------

SEARCH_DELTA = 0.25
QUALITY_N = 6


def _grid_search_optimum(phi: Profile, N: int, levels: np.ndarray) -> float:
    """Best exact profile probability over normalised multisets of grid levels.

    The top level is pinned at 1 (profile probability only sees the
    normalised vector), the other ``N - 1`` entries range over the grid
    including 0.
    """
    combos = np.array(list(itertools.combinations_with_replacement(levels, N - 1)))
    P = np.hstack([np.ones((combos.shape[0], 1)), combos])
    P /= P.sum(axis=1, keepdims=True)
    best = 0.0
    for s in range(0, P.shape[0], 4096):
        best = max(best, float(profile_probabilities_batch(P[s:s + 4096], phi).max()))
    return best


def test_criterion_03_solver_quality():
    t0 = time.perf_counter()
    opts = SolverOptions(delta=SEARCH_DELTA)
    worst, worst_case, count = math.inf, None, 0
    for n in range(1, 7):
        for phi_d in profiles_of_length(n):
            phi = Profile(phi_d, n)
            N = QUALITY_N
            grid = _grid(_parts(phi, N), N, opts)
            levels = grid[grid <= 1.0]
            opt = _grid_search_optimum(phi, N, levels)
            res = approximate_pml(phi, opts, domain_size=N)
            got = profile_probability_exact(res.distribution, phi)
            ratio = got / opt
            count += 1
            if ratio < worst:
                worst, worst_case = ratio, phi_d
    secs = time.perf_counter() - t0
    ok = worst >= 0.99 and secs < 120
    report(3, "PML quality", ok, f"{count} profiles at N={QUALITY_N}, grid delta={SEARCH_DELTA}; "
           f"worst solver/grid-optimum ratio {worst:.4f} at {worst_case}; {secs:.1f}s")
    assert ok


# -- 4 -------------------------------------------------------------------------

def support_test_distribution(k: int) -> np.ndarray:
    """Support k//2: half the support at 1.5/k, the rest sharing the remaining mass."""
    s = k // 2
    a = s // 2
    p = np.zeros(k)
    p[:a] = 1.5 / k
    p[a:s] = (1.0 - a * 1.5 / k) / (s - a)
    return p


def test_criterion_04_support_recovery():
    t0 = time.perf_counter()
    rates = {}
    for k in (10, 30, 100):
        p = support_test_distribution(k)
        assert p[p > 0].min() >= 1.0 / k and abs(p.sum() - 1) < 1e-12
        n = math.ceil(2 * k * math.log(k))
        truth = int(np.count_nonzero(p))
        hits = sum(support_estimate(sample(p, n, seed), k) == truth for seed in range(100))
        rates[k] = hits / 100
    secs = time.perf_counter() - t0
    ok = all(r >= 0.95 for r in rates.values()) and secs < 60
    report(4, "support recovery", ok, ", ".join(f"k={k}: {r:.2f}" for k, r in rates.items()) + f"; {secs:.1f}s")
    assert ok


# -- 5 -------------------------------------------------------------------------

def test_criterion_05_falling_unbiased():
    worst = 0.0
    exact_ok = True
    for p in (Fraction(1, 10), Fraction(3, 10), Fraction(7, 10)):
        for n in range(1, 13):
            for i in range(0, min(4, n) + 1):
                e = binomial_expectation(lambda k: float(falling_ratio(k, n, i)), n, float(p))
                worst = max(worst, abs(e - float(p) ** i))
                exact_ok &= binomial_expectation(lambda k: Fraction(falling(k, i), falling(n, i)), n, p) == p ** i
    ok = worst <= 1e-12 and exact_ok
    report(5, "falling-factorial unbiasedness", ok,
           f"max |E - p^i| = {worst:.1e} over i<=min(4,n), n<=12; rational check exact={exact_ok}")
    assert ok


# -- 6 -------------------------------------------------------------------------

def test_criterion_06_minimax():
    sq = best_uniform_approx(lambda x: np.asarray(x) ** 2, 1, (0.0, 1.0))
    ok_sq = abs(sq.sup_error - 0.125) <= 1e-6 and np.allclose(sq.coeffs, [-0.125, 1.0], atol=1e-6)
    counts = {}
    for L in range(1, 6):
        pa = best_uniform_approx(NEG_X_LOG_X, L, (0.0, 0.01))
        counts[L] = equioscillation_count(pa, NEG_X_LOG_X)
    ok_eq = all(c >= L + 2 for L, c in counts.items())
    ok = ok_sq and ok_eq
    report(6, "minimax approximation", ok,
           f"x^2: sup {sq.sup_error:.9f}, P(x) = {sq.coeffs[1]:.9f} x + {sq.coeffs[0]:.9f}; "
           f"-x log x alternation counts {counts}")
    assert ok


# -- 7 -------------------------------------------------------------------------

def test_criterion_07_plugins():
    worst = 0.0
    for N in (2, 10, 1000):
        u = DiscreteDistribution.uniform(N)
        point = DiscreteDistribution(np.array([1.0]), np.array([1]), N)
        worst = max(worst,
                    abs(plugin_property(u, Property.entropy(N)) - math.log(N)),
                    abs(plugin_property(u, Property.dtu(N))),
                    abs(plugin_property(point, Property.dtu(N)) - 2 * (1 - 1 / N)))
    ok = worst <= 1e-12
    report(7, "closed-form plug-ins", ok, f"max deviation {worst:.1e} over N in (2, 10, 1000)")
    assert ok


# -- 8 -------------------------------------------------------------------------

def test_criterion_08_rmse():
    t0 = time.perf_counter()
    spec = BenchSpec(estimators=("pseudo_pml", "mle_corrected"),
                     dists=(SyntheticDist("mix_two_uniforms", 10**4), SyntheticDist("zipf", 10**4, 1.0)),
                     sizes=(1000,), trials=50, seed_base=0, split="none")
    reports = run_benchmark(spec)
    secs = time.perf_counter() - t0
    table = {(r.estimator, r.dist.label): r for r in reports}
    ok = secs < 300 and all(r.failures == 0 for r in reports)
    parts = []
    for d in spec.dists:
        a, b = table["pseudo_pml", d.label], table["mle_corrected", d.label]
        ok &= a.rmse <= b.rmse
        parts.append(f"{d.label}: pseudo-PML {a.rmse:.3f} vs MLE {b.rmse:.3f}")
    report(8, "comparative RMSE", ok, "; ".join(parts) + f"; {secs:.1f}s")
    assert ok


# -- 9 -------------------------------------------------------------------------

SENS_N, SENS_DOMAIN, SENS_FLIPS = 10**4, 10**3, 200


def _flip(hist: Histogram, old: int, new: int) -> Histogram:
    c = dict(hist.counts)
    c[old] -= 1
    c[new] = c.get(new, 0) + 1
    return Histogram(c, hist.total, hist.domain_size)


def test_criterion_09_sensitivity():
    prop = Property.entropy(SENS_DOMAIN)
    cfg = PolyConfig.entropy(SENS_N, SENS_DOMAIN)
    pa = poly_for(prop, cfg)
    bound = sensitivity_bound(prop, cfg, SENS_N, pa)
    S = range(SENS_DOMAIN)
    rng = np.random.default_rng(2024)
    worst = 0.0
    flips = 0
    dists = [probability_vector(SyntheticDist(k, SENS_DOMAIN)) for k in ("zipf", "mix_two_uniforms", "uniform")]
    # a constructed instance with one symbol just below the second-half cut-off
    cut = math.ceil(cfg.c1 * math.log(SENS_DOMAIN))
    h1_edge = Histogram({0: SENS_N - 10, 1: 10}, SENS_N, SENS_DOMAIN)
    h2_edge = Histogram({0: SENS_N - cut + 1, 1: cut - 1}, SENS_N, SENS_DOMAIN)
    instances = []
    for t, p in enumerate(dists):
        a, b = split_samples(sample(p, 2 * SENS_N, 100 + t))
        instances.append((build_histogram(a), build_histogram(b), b.symbols))
    instances.append((h1_edge, h2_edge, np.repeat([0, 1], [SENS_N - cut + 1, cut - 1])))
    while flips < SENS_FLIPS:
        h1, h2, seq2 = instances[flips % len(instances)]
        base, _ = per_symbol_sum(h1, h2, S, prop, cfg, pa)
        old = int(seq2[rng.integers(seq2.size)])
        if h2 is h2_edge:
            old, new = 0, 1  # push symbol 1 across the cut-off
        elif rng.random() < 0.5:
            new = int(rng.integers(SENS_DOMAIN))
        else:
            # land on the symbol whose second-half count is closest to the cut-off
            syms = np.array(sorted(h2.counts))
            new = int(syms[np.argmin(np.abs(np.array([h2.count(s) for s in syms]) - (cut - 1)))])
        if new == old:
            new = (new + 1) % SENS_DOMAIN
        after, _ = per_symbol_sum(h1, _flip(h2, old, new), S, prop, cfg, pa)
        worst = max(worst, abs(after - base), abs(prop.clamp(after) - prop.clamp(base)))
        flips += 1
    ok = worst <= bound
    report(9, "sensitivity bound", ok, f"{flips} flips; max change {worst:.4g} vs bound {bound:.4g} "
           f"(degree {pa.degree}, interval [0, {pa.interval[1]:.4g}])")
    assert ok


# -- 10 ------------------------------------------------------------------------

def _cli(*args: str) -> bytes:
    return subprocess.run([sys.executable, "-m", "pseudopml.cli", *args], capture_output=True,
                          check=True).stdout


def test_criterion_10_determinism(tmp_path=None):
    import tempfile
    tmp = Path(tmp_path or tempfile.mkdtemp())
    samples = tmp / "x.txt"
    _cli("sample", "--dist", "mix_two_uniforms", "--N", "2000", "--n", "1000", "--seed", "9", "--out", str(samples))
    first = samples.read_bytes()
    _cli("sample", "--dist", "mix_two_uniforms", "--N", "2000", "--n", "1000", "--seed", "9", "--out", str(samples))
    runs = {
        "sample": (first, samples.read_bytes()),
        "estimate --json": tuple(_cli("estimate", "--input", str(samples), "--json") for _ in range(2)),
        "estimate dtu --json": tuple(_cli("estimate", "--input", str(samples), "--property", "dtu",
                                          "--no-split", "--json") for _ in range(2)),
        "bench": tuple(_cli("bench", "--N", "1000", "--dist", "zipf,mix_two_uniforms", "--sizes", "500",
                            "--trials", "3", "--seed-base", "5",
                            "--estimators", "pseudo_pml,mle_corrected,pml_plugin") for _ in range(2)),
        "empfrac": tuple(_cli("empfrac", "--N", "5000", "--sizes", "1e3,1e4", "--trials", "3") for _ in range(2)),
    }
    same = {k: a == b and len(a) > 0 for k, (a, b) in runs.items()}
    ok = all(same.values())
    report(10, "determinism", ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
        except Exception as exc:  # a crash is a failure, with the reason shown
            failed += 1
            print(f"FAIL {name}: {type(exc).__name__}: {exc}", flush=True)
    print(f"{10 - failed}/10 criteria passed")
    sys.exit(1 if failed else 0)
