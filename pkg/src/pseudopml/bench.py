"""Synthetic distributions, seeded sampling and the multi-trial benchmark.

Random numbers come from numpy's PCG64 generator (``default_rng(seed)``);
each trial uses its own generator seeded with ``seed_base + trial``.
Sampling is inverse-CDF on the cumulative probability vector.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .estimators import Property, empirical_with_bias, plugin_property
from .framework import (PER_SYMBOL_POLY, PSEUDO_PML, FrameworkConfig, emp_frac, estimate, halves)
from .pml import DiscreteDistribution, SolverOptions, approximate_pml
from .profiles import FrequencySet, SampleSequence, profile_of

log = logging.getLogger(__name__)

KINDS = ("uniform", "mix_two_uniforms", "zipf")
ESTIMATORS = (PSEUDO_PML, "mle_corrected", PER_SYMBOL_POLY, "pml_plugin")
CSV_HEADER = ("estimator", "dist", "N", "alpha", "n", "trials", "rmse", "mean_error",
              "emp_frac", "seconds_per_trial", "seed_base")


@dataclass(frozen=True)
class SyntheticDist:
    kind: str
    N: int
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution {self.kind!r}; expected one of {KINDS}")
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.kind == "mix_two_uniforms" and self.N < 10:
            raise ValueError("mix_two_uniforms needs N >= 10")
        if self.kind == "zipf" and not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    @property
    def label(self) -> str:
        return f"zipf{self.alpha:g}" if self.kind == "zipf" else self.kind


def probability_vector(spec: SyntheticDist) -> np.ndarray:
    N = spec.N
    if spec.kind == "uniform":
        return np.full(N, 1.0 / N)
    if spec.kind == "mix_two_uniforms":
        head = N // 10
        p = np.empty(N)
        p[:head] = 0.5 / head
        p[head:] = 0.5 / (N - head)
        return p
    w = np.arange(1, N + 1, dtype=float) ** -spec.alpha
    return w / w.sum()


def make_distribution(spec: SyntheticDist) -> DiscreteDistribution:
    """Explicit distribution with each symbol pinned to its level."""
    return DiscreteDistribution.from_probs(probability_vector(spec), spec.N)


def sample(dist: DiscreteDistribution | np.ndarray, n: int, seed: int) -> SampleSequence:
    """``n`` i.i.d. draws by inverse CDF with a PCG64 stream seeded by ``seed``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = dist.probs() if isinstance(dist, DiscreteDistribution) else np.asarray(dist, dtype=float)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(p)
    u = rng.random(n) * cdf[-1]
    x = np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)
    return SampleSequence(x, p.size)


@dataclass
class TrialReport:
    estimator: str
    dist: SyntheticDist
    n: int
    trials: int
    rmse: float
    mean_error: float
    emp_frac: float
    emp_frac_std: float
    seconds_per_trial: float
    seed_base: int
    failures: int = 0
    estimates: list = field(default_factory=list)

    def row(self, timing: bool = False) -> list:
        return [self.estimator, self.dist.label, self.dist.N,
                f"{self.dist.alpha:g}" if self.dist.kind == "zipf" else "",
                self.n, self.trials, _fmt(self.rmse), _fmt(self.mean_error), _fmt(self.emp_frac),
                _fmt(self.seconds_per_trial) if timing else "", self.seed_base]


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.10g}"


@dataclass(frozen=True)
class BenchSpec:
    """What to run: every estimator on every distribution at every sample size.

    ``n`` counts all samples of one trial. With ``split='halves'`` each
    half gets ``n/2``.
    """

    estimators: Sequence[str] = (PSEUDO_PML, "mle_corrected")
    dists: Sequence[SyntheticDist] = (SyntheticDist("zipf", 10**4, 1.0),)
    sizes: Sequence[int] = (1000,)
    trials: int = 50
    seed_base: int = 0
    property: str = "entropy"
    threshold: int = 18
    split: str = "none"
    correction: str = "per_symbol_half"
    solver_opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValueError(f"unknown estimators {bad}; expected some of {ESTIMATORS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


def run_estimator(name: str, x: SampleSequence, prop: Property, spec: BenchSpec) -> tuple[float, float]:
    """One estimate and its EmpFrac."""
    F = FrequencySet.interval(0, spec.threshold)
    if name == "mle_corrected":
        h1, h2 = halves(x, spec.split)
        return empirical_with_bias(h2, prop, None, spec.correction), 1.0
    if name == "pml_plugin":
        h1, h2 = halves(x, spec.split)
        res = approximate_pml(profile_of(h2), spec.solver_opts, domain_size=x.domain_size)
        return prop.clamp(plugin_property(res.distribution, prop)), 0.0
    cfg = FrameworkConfig(prop, F, spec.solver_opts, correction=spec.correction,
                          bad_set_method=name, split=spec.split)
    est = estimate(x, cfg)
    return est.value, est.diagnostics["emp_frac"]


def run_benchmark(spec: BenchSpec, keep_estimates: bool = False) -> list[TrialReport]:
    """Run every (estimator, distribution, n) cell for ``spec.trials`` trials.

    Truth is the exact property of the distribution. Trials failing with
    an exception are logged and counted in ``failures``; the statistics
    cover the successful trials only.
    """
    reports = []
    for d in spec.dists:
        p = probability_vector(d)
        prop = Property(spec.property, N=d.N) if spec.property != "support" else Property.support(d.N, d.N)
        truth = float(prop.g(p).sum())
        for n in spec.sizes:
            samples = [sample(p, n, spec.seed_base + t) for t in range(spec.trials)]
            for name in spec.estimators:
                errs, fracs, vals = [], [], []
                failures = 0
                t0 = time.perf_counter()
                for t, x in enumerate(samples):
                    try:
                        value, frac = run_estimator(name, x, prop, spec)
                    except Exception as exc:  # recorded, not fatal
                        log.warning("trial %d of %s on %s n=%d failed: %s", t, name, d.label, n, exc)
                        failures += 1
                        continue
                    vals.append(value)
                    errs.append(value - truth)
                    fracs.append(frac)
                elapsed = (time.perf_counter() - t0) / spec.trials
                e = np.asarray(errs)
                reports.append(TrialReport(
                    name, d, n, spec.trials,
                    float(np.sqrt(np.mean(e ** 2))) if e.size else math.nan,
                    float(np.mean(e)) if e.size else math.nan,
                    float(np.mean(fracs)) if fracs else math.nan,
                    float(np.std(fracs)) if fracs else math.nan,
                    elapsed, spec.seed_base, failures, vals if keep_estimates else []))
    return reports


def write_csv(reports: Iterable[TrialReport], fh=None, timing: bool = False) -> str:
    """Long-format CSV; ``seconds_per_trial`` stays empty unless ``timing``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.row(timing))
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


@dataclass
class EmpFracRow:
    n: int
    mean: float
    std: float
    trials: int


def empfrac_table(spec: SyntheticDist, sizes: Sequence[int], threshold: int = 18,
                  trials: int = 50, seed_base: int = 0, split: str = "none") -> list[EmpFracRow]:
    """Mean and spread of EmpFrac for ``F = [0, threshold]`` over seeded trials."""
    p = probability_vector(spec)
    F = FrequencySet.interval(0, threshold)
    rows = []
    for n in sizes:
        fr = []
        for t in range(trials):
            h1, h2 = halves(sample(p, int(n), seed_base + t), split)
            fr.append(emp_frac(h1, h2, F))
        rows.append(EmpFracRow(int(n), float(np.mean(fr)), float(np.std(fr)), trials))
    return rows
