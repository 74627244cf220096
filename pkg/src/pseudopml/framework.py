"""End-to-end property estimation: split, partition, pseudo-PML + empirical.

The domain is split by the first-half counts: symbols whose count falls in
the frequency set ``F`` form the "bad" set ``S`` and are estimated through a
pseudo-PML distribution of the second half restricted to ``S``; all other
symbols use the empirical estimate with a bias correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .estimators import (DTU, ENTROPY, SUPPORT, Estimate, Property, empirical_parts,
                         per_symbol_estimator, plugin_property)
from .pml import PmlResult, SolverOptions, approximate_pml, constrained_pml_support
from .polyapprox import PolyConfig
from .profiles import (FrequencySet, Histogram, SampleSequence, build_histogram,
                       partition_domain, profile_of, pseudo_profile, split_samples)

PAPER_EXPERIMENT = "paper_experiment"
PAPER_THEORY = "paper_theory"
PRESETS = (PAPER_EXPERIMENT, PAPER_THEORY)
EXPERIMENT_THRESHOLD = 18

PSEUDO_PML = "pseudo_pml"
PER_SYMBOL_POLY = "per_symbol_poly"

# c1 behind the theory-mode frequency sets
DEFAULT_C1 = {ENTROPY: 70.0, DTU: 71.0}


def default_frequency_set(prop: Property, n: int, N: int, preset: str = PAPER_EXPERIMENT,
                          c1: float | None = None, threshold: int = EXPERIMENT_THRESHOLD) -> FrequencySet:
    """Frequency set ``F`` for a property.

    ``paper_experiment`` uses ``[0, threshold]`` for every property.
    ``paper_theory`` uses ``[0, round(c1 ln n)]`` for entropy and the window
    ``n/N +- sqrt(c1 n ln n / N)`` (rounded, clamped to ``[0, n]``) for dtu.

    Examples
    --------
    >>> str(default_frequency_set(Property.dtu(1000), 10**4, 1000, "paper_theory", c1=40))
    '0-71'
    """
    if n < 1 or N < 1:
        raise ValueError("n and N must be positive")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    if preset == PAPER_EXPERIMENT:
        return FrequencySet.interval(0, threshold)
    if prop.kind == SUPPORT:
        return FrequencySet.interval(0, n)
    c1 = DEFAULT_C1[prop.kind] if c1 is None else c1
    if prop.kind == ENTROPY:
        return FrequencySet.interval(0, round(c1 * math.log(n)))
    centre = n / N
    radius = math.sqrt(c1 * n * math.log(n) / N)
    lo = max(0, round(centre - radius))
    hi = min(n, round(centre + radius))
    return FrequencySet.interval(lo, hi) if lo <= hi else FrequencySet.empty()


@dataclass(frozen=True)
class FrameworkConfig:
    """Knobs of one estimate.

    ``F="auto"`` resolves through :func:`default_frequency_set` with
    ``preset``/``threshold``/``c1``. ``poly_cfg=None`` builds the default
    :class:`PolyConfig` for the property at the realised ``n`` and ``N``.
    """

    property: Property
    F: FrequencySet | str = "auto"
    solver_opts: SolverOptions = field(default_factory=SolverOptions)
    poly_cfg: PolyConfig | None = None
    correction: str = "per_symbol_half"
    bad_set_method: str = PSEUDO_PML
    split: str = "halves"
    preset: str = PAPER_EXPERIMENT
    threshold: int = EXPERIMENT_THRESHOLD
    c1: float | None = None

    def __post_init__(self):
        if self.split not in ("halves", "none"):
            raise ValueError("split must be 'halves' or 'none'")
        if self.bad_set_method not in (PSEUDO_PML, PER_SYMBOL_POLY):
            raise ValueError(f"unknown bad_set_method {self.bad_set_method!r}")
        if isinstance(self.F, str) and self.F != "auto":
            object.__setattr__(self, "F", FrequencySet.parse(self.F))

    def resolve_F(self, n: int, N: int) -> FrequencySet:
        if isinstance(self.F, FrequencySet):
            return self.F
        return default_frequency_set(self.property, n, N, self.preset, self.c1, self.threshold)

    def resolve_poly(self, n: int, N: int) -> PolyConfig:
        if self.poly_cfg is not None:
            return self.poly_cfg
        if self.property.kind == DTU:
            return PolyConfig.dtu(n, N)
        return PolyConfig.entropy(n, N)


def halves(x2n: SampleSequence, split: str) -> tuple[Histogram, Histogram]:
    """First- and second-half histograms; with ``split='none'`` both are the full sample."""
    if split == "none":
        h = build_histogram(x2n)
        return h, h
    a, b = split_samples(x2n)
    return build_histogram(a), build_histogram(b)


def emp_frac(hist1: Histogram, hist2: Histogram, F: FrequencySet) -> float:
    """Fraction of second-half samples whose symbol falls outside ``F`` in the first half."""
    if hist2.total == 0:
        return 0.0
    out = sum(c for x, c in hist2.counts.items() if hist1.count(x) not in F)
    return out / hist2.total


def _with_domain(prop: Property, N: int) -> Property:
    if prop.N is None:
        return replace(prop, N=N)
    if prop.N != N:
        raise ValueError(f"property is defined for N={prop.N} but the samples live on {N} symbols")
    return prop


def estimate(x2n: SampleSequence, cfg: FrameworkConfig, return_pml: bool = False):
    """Estimate ``cfg.property`` from the samples.

    Returns an :class:`Estimate`; with ``return_pml`` also the pseudo-PML
    result on the bad set (``None`` when it was not computed).
    """
    N = x2n.domain_size
    prop = _with_domain(cfg.property, N)
    if prop.kind == SUPPORT:
        value = support_estimate(x2n, prop.k, cfg.solver_opts)
        est = Estimate(prop.clamp(value), float(value), 0.0, 0.0, float(value),
                       {"S_size": N, "S_bar_size": 0, "emp_frac": 0.0, "n": len(x2n)})
        return (est, None) if return_pml else est

    hist1, hist2 = halves(x2n, cfg.split)
    n = hist2.total
    F = cfg.resolve_F(max(n, 1), N)
    S, S_bar = partition_domain(hist1, F)
    pml: PmlResult | None = None
    if not S:
        bad = 0.0
    elif cfg.bad_set_method == PSEUDO_PML:
        opts = replace(cfg.solver_opts, domain_size=N)
        pml = approximate_pml(pseudo_profile(hist2, S), opts, domain_size=N)
        bad = plugin_property(pml.distribution, prop, S)
    else:
        bad = per_symbol_estimator(hist1, hist2, S, prop, cfg.resolve_poly(n, N))
    good, bias = empirical_parts(hist2, prop, S_bar, cfg.correction)
    raw = bad + good + bias
    diag = {"S_size": len(S), "S_bar_size": len(S_bar), "emp_frac": emp_frac(hist1, hist2, F),
            "n": n, "F": str(F)}
    if pml is not None:
        diag["pml_log_likelihood"] = pml.log_likelihood
        diag["pml_method"] = pml.solver_stats.get("method")
    est = Estimate(prop.clamp(raw), bad, good, bias, raw, diag)
    return (est, pml) if return_pml else est


def support_estimate(x_n: SampleSequence, k: int, opts: SolverOptions | None = None) -> int:
    """Support size of the PML distribution whose non-zero probabilities are all ``>= 1/k``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    phi = profile_of(build_histogram(x_n))
    res = constrained_pml_support(phi, k, opts)
    return res.distribution.support_size
