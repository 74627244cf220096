"""Symmetric property estimation with pseudo profile maximum likelihood."""

from .bench import (BenchSpec, SyntheticDist, TrialReport, empfrac_table, make_distribution,
                    run_benchmark, sample, write_csv)
from .estimators import (Estimate, Property, empirical_with_bias, per_symbol_estimator,
                         plugin_property, sensitivity_bound)
from .framework import FrameworkConfig, default_frequency_set, emp_frac, estimate, support_estimate
from .pml import (DiscreteDistribution, InfeasibleError, OracleScaleError, PmlResult, SolverOptions,
                  approximate_pml, constrained_pml_support, profile_probability_exact,
                  pseudo_profile_probability_exact, surrogate_log_likelihood)
from .polyapprox import (PolyApprox, PolyConfig, best_uniform_approx, equioscillation_count,
                         falling_factorial_estimate)
from .profiles import (DomainError, FrequencySet, Histogram, Profile, PseudoProfile, SampleSequence,
                       build_histogram, distinct_count, freq_set, partition_domain, profile_of,
                       pseudo_profile, split_samples)

__version__ = "0.1.0"
