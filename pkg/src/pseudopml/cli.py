"""Command-line entry point ``pseudopml``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import (ESTIMATORS, KINDS, BenchSpec, SyntheticDist, empfrac_table, make_distribution,
                    run_benchmark, sample, write_csv)
from .estimators import Property
from .framework import PER_SYMBOL_POLY, PRESETS, PSEUDO_PML, FrameworkConfig, estimate
from .pml import SolverOptions
from .profiles import FrequencySet, SampleSequence, read_histogram, read_samples, write_samples

CORRECTION_NAMES = {"half": "per_symbol_half", "over-n": "s_bar_over_n", "none": "none"}


def _int_list(text: str) -> list[int]:
    """``"1e3,5e3,10000"`` -> ``[1000, 5000, 10000]``."""
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        v = float(tok)
        if v != int(v):
            raise argparse.ArgumentTypeError(f"{tok} is not an integer")
        out.append(int(v))
    return out


def _load_input(args) -> SampleSequence:
    if args.histogram:
        h = read_histogram(args.input, args.domain_size)
        # expand in symbol order; every estimator here depends only on counts
        syms = [s for s, c in sorted(h.counts.items()) for _ in range(c)]
        return SampleSequence(syms, h.domain_size)
    return read_samples(args.input, args.domain_size)


def cmd_estimate(args) -> int:
    x = _load_input(args)
    N = x.domain_size
    if args.property == "support":
        if args.k is None:
            raise SystemExit("--k is required for support")
        prop = Property.support(args.k, N)
    else:
        prop = Property(args.property, N=N)
    F = FrequencySet.parse(args.F) if args.F is not None else "auto"
    split = "none" if args.no_split else "halves"
    if split == "halves" and len(x) % 2:
        logging.warning("odd sample count; dropping the last sample to split evenly")
        x = SampleSequence(x.symbols[:-1], N)
    cfg = FrameworkConfig(prop, F, SolverOptions(domain_size=N), correction=CORRECTION_NAMES[args.correction],
                          bad_set_method=args.bad_set_method, split=split, preset=args.preset,
                          threshold=args.threshold)
    est, pml = estimate(x, cfg, return_pml=True)
    scale = 1.0 / math.log(2) if args.bits and prop.kind == "entropy" else 1.0
    if args.dump_pml and pml is not None:
        Path(args.dump_pml).write_text(pml.to_json(sort_keys=True) + "\n", encoding="utf-8")
    if args.json:
        d = est.to_dict()
        for key in ("value", "bad_set_value", "good_set_value", "bias_correction", "raw"):
            d[key] *= scale
        d["property"] = prop.kind
        d["units"] = "bits" if scale != 1.0 else ("nats" if prop.kind == "entropy" else "")
        print(json.dumps(d, sort_keys=True))
    else:
        unit = " bits" if scale != 1.0 else (" nats" if prop.kind == "entropy" else "")
        print(f"{prop.kind}: {est.value * scale:.10g}{unit}")
        dg = est.diagnostics
        if prop.kind != "support":
            print(f"  bad set {est.bad * scale:.10g}  good set {est.good * scale:.10g}  "
                  f"bias {est.bias * scale:.10g}")
            print(f"  |S|={dg['S_size']} |S_bar|={dg['S_bar_size']} EmpFrac={dg['emp_frac']:.6g} F={dg['F']}")
    return 0


def _spec_from_toml(path: str) -> BenchSpec:
    cfg = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    dists = tuple(SyntheticDist(d["kind"], int(d["N"]), float(d.get("alpha", 1.0)))
                  for d in cfg.get("dist", []))
    kw = {k: cfg[k] for k in ("trials", "seed_base", "property", "threshold", "split", "correction")
          if k in cfg}
    if "correction" in kw:
        kw["correction"] = CORRECTION_NAMES.get(kw["correction"], kw["correction"])
    return BenchSpec(estimators=tuple(cfg.get("estimators", (PSEUDO_PML, "mle_corrected"))),
                     dists=dists or BenchSpec.dists, sizes=tuple(int(s) for s in cfg.get("sizes", (1000,))),
                     **kw)


def cmd_bench(args) -> int:
    if args.config:
        spec = _spec_from_toml(args.config)
    else:
        dists = tuple(SyntheticDist(k, args.N, args.alpha) for k in args.dist.split(","))
        spec = BenchSpec(estimators=tuple(args.estimators.split(",")), dists=dists,
                         sizes=tuple(args.sizes), trials=args.trials, seed_base=args.seed_base,
                         property=args.property, threshold=args.threshold,
                         split="none" if args.no_split else "halves",
                         correction=CORRECTION_NAMES[args.correction])
    reports = run_benchmark(spec)
    text = write_csv(reports, timing=args.timing)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 1 if any(r.failures for r in reports) else 0


def cmd_empfrac(args) -> int:
    spec = SyntheticDist(args.dist, args.N, args.alpha)
    rows = empfrac_table(spec, args.sizes, args.threshold, args.trials, args.seed,
                         "halves" if args.split else "none")
    lines = ["dist,N,alpha,threshold,n,trials,emp_frac_mean,emp_frac_std"]
    for r in rows:
        lines.append(f"{spec.label},{spec.N},{spec.alpha:g},{args.threshold},{r.n},{r.trials},"
                     f"{r.mean:.10g},{r.std:.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_sample(args) -> int:
    seq = sample(make_distribution(SyntheticDist(args.dist, args.N, args.alpha)), args.n, args.seed)
    write_samples(seq, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pseudopml", description="Symmetric property estimation via pseudo-PML.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate a property from a sample file")
    e.add_argument("--property", choices=("entropy", "dtu", "support"), default="entropy")
    e.add_argument("--input", required=True, help="one symbol per line (or symbol<TAB>count with --histogram)")
    e.add_argument("--histogram", action="store_true", help="input is a symbol/count table")
    e.add_argument("--domain-size", type=int, default=None)
    e.add_argument("--preset", choices=PRESETS, default="paper_experiment")
    e.add_argument("--threshold", type=int, default=18)
    e.add_argument("--F", default=None, help='explicit frequency set, e.g. "0-18"')
    e.add_argument("--no-split", action="store_true", help="use the full sample for both roles")
    e.add_argument("--correction", choices=tuple(CORRECTION_NAMES), default="half")
    e.add_argument("--bad-set-method", choices=(PSEUDO_PML, PER_SYMBOL_POLY), default=PSEUDO_PML)
    e.add_argument("--k", type=int, default=None, help="1/k lower bound on probabilities (support)")
    e.add_argument("--bits", action="store_true", help="report entropy in bits")
    e.add_argument("--json", action="store_true")
    e.add_argument("--dump-pml", default=None, help="write the bad-set PML distribution as JSON")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", help="multi-trial RMSE benchmark, CSV output")
    b.add_argument("--config", default=None, help="TOML bench description")
    b.add_argument("--estimators", default="pseudo_pml,mle_corrected",
                   help=f"comma list from {','.join(ESTIMATORS)}")
    b.add_argument("--dist", default="zipf", help=f"comma list from {','.join(KINDS)}")
    b.add_argument("--N", type=int, default=10**4)
    b.add_argument("--alpha", type=float, default=1.0)
    b.add_argument("--sizes", type=_int_list, default=[1000])
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--seed-base", type=int, default=0)
    b.add_argument("--property", choices=("entropy", "dtu"), default="entropy")
    b.add_argument("--threshold", type=int, default=18)
    b.add_argument("--no-split", action="store_true", default=True)
    b.add_argument("--split", dest="no_split", action="store_false", help="split samples into halves")
    b.add_argument("--correction", choices=tuple(CORRECTION_NAMES), default="half")
    b.add_argument("--timing", action="store_true", help="fill seconds_per_trial (not reproducible)")
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("empfrac", help="EmpFrac table for a synthetic distribution")
    f.add_argument("--dist", choices=KINDS, default="zipf")
    f.add_argument("--alpha", type=float, default=1.0)
    f.add_argument("--N", type=int, default=10**5)
    f.add_argument("--threshold", type=int, default=18)
    f.add_argument("--sizes", type=_int_list, default=[10**3, 10**4, 10**5, 10**6])
    f.add_argument("--trials", type=int, default=50)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--split", action="store_true", help="split samples into halves")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_empfrac)

    s = sub.add_parser("sample", help="draw a seeded sample file from a synthetic distribution")
    s.add_argument("--dist", choices=KINDS, default="zipf")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--N", type=int, default=10**4)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
