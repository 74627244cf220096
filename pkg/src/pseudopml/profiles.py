"""Samples, histograms, profiles and the domain bookkeeping built on them.

Everything here is immutable after construction. Histograms are sparse
(``dict`` keyed by symbol) because the domain can be far larger than the
number of distinct observed symbols.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class DomainError(ValueError):
    """A symbol lies outside ``[0, domain_size)``."""


@dataclass(frozen=True)
class SampleSequence:
    symbols: np.ndarray
    domain_size: int

    def __post_init__(self):
        arr = np.asarray(self.symbols, dtype=np.int64).reshape(-1)
        if self.domain_size < 1:
            raise ValueError("domain_size must be positive")
        if arr.size and (arr.min() < 0 or arr.max() >= self.domain_size):
            bad = arr[(arr < 0) | (arr >= self.domain_size)][0]
            raise DomainError(f"symbol {bad} outside [0, {self.domain_size})")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "symbols", arr)

    def __len__(self):
        return int(self.symbols.size)

    @property
    def n(self) -> int:
        return len(self)


@dataclass(frozen=True)
class Histogram:
    """Per-symbol counts; zero counts are never stored."""

    counts: Mapping[int, int]
    total: int
    domain_size: int

    def __post_init__(self):
        counts = {int(k): int(v) for k, v in self.counts.items() if v}
        if any(v < 0 for v in counts.values()):
            raise ValueError("negative count")
        if sum(counts.values()) != self.total:
            raise ValueError("counts do not sum to total")
        if counts and (min(counts) < 0 or max(counts) >= self.domain_size):
            raise DomainError("histogram symbol outside the domain")
        object.__setattr__(self, "counts", counts)

    def count(self, symbol: int) -> int:
        return self.counts.get(symbol, 0)

    def dense(self) -> np.ndarray:
        """Counts as a length-``domain_size`` integer array."""
        out = np.zeros(self.domain_size, dtype=np.int64)
        if self.counts:
            keys = np.fromiter(self.counts.keys(), dtype=np.int64, count=len(self.counts))
            vals = np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))
            out[keys] = vals
        return out

    @classmethod
    def from_dense(cls, counts: np.ndarray) -> "Histogram":
        counts = np.asarray(counts, dtype=np.int64)
        nz = np.flatnonzero(counts)
        return cls(dict(zip(nz.tolist(), counts[nz].tolist())), int(counts.sum()), counts.size)


@dataclass(frozen=True)
class Profile:
    """``phi[j]`` is the number of symbols seen exactly ``j`` times (``j >= 1``)."""

    phi: Mapping[int, int]
    length: int

    def __post_init__(self):
        phi = {int(j): int(c) for j, c in sorted(self.phi.items()) if c}
        if any(j < 1 for j in phi):
            raise ValueError("profiles carry no entry for frequency 0")
        if any(c < 0 for c in phi.values()):
            raise ValueError("negative profile entry")
        if sum(j * c for j, c in phi.items()) != self.length:
            raise ValueError("sum_j j*phi(j) must equal the profile length")
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class PseudoProfile:
    """Profile restricted to the symbols of ``subset``.

    Samples landing outside ``subset`` are not described beyond the length,
    so ``sum_j j*phi_s(j)`` may fall short of ``length``.
    """

    subset: frozenset
    phi_s: Mapping[int, int]
    length: int

    def __post_init__(self):
        phi = {int(j): int(c) for j, c in sorted(self.phi_s.items()) if c}
        if any(j < 1 for j in phi):
            raise ValueError("pseudo profiles carry no entry for frequency 0")
        if sum(phi.values()) > len(self.subset):
            raise ValueError("more observed symbols than the subset holds")
        if sum(j * c for j, c in phi.items()) > self.length:
            raise ValueError("pseudo profile mass exceeds its length")
        object.__setattr__(self, "subset", frozenset(int(s) for s in self.subset))
        object.__setattr__(self, "phi_s", phi)

    @property
    def phi(self) -> Mapping[int, int]:
        return self.phi_s

    @property
    def subset_size(self) -> int:
        return len(self.subset)

    @property
    def subset_samples(self) -> int:
        return sum(j * c for j, c in self.phi_s.items())


@dataclass(frozen=True)
class FrequencySet:
    """Union of disjoint closed integer intervals ``[lo, hi]``."""

    intervals: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ivs = sorted((int(lo), int(hi)) for lo, hi in self.intervals)
        for lo, hi in ivs:
            if lo < 0 or lo > hi:
                raise ValueError(f"bad interval [{lo}, {hi}]")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if lo <= hi:
                raise ValueError("intervals overlap")
        object.__setattr__(self, "intervals", tuple(ivs))

    @classmethod
    def interval(cls, lo: int, hi: int) -> "FrequencySet":
        return cls(((lo, hi),))

    @classmethod
    def empty(cls) -> "FrequencySet":
        return cls(())

    @classmethod
    def parse(cls, text: str) -> "FrequencySet":
        """Parse ``"0-18"`` or ``"0-3,7-9"`` (an empty string is the empty set)."""
        ivs = []
        for part in filter(None, (p.strip() for p in text.split(","))):
            m = re.fullmatch(r"(\d+)(?:\s*-\s*(\d+))?", part)
            if not m:
                raise ValueError(f"cannot parse frequency interval {part!r}")
            lo = int(m.group(1))
            ivs.append((lo, int(m.group(2)) if m.group(2) else lo))
        return cls(tuple(ivs))

    def __contains__(self, j) -> bool:
        return any(lo <= j <= hi for lo, hi in self.intervals)

    def mask(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts)
        out = np.zeros(counts.shape, dtype=bool)
        for lo, hi in self.intervals:
            out |= (counts >= lo) & (counts <= hi)
        return out

    def __str__(self):
        return ",".join(f"{lo}-{hi}" for lo, hi in self.intervals)


def build_histogram(seq: SampleSequence) -> Histogram:
    syms, counts = np.unique(seq.symbols, return_counts=True)
    return Histogram(dict(zip(syms.tolist(), counts.tolist())), len(seq), seq.domain_size)


def profile_of(hist: Histogram) -> Profile:
    return Profile(Counter(hist.counts.values()), hist.total)


def freq_set(p: Profile | PseudoProfile) -> set:
    return {j for j, c in p.phi.items() if c >= 1}


def distinct_count(p: Profile | PseudoProfile) -> int:
    return sum(p.phi.values())


def split_samples(seq: SampleSequence) -> tuple[SampleSequence, SampleSequence]:
    if len(seq) % 2:
        raise ValueError("sample splitting needs an even number of samples; drop one explicitly")
    h = len(seq) // 2
    return (SampleSequence(seq.symbols[:h], seq.domain_size),
            SampleSequence(seq.symbols[h:], seq.domain_size))


def partition_mask(hist1: Histogram, F: FrequencySet) -> np.ndarray:
    """Boolean mask over the domain: True for symbols whose count lies in F."""
    return F.mask(hist1.dense())


def partition_domain(hist1: Histogram, F: FrequencySet) -> tuple[frozenset, frozenset]:
    """Split the domain into S (first-half count in F) and its complement.

    Unseen symbols have count 0, so they land in S exactly when ``0 in F``.
    """
    mask = partition_mask(hist1, F)
    return frozenset(np.flatnonzero(mask).tolist()), frozenset(np.flatnonzero(~mask).tolist())


def pseudo_profile(hist2: Histogram, S: Iterable[int]) -> PseudoProfile:
    S = frozenset(S)
    phi = Counter(c for x, c in hist2.counts.items() if x in S)
    return PseudoProfile(S, phi, hist2.total)


# -- file formats -----------------------------------------------------------

_HEADER = re.compile(r"#\s*domain_size\s*=\s*(\d+)")


def read_samples(path: str | Path, domain_size: int | None = None) -> SampleSequence:
    """One non-negative integer per line; optional ``# domain_size=N`` first line.

    Without a header or explicit ``domain_size`` the domain is taken to be
    ``max(symbol) + 1``.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    symbols = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.fullmatch(line)
            if i == 0 and m and domain_size is None:
                domain_size = int(m.group(1))
            continue
        symbols.append(int(line))
    if domain_size is None:
        domain_size = max(symbols) + 1 if symbols else 1
    return SampleSequence(np.asarray(symbols, dtype=np.int64), domain_size)


def write_samples(seq: SampleSequence, path: str | Path) -> None:
    body = "\n".join(map(str, seq.symbols.tolist()))
    Path(path).write_text(f"# domain_size={seq.domain_size}\n{body}\n", encoding="utf-8")


def read_histogram(path: str | Path, domain_size: int | None = None) -> Histogram:
    counts = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sym, cnt = line.split("\t")
        counts[int(sym)] = counts.get(int(sym), 0) + int(cnt)
    if domain_size is None:
        domain_size = max(counts) + 1 if counts else 1
    return Histogram(counts, sum(counts.values()), domain_size)


def write_histogram(hist: Histogram, path: str | Path) -> None:
    rows = [f"{s}\t{c}" for s, c in sorted(hist.counts.items())]
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")
