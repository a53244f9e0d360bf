"""Single-objective Poisson pps and bottom-k samples.

Both sample kinds are mergeable.  A pps sample keeps the exact total of
``f`` so shard totals add up exactly; a bottom-k sample keeps the ``k+1``
smallest f-seeds (the entries plus the record that defines the threshold),
which is exactly the state needed to merge.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Iterator, Mapping

from .core import (Dataset, Element, Key, Mode, RandSource, exact_sum, inclusion_probability,
                   key_bytes, seed_from_uniform)
from .errors import ContractViolation, DataError, EmptySupportError, ParameterMismatch
from .objectives import Objective, StatFn


def _pairs(data: Any) -> Iterator[tuple[Key, float]]:
    """Iterate ``(key, weight)`` over a Dataset, mapping or iterable, validating weights."""
    if isinstance(data, Dataset):
        for e in data:
            yield e.key, e.weight
        return
    items = data.items() if hasattr(data, "items") else data
    for item in items:
        if isinstance(item, Element):
            yield item.key, item.weight
        else:
            e = Element(*item)
            yield e.key, e.weight


def unique_pairs(data: Any) -> list[tuple[Key, float]]:
    """Materialize ``(key, weight)`` pairs, rejecting repeated keys."""
    pairs = list(_pairs(data))
    if not (isinstance(data, Dataset) and data.aggregated) and not hasattr(data, "items"):
        seen = set()
        for k, _ in pairs:
            if k in seen:
                raise DataError(f"duplicate key {k!r}; pps sampling needs aggregated data")
            seen.add(k)
    return pairs


def check_same(a, b, what: str, *fields: str) -> None:
    for name in fields:
        if getattr(a, name) != getattr(b, name):
            raise ParameterMismatch(f"cannot merge {what} samples with different {name}: "
                                    f"{getattr(a, name)!r} != {getattr(b, name)!r}")


def _check_rand(a: RandSource, b: RandSource) -> None:
    if a.hash_seed != b.hash_seed:
        raise ParameterMismatch(f"hash_seed differs: {a.hash_seed} != {b.hash_seed}")
    if a.mode != b.mode:
        raise ParameterMismatch(f"mode differs: {a.mode.value} != {b.mode.value}")


# -- Poisson pps --------------------------------------------------------------

def pps_probability(f: StatFn, k: int, w: float, total: float | Fraction, key: Key = None) -> float:
    """``min(1, k f(w) / total)``."""
    if total <= 0:
        raise EmptySupportError(f"empty objective support: total of {f.spec} is 0")
    if w < 0:
        raise ValueError("weights are nonnegative")
    return min(1.0, k * f.value(key, w) / float(total))


@dataclass(frozen=True)
class PoissonEntry:
    key: Key
    weight: float
    u: float
    p: float


@dataclass(frozen=True)
class PoissonSample:
    """Keys with ``u <= p``, plus the exact total needed to recompute ``p``."""

    objective: Objective
    rand: RandSource
    total: Fraction
    entries: tuple[PoissonEntry, ...]

    kind = "pps"

    @property
    def f(self) -> StatFn:
        return self.objective.f

    @property
    def k(self) -> int:
        return self.objective.k

    def __len__(self):
        return len(self.entries)

    def keys(self) -> list[Key]:
        return [e.key for e in self.entries]

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for e in self.entries:
            yield e.key, e.weight, e.p

    def merge(self, other: "PoissonSample") -> "PoissonSample":
        return pps_merge(self, other)


def _poisson_select(objective: Objective, rand: RandSource, total: Fraction,
                    records: Iterable[tuple[Key, float, float]]) -> tuple[PoissonEntry, ...]:
    if total <= 0:
        return ()
    f, k, tot = objective.f, objective.k, float(total)
    out = []
    for key, w, u in records:
        p = min(1.0, k * f.value(key, w) / tot)
        if u <= p:
            out.append(PoissonEntry(key, w, u, p))
    out.sort(key=lambda e: key_bytes(e.key))
    return tuple(out)


def pps_build(data: Any, obj: Objective, rand: RandSource,
              total: float | Fraction | None = None) -> PoissonSample:
    """Poisson pps sample of aggregated data.

    ``total`` may be supplied to skip the first pass; it is then trusted.
    """
    pairs = unique_pairs(data)
    f = obj.f
    if total is None:
        total = exact_sum(f.value(k, w) for k, w in pairs)
    total = Fraction(total)
    entries = _poisson_select(obj, rand, total, ((k, w, rand.u(k)) for k, w in pairs))
    return PoissonSample(obj, rand, total, entries)


class PpsBuilder:
    """One-pass pps sampling when the total is known in advance.

    Keys are not checked for uniqueness here; that would need memory
    proportional to the input.
    """

    def __init__(self, obj: Objective, rand: RandSource, total: float | Fraction):
        self.objective = obj
        self.rand = rand
        self.total = Fraction(total)
        self._records: list[tuple[Key, float, float]] = []
        self._tot = float(self.total)

    def add(self, key: Key, weight: float) -> None:
        if self._tot <= 0:
            return
        u = self.rand.u(key)
        if u <= min(1.0, self.objective.k * self.objective.f.value(key, weight) / self._tot):
            self._records.append((key, weight, u))

    def result(self) -> PoissonSample:
        entries = _poisson_select(self.objective, self.rand, self.total, self._records)
        return PoissonSample(self.objective, self.rand, self.total, entries)


def pps_merge(a: PoissonSample, b: PoissonSample) -> PoissonSample:
    """Merge samples of key-disjoint datasets; equals the one-shot sample of the union."""
    check_same(a, b, "pps", "objective")
    _check_rand(a.rand, b.rand)
    ka = {e.key for e in a.entries}
    both = [e.key for e in b.entries if e.key in ka]
    if both:
        raise ContractViolation(f"pps merge needs key-disjoint inputs; {both[0]!r} is in both")
    total = a.total + b.total
    records = ((e.key, e.weight, e.u) for e in a.entries + b.entries)
    return PoissonSample(a.objective, a.rand, total, _poisson_select(a.objective, a.rand, total, records))


# -- bottom-k -----------------------------------------------------------------

@dataclass(frozen=True)
class BottomKEntry:
    key: Key
    weight: float
    u: float
    seed: float


class SmallestSeeds:
    """The ``cap`` smallest ``(seed, key bytes)`` records, one per key, max weight wins.

    Records are tuples ``(seed, kb, key, weight, u)`` kept sorted.
    """

    __slots__ = ("cap", "items", "index")

    def __init__(self, cap: int):
        self.cap = cap
        self.items: list[tuple] = []
        self.index: dict[Key, tuple] = {}

    def offer(self, key: Key, kb: bytes, weight: float, u: float, seed: float) -> bool:
        if seed == math.inf:
            return False
        old = self.index.get(key)
        items = self.items
        if old is not None:
            if weight <= old[3]:
                return False
            items.remove(old)
            del self.index[key]
        elif len(items) >= self.cap and (seed, kb) >= items[-1][:2]:
            return False
        rec = (seed, kb, key, weight, u)
        bisect.insort(items, rec)
        self.index[key] = rec
        if len(items) > self.cap:
            del self.index[items.pop()[2]]
        return True

    def bound(self) -> float:
        """Largest retained seed once full, else ``inf``."""
        return self.items[-1][0] if len(self.items) >= self.cap else math.inf

    def __len__(self):
        return len(self.items)

    def __contains__(self, key):
        return key in self.index


@dataclass(frozen=True)
class BottomKSample:
    """The k smallest f-seeds plus the (k+1)-st, whose seed is the threshold ``tau``."""

    objective: Objective
    rand: RandSource
    entries: tuple[BottomKEntry, ...]
    threshold_entry: BottomKEntry | None

    kind = "botk"

    @property
    def f(self) -> StatFn:
        return self.objective.f

    @property
    def k(self) -> int:
        return self.objective.k

    @property
    def tau(self) -> float:
        return math.inf if self.threshold_entry is None else self.threshold_entry.seed

    def __len__(self):
        return len(self.entries)

    def keys(self) -> list[Key]:
        return [e.key for e in self.entries]

    def retained(self) -> tuple[BottomKEntry, ...]:
        if self.threshold_entry is None:
            return self.entries
        return self.entries + (self.threshold_entry,)

    def conditional_probability(self, weight: float, key: Key = None) -> float:
        return inclusion_probability(self.rand.mode, self.f.value(key, weight), self.tau)

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for e in self.entries:
            yield e.key, e.weight, self.conditional_probability(e.weight, e.key)

    def merge(self, other: "BottomKSample") -> "BottomKSample":
        return botk_merge(self, other)


class BottomKBuilder:
    """Streaming bottom-k accumulator; repeated keys keep their maximum weight."""

    def __init__(self, obj: Objective, rand: RandSource):
        self.objective = obj
        self.rand = rand
        self._heap = SmallestSeeds(obj.k + 1)

    def add(self, key: Key, weight: float) -> None:
        self.add_record(key, weight, self.rand.u(key))

    def add_record(self, key: Key, weight: float, u: float) -> None:
        fv = self.objective.f.value(key, weight)
        if fv <= 0:
            return
        s = seed_from_uniform(u, fv, self.rand.mode)
        self._heap.offer(key, key_bytes(key), weight, u, s)

    def extend(self, data: Any) -> "BottomKBuilder":
        for k, w in _pairs(data):
            self.add(k, w)
        return self

    def result(self) -> BottomKSample:
        recs = [BottomKEntry(key, w, u, s) for s, _, key, w, u in self._heap.items]
        k = self.objective.k
        thr = recs[k] if len(recs) > k else None
        return BottomKSample(self.objective, self.rand, tuple(recs[:k]), thr)


def botk_build(data: Any, obj: Objective, rand: RandSource) -> BottomKSample:
    if isinstance(data, Mapping) or (isinstance(data, Dataset) and data.aggregated):
        # unique keys: one selection instead of a streaming pass
        f, mode, k = obj.f, rand.mode, obj.k
        recs = []
        for key, w in _pairs(data):
            fv = f.value(key, w)
            if fv > 0:
                u = rand.u(key)
                recs.append((seed_from_uniform(u, fv, mode), key_bytes(key), key, w, u))
        recs = heapq.nsmallest(k + 1, recs)
        out = [BottomKEntry(key, w, u, s) for s, _, key, w, u in recs]
        return BottomKSample(obj, rand, tuple(out[:k]), out[k] if len(out) > k else None)
    return BottomKBuilder(obj, rand).extend(data).result()


def botk_merge(a: BottomKSample, b: BottomKSample) -> BottomKSample:
    """Equals the one-shot sample of the union of the inputs' datasets."""
    check_same(a, b, "bottom-k", "objective")
    _check_rand(a.rand, b.rand)
    builder = BottomKBuilder(a.objective, a.rand)
    for e in a.retained() + b.retained():
        builder.add_record(e.key, e.weight, e.u)
    return builder.result()


def botk_conditional_probability(sample: BottomKSample, w: float, key: Key = None) -> float:
    """``Pr[x sampled | other seeds]``: ``min(1, f tau)`` or ``1 - exp(-f tau)``."""
    return sample.conditional_probability(w, key)


def check_rand_compatible(a: RandSource, b: RandSource) -> None:
    _check_rand(a, b)


__all__ = [
    "BottomKBuilder", "BottomKEntry", "BottomKSample", "Mode", "PoissonEntry", "PoissonSample", "PpsBuilder",
    "SmallestSeeds", "botk_build", "botk_conditional_probability", "botk_merge", "pps_build",
    "pps_merge", "pps_probability", "unique_pairs",
]
