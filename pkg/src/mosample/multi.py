"""Multi-objective pps and bottom-k samples over a finite list of objectives.

A multi-objective sample is the union of coordinated dedicated samples, one
per objective.  Because every dedicated sample uses the same ``u`` per key,
the union is far smaller than the sum of the dedicated sizes whenever the
objectives agree on which keys matter.

Bottom-k samples here store, per objective, the exact threshold
``tau_f`` (the ``k_f+1``-st smallest f-seed).  A sampled key's conditional
probability is the largest single-objective conditional probability over the
objectives whose dedicated sample contains it; objectives that do not
contain the key can never give a larger value.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from .core import Key, RandSource, exact_sum, inclusion_probability, key_bytes, seed_from_uniform
from .errors import ContractViolation
from .objectives import Objective, StatFn
from .single import (PoissonEntry, SmallestSeeds, _check_rand, _pairs, check_same, unique_pairs)


def _objectives(objectives: Iterable[Objective]) -> tuple[Objective, ...]:
    objs = tuple(objectives)
    if not objs:
        raise ValueError("at least one objective is required")
    return objs


# -- multi-objective pps ------------------------------------------------------

def mo_pps_probability(objectives: Sequence[Objective], totals: Sequence[float | Fraction], w: float,
                       key: Key = None, warnings: list | None = None) -> float:
    """``min(1, max_f k_f f(w) / total_f)``; objectives with zero total contribute 0."""
    best = 0.0
    for obj, tot in zip(objectives, totals, strict=True):
        if tot <= 0:
            if warnings is not None:
                warnings.append(f"objective {obj.f.spec} has empty support; it contributes 0")
            continue
        best = max(best, obj.k * obj.f.value(key, w) / float(tot))
    return min(1.0, best)


@dataclass(frozen=True)
class MultiPpsSample:
    objectives: tuple[Objective, ...]
    rand: RandSource
    totals: tuple[Fraction, ...]
    entries: tuple[PoissonEntry, ...]
    warnings: tuple[str, ...] = ()

    kind = "mo_pps"

    def __len__(self):
        return len(self.entries)

    def keys(self) -> list[Key]:
        return [e.key for e in self.entries]

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for e in self.entries:
            yield e.key, e.weight, e.p

    def merge(self, other: "MultiPpsSample") -> "MultiPpsSample":
        return mo_pps_merge(self, other)


def _empty_warnings(objectives, totals) -> tuple[str, ...]:
    return tuple(f"objective {o.f.spec} has empty support; it contributes 0"
                 for o, t in zip(objectives, totals) if t <= 0)


def _mo_select(objectives, totals, records) -> tuple[PoissonEntry, ...]:
    out = []
    for key, w, u in records:
        p = mo_pps_probability(objectives, totals, w, key)
        if p > 0 and u <= p:
            out.append(PoissonEntry(key, w, u, p))
    out.sort(key=lambda e: key_bytes(e.key))
    return tuple(out)


def mo_pps_build(data: Any, objectives: Iterable[Objective], rand: RandSource,
                 totals: Sequence[float | Fraction] | None = None) -> MultiPpsSample:
    objs = _objectives(objectives)
    pairs = unique_pairs(data)
    if totals is None:
        totals = [exact_sum(o.f.value(k, w) for k, w in pairs) for o in objs]
    totals = tuple(Fraction(t) for t in totals)
    entries = _mo_select(objs, totals, ((k, w, rand.u(k)) for k, w in pairs))
    return MultiPpsSample(objs, rand, totals, entries, _empty_warnings(objs, totals))


class MultiPpsBuilder:
    """One-pass multi-objective pps sampling with totals known in advance."""

    def __init__(self, objectives: Iterable[Objective], rand: RandSource, totals: Sequence[float | Fraction]):
        self.objectives = _objectives(objectives)
        self.rand = rand
        self.totals = tuple(Fraction(t) for t in totals)
        if len(self.totals) != len(self.objectives):
            raise ValueError("one total per objective is required")
        self._records: list[tuple[Key, float, float]] = []

    def add(self, key: Key, weight: float) -> None:
        u = self.rand.u(key)
        if u <= mo_pps_probability(self.objectives, self.totals, weight, key):
            self._records.append((key, weight, u))

    def result(self) -> MultiPpsSample:
        entries = _mo_select(self.objectives, self.totals, self._records)
        return MultiPpsSample(self.objectives, self.rand, self.totals, entries,
                              _empty_warnings(self.objectives, self.totals))


def mo_pps_merge(a: MultiPpsSample, b: MultiPpsSample) -> MultiPpsSample:
    check_same(a, b, "multi-objective pps", "objectives")
    _check_rand(a.rand, b.rand)
    ka = {e.key for e in a.entries}
    for e in b.entries:
        if e.key in ka:
            raise ContractViolation(f"pps merge needs key-disjoint inputs; {e.key!r} is in both")
    totals = tuple(x + y for x, y in zip(a.totals, b.totals))
    records = ((e.key, e.weight, e.u) for e in a.entries + b.entries)
    entries = _mo_select(a.objectives, totals, records)
    return MultiPpsSample(a.objectives, a.rand, totals, entries, _empty_warnings(a.objectives, totals))


def base_probabilities(data: Any, functions: Sequence[StatFn]) -> dict[Key, Fraction]:
    """Exact ``max_f f_x / total_f`` per key (objectives with zero total are skipped)."""
    if not functions:
        raise ValueError("at least one function is required")
    pairs = unique_pairs(data)
    out = {k: Fraction(0) for k, _ in pairs}
    for f in functions:
        vals = [Fraction(f.value(k, w)) for k, w in pairs]
        tot = sum(vals, Fraction(0))
        if tot == 0:
            continue
        for (k, _), v in zip(pairs, vals):
            r = v / tot
            if r > out[k]:
                out[k] = r
    return out


def mo_pps_overhead(data: Any, functions: Sequence[StatFn]) -> float:
    """``sum_x max_f f_x / total_f``, a value in ``[1, |F|]`` (exact up to the final rounding)."""
    return float(sum(base_probabilities(data, functions).values(), Fraction(0)))


# -- upper-bound pps ----------------------------------------------------------

@dataclass(frozen=True)
class UpperBoundSample:
    """Keys with ``u <= pi``, where ``pi`` upper-bounds the multi-objective pps probability."""

    objectives: tuple[Objective, ...]
    rand: RandSource
    totals: tuple[Fraction, ...]
    entries: tuple[PoissonEntry, ...]  # p holds pi

    kind = "ub_pps"

    def __len__(self):
        return len(self.entries)

    def keys(self) -> list[Key]:
        return [e.key for e in self.entries]

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for e in self.entries:
            yield e.key, e.weight, e.p


def ub_pps_build(data: Any, objectives: Iterable[Objective], rand: RandSource,
                 pi: Mapping[Key, float] | Callable[[Key, float, float], float]) -> UpperBoundSample:
    """Sample with caller-supplied probabilities ``pi_x >= p^(F)_x``.

    ``pi`` is a mapping key -> pi or a callable ``(key, weight, p) -> pi``
    that receives the exact probability.  A bound below the exact
    probability raises :class:`ContractViolation`.
    """
    objs = _objectives(objectives)
    pairs = unique_pairs(data)
    totals = tuple(exact_sum(o.f.value(k, w) for k, w in pairs) for o in objs)
    out = []
    for k, w in pairs:
        p = mo_pps_probability(objs, totals, w, k)
        bound = pi(k, w, p) if callable(pi) else pi.get(k, p)
        bound = float(bound)
        if not bound >= p:
            raise ContractViolation(f"upper bound {bound} for key {k!r} is below its probability {p}")
        bound = min(1.0, bound)
        u = rand.u(k)
        if bound > 0 and u <= bound:
            out.append(PoissonEntry(k, w, u, bound))
    out.sort(key=lambda e: key_bytes(e.key))
    return UpperBoundSample(objs, rand, totals, tuple(out))


# -- multi-objective bottom-k -------------------------------------------------

SAMPLE, AUX, RESERVE = "sample", "aux", "reserve"


@dataclass(frozen=True)
class MultiBotkRecord:
    key: Key
    weight: float
    u: float
    role: str
    p: float | None = None  # set for role == "sample"


@dataclass(frozen=True)
class MultiBotkSample:
    """Union of coordinated bottom-k samples.

    ``records`` holds every key in some per-objective ``k_f+1`` smallest
    set: sampled keys, the auxiliary keys that realize the thresholds needed
    for sampled keys' probabilities, and the remaining ``reserve`` keys,
    which keep merges exact.
    """

    objectives: tuple[Objective, ...]
    rand: RandSource
    taus: tuple[float, ...]
    records: tuple[MultiBotkRecord, ...]

    kind = "mo_botk"

    @property
    def entries(self) -> tuple[MultiBotkRecord, ...]:
        return tuple(r for r in self.records if r.role == SAMPLE)

    @property
    def aux(self) -> tuple[MultiBotkRecord, ...]:
        return tuple(r for r in self.records if r.role == AUX)

    def __len__(self):
        return sum(1 for r in self.records if r.role == SAMPLE)

    def keys(self) -> list[Key]:
        return [r.key for r in self.records if r.role == SAMPLE]

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for r in self.records:
            if r.role == SAMPLE:
                yield r.key, r.weight, r.p

    def merge(self, other: "MultiBotkSample") -> "MultiBotkSample":
        return mo_botk_merge(self, other)


class MultiBotkBuilder:
    """One ``k_f+1`` smallest-seed structure per objective, fed from a single pass."""

    def __init__(self, objectives: Iterable[Objective], rand: RandSource):
        self.objectives = _objectives(objectives)
        self.rand = rand
        self._heaps = [SmallestSeeds(o.k + 1) for o in self.objectives]

    def add(self, key: Key, weight: float) -> None:
        self.add_record(key, weight, self.rand.u(key))

    def add_record(self, key: Key, weight: float, u: float) -> None:
        kb = None
        mode = self.rand.mode
        for obj, heap in zip(self.objectives, self._heaps):
            fv = obj.f.value(key, weight)
            if fv <= 0:
                continue
            if kb is None:
                kb = key_bytes(key)
            heap.offer(key, kb, weight, u, seed_from_uniform(u, fv, mode))

    def extend(self, data: Any) -> "MultiBotkBuilder":
        for k, w in _pairs(data):
            self.add(k, w)
        return self

    def result(self) -> MultiBotkSample:
        mode = self.rand.mode
        taus = []
        members: list[set] = []
        thresholds: list[Key | None] = []
        retained: dict[Key, tuple[float, float, bytes]] = {}
        for obj, heap in zip(self.objectives, self._heaps):
            items = heap.items
            taus.append(items[obj.k][0] if len(items) > obj.k else math.inf)
            thresholds.append(items[obj.k][2] if len(items) > obj.k else None)
            members.append({rec[2] for rec in items[:obj.k]})
            for s, kb, key, w, u in items:
                retained[key] = (w, u, kb)

        probs: dict[Key, float] = {}
        aux: set = set()
        for key, (w, u, _) in retained.items():
            best, arg = -1.0, None
            for i, obj in enumerate(self.objectives):
                if key not in members[i]:
                    continue
                # pick the objective with the most forgiving threshold, first on ties
                x = obj.f.value(key, w) * taus[i]
                if x > best:
                    best, arg = x, i
            if arg is None:
                continue
            probs[key] = inclusion_probability(mode, self.objectives[arg].f.value(key, w), taus[arg])
            if thresholds[arg] is not None:
                aux.add(thresholds[arg])

        records = []
        for key, (w, u, kb) in sorted(retained.items(), key=lambda kv: kv[1][2]):
            if key in probs:
                records.append(MultiBotkRecord(key, w, u, SAMPLE, probs[key]))
            else:
                records.append(MultiBotkRecord(key, w, u, AUX if key in aux else RESERVE))
        return MultiBotkSample(self.objectives, self.rand, tuple(taus), tuple(records))


def mo_botk_build(data: Any, objectives: Iterable[Objective], rand: RandSource) -> MultiBotkSample:
    return MultiBotkBuilder(objectives, rand).extend(data).result()


def mo_botk_merge(a: MultiBotkSample, b: MultiBotkSample) -> MultiBotkSample:
    check_same(a, b, "multi-objective bottom-k", "objectives")
    _check_rand(a.rand, b.rand)
    builder = MultiBotkBuilder(a.objectives, a.rand)
    for r in a.records + b.records:
        builder.add_record(r.key, r.weight, r.u)
    return builder.result()


@dataclass(frozen=True)
class OverheadEstimate:
    value: float
    stderr: float
    trials: int


def mo_botk_overhead(data: Any, functions: Sequence[StatFn], k: int, trials: int = 200,
                     seed0: int = 0, mode="ppswor") -> OverheadEstimate:
    """Monte Carlo estimate of ``E|S^(F)| / k`` over ``trials`` hash seeds."""
    if not functions:
        raise ValueError("at least one function is required")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pairs = list(_pairs(data))
    objs = [Objective(f, k) for f in functions]
    base = RandSource(seed0, mode)
    sizes = []
    for t in range(trials):
        rand = RandSource((seed0 + t) & ((1 << 64) - 1), base.mode)
        sizes.append(len(mo_botk_build(pairs, objs, rand)) / k)
    mean = statistics.fmean(sizes)
    se = statistics.stdev(sizes) / math.sqrt(trials) if trials > 1 else 0.0
    return OverheadEstimate(mean, se, trials)


__all__ = [
    "AUX", "RESERVE", "SAMPLE", "MultiBotkBuilder", "MultiBotkRecord", "MultiBotkSample",
    "MultiPpsBuilder", "MultiPpsSample", "OverheadEstimate", "UpperBoundSample", "base_probabilities",
    "mo_botk_build", "mo_botk_merge", "mo_botk_overhead", "mo_pps_build", "mo_pps_merge",
    "mo_pps_overhead", "mo_pps_probability", "ub_pps_build",
]
