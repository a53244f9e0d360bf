"""Universal samples: one sample serving every monotone statistic, or every cap.

The universal monotone sample is the union of the bottom-k samples of all
threshold functions ``thresh_T``.  A key is in it iff fewer than ``k`` keys
of weight at least its own have a smaller ``u``.  All keys of one weight
share the conditional probability ``p(w)``: the ``(k+1)``-st smallest ``u``
among keys of weight ``>= w``, or 1 when there are at most ``k`` such keys.
Two equivalent constructions are provided, a scan by decreasing weight and
a scan by increasing ``u``.

The universal capping sample is the union of the bottom-k samples of all
``cap:T`` functions.  A key belongs to it iff ``h + l < k`` where ``h``
counts heavier-or-equal keys with smaller ``u`` and ``l`` counts lighter
keys with a smaller seed ``r/w``.

Keys with weight 0 are never sampled and are ignored.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass
from typing import Any, Iterator

from .core import Key, RandSource, as_weights, inclusion_probability, key_bytes, rank_from_uniform
from .errors import ParameterMismatch
from .single import _check_rand, _pairs

_INF_ORD = (math.inf, b"")


class _Desc:
    """Byte string with reversed order, so heapq can act as a max-heap on (u, kb)."""

    __slots__ = ("kb",)

    def __init__(self, kb: bytes):
        self.kb = kb

    def __lt__(self, other):
        return self.kb > other.kb

    def __eq__(self, other):
        return self.kb == other.kb


@dataclass(frozen=True)
class MonotoneEntry:
    key: Key
    weight: float
    u: float
    p: float | None = None  # None for auxiliary keys


@dataclass(frozen=True)
class UniversalMonotoneSample:
    k: int
    rand: RandSource
    entries: tuple[MonotoneEntry, ...]
    aux: tuple[MonotoneEntry, ...]
    n_processed: int

    kind = "universal_monotone"

    def __len__(self):
        return len(self.entries)

    def keys(self) -> list[Key]:
        return [e.key for e in self.entries]

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for e in self.entries:
            yield e.key, e.weight, e.p

    def merge(self, other: "UniversalMonotoneSample") -> "UniversalMonotoneSample":
        return universal_monotone_merge(self, other)


def _records(data: Any, rand: RandSource) -> tuple[list[tuple[Key, float, float, bytes]], int]:
    """Aggregate by max weight; return positive-weight ``(key, w, u, kb)`` and the element count."""
    weights: dict[Key, float] = {}
    n = 0
    for k, w in _pairs(data):
        n += 1
        prev = weights.get(k)
        if prev is None or w > prev:
            weights[k] = w
    recs = [(k, w, rand.u(k), key_bytes(k)) for k, w in weights.items() if w > 0]
    return recs, n


def _check_k(k: int) -> None:
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be an int >= 1, got {k!r}")


def _finish(k, rand, sampled, aux, p, n) -> UniversalMonotoneSample:
    entries = tuple(MonotoneEntry(key, w, u, p[w])
                    for key, w, u, kb in sorted(sampled, key=lambda r: r[3]))
    zs = tuple(MonotoneEntry(key, w, u) for key, w, u, kb in sorted(aux, key=lambda r: r[3]))
    return UniversalMonotoneSample(k, rand, entries, zs, n)


def _scan_by_weight(recs, k):
    heap: list = []  # max-heap on (u, kb) of the k smallest seen so far
    p: dict[float, float] = {}
    sampled, aux = [], []
    prevw, ptau = None, _INF_ORD
    for rec in sorted(recs, key=lambda r: (-r[1], r[2], r[3])):
        key, w, u, kb = rec
        o = (u, kb)
        if len(heap) < k:
            sampled.append(rec)
            heapq.heappush(heap, (-u, _Desc(kb)))
            p[w] = 1.0
            prevw, ptau = w, _INF_ORD
            continue
        top = (-heap[0][0], heap[0][1].kb)
        if o < top:
            sampled.append(rec)
            p[w] = top[0]
            prevw, ptau = w, top
            heapq.heapreplace(heap, (-u, _Desc(kb)))
        elif w == prevw and o < ptau:
            # the (k+1)-st smallest u at this weight; needed for p(w)
            aux.append(rec)
            p[w] = u
            ptau = o
    return sampled, aux, p


def _scan_by_u(recs, k):
    heap: list = []  # min-heap on (w, -u, reversed kb)
    p: dict[float, float] = {}
    sampled, aux = [], []
    for rec in sorted(recs, key=lambda r: (r[2], r[3])):
        key, w, u, kb = rec
        if len(heap) < k:
            sampled.append(rec)
            heapq.heappush(heap, (w, -u, _Desc(kb)))
            continue
        wy = heap[0][0]
        if w > wy:
            sampled.append(rec)
            p.setdefault(wy, u)
            heapq.heapreplace(heap, (w, -u, _Desc(kb)))
        elif w == wy and w not in p:
            aux.append(rec)
            p[w] = u
    for item in heap:
        p.setdefault(item[0], 1.0)
    return sampled, aux, p


def universal_monotone_by_weight(data: Any, k: int, rand: RandSource) -> UniversalMonotoneSample:
    """Scan keys by decreasing weight, then increasing ``u``."""
    _check_k(k)
    recs, n = _records(data, rand)
    return _finish(k, rand, *_scan_by_weight(recs, k), n)


def universal_monotone_by_u(data: Any, k: int, rand: RandSource) -> UniversalMonotoneSample:
    """Scan keys by increasing ``u``; same output as :func:`universal_monotone_by_weight`."""
    _check_k(k)
    recs, n = _records(data, rand)
    return _finish(k, rand, *_scan_by_u(recs, k), n)


universal_monotone_build = universal_monotone_by_weight


def universal_monotone_merge(a: UniversalMonotoneSample, b: UniversalMonotoneSample) -> UniversalMonotoneSample:
    """Rebuild from the sampled and auxiliary keys of both inputs."""
    if a.k != b.k:
        raise _mismatch("k", a.k, b.k)
    _check_rand(a.rand, b.rand)
    pairs = [(e.key, e.weight) for e in a.entries + a.aux + b.entries + b.aux]
    out = universal_monotone_by_weight(pairs, a.k, a.rand)
    return UniversalMonotoneSample(out.k, out.rand, out.entries, out.aux, a.n_processed + b.n_processed)


def monotone_conditional_probability(sample: UniversalMonotoneSample, key: Key) -> float:
    """Recompute ``p`` of a sampled key from the retained keys alone."""
    entry = next((e for e in sample.entries if e.key == key), None)
    if entry is None:
        raise KeyError(f"key {key!r} is not in the sample")
    heavier = sorted((e.u, key_bytes(e.key)) for e in sample.entries + sample.aux
                     if e.weight >= entry.weight)
    return 1.0 if len(heavier) <= sample.k else heavier[sample.k][0]


def monotone_base_probability(data: Any, key: Key) -> float:
    """``max_T thresh_T(w_x) / sum thresh_T`` = ``1 / |{y : w_y >= w_x}|`` (0 for weight 0)."""
    weights = as_weights(data)
    if key not in weights:
        raise KeyError(f"key {key!r} is not in the data")
    w = weights[key]
    if w <= 0:
        return 0.0
    return 1.0 / sum(1 for v in weights.values() if v >= w)


# -- universal capping ----------------------------------------------------------

SAMPLE, AUX, RESERVE = "sample", "aux", "reserve"


@dataclass(frozen=True)
class CappingRecord:
    key: Key
    weight: float
    u: float
    h: int
    l: int  # noqa: E741
    role: str
    p: float | None = None


@dataclass(frozen=True)
class UniversalCappingSample:
    """Keys with ``h + l <= k``; those with ``h + l < k`` are the sample."""

    k: int
    rand: RandSource
    records: tuple[CappingRecord, ...]
    n_processed: int

    kind = "universal_capping"

    @property
    def entries(self) -> tuple[CappingRecord, ...]:
        return tuple(r for r in self.records if r.role == SAMPLE)

    @property
    def aux(self) -> tuple[CappingRecord, ...]:
        return tuple(r for r in self.records if r.role == AUX)

    def __len__(self):
        return sum(1 for r in self.records if r.role == SAMPLE)

    def keys(self) -> list[Key]:
        return [r.key for r in self.records if r.role == SAMPLE]

    def probabilities(self) -> Iterator[tuple[Key, float, float]]:
        for r in self.records:
            if r.role == SAMPLE:
                yield r.key, r.weight, r.p

    def merge(self, other: "UniversalCappingSample") -> "UniversalCappingSample":
        return universal_capping_merge(self, other)


def _capping(recs, k, rand, n) -> UniversalCappingSample:
    mode = rand.mode
    # pass 1: h = #{y : w_y >= w_x, (u_y, kb_y) < (u_x, kb_x)}, keep h <= k
    smallest: list = []
    survivors = []
    for key, w, u, kb in sorted(recs, key=lambda r: (-r[1], r[2], r[3])):
        o = (u, kb)
        h = bisect.bisect_left(smallest, o)
        if h > k:
            continue
        bisect.insort(smallest, o)
        del smallest[k + 1:]
        survivors.append((key, w, u, kb, h))

    # pass 2: l = #{y : w_y < w_x, r_y/w_y < r_x/w_x}, counted over survivors only,
    # which is exact whenever h + l <= k
    lighter: list = []
    retained = []
    survivors.sort(key=lambda r: r[1])
    i = 0
    while i < len(survivors):
        j = i
        while j < len(survivors) and survivors[j][1] == survivors[i][1]:
            j += 1
        group = [(rec, (rank_from_uniform(rec[2], mode) / rec[1], rec[3])) for rec in survivors[i:j]]
        for rec, s in group:
            l = bisect.bisect_left(lighter, s)  # noqa: E741
            if rec[4] + l <= k:
                retained.append((*rec, l))
        for _, s in group:
            bisect.insort(lighter, s)
        del lighter[k + 1:]
        i = j

    # pass 3: tau for each sampled key from the cap:w_x seeds of retained keys
    ranks = [(rank_from_uniform(r[2], mode), r[1], r[3], r[0]) for r in retained]
    probs: dict[Key, float] = {}
    aux = set()
    for key, w, u, kb, h, l in retained:
        if h + l >= k:
            continue
        seeds = heapq.nsmallest(k + 1, ((r / min(w, wy), kby, ky) for r, wy, kby, ky in ranks))
        if len(seeds) > k:
            tau, _, ytau = seeds[k]
            aux.add(ytau)
        else:
            tau = math.inf
        probs[key] = inclusion_probability(mode, w, tau)

    out = []
    for key, w, u, kb, h, l in sorted(retained, key=lambda r: r[3]):
        if key in probs:
            out.append(CappingRecord(key, w, u, h, l, SAMPLE, probs[key]))
        else:
            out.append(CappingRecord(key, w, u, h, l, AUX if key in aux else RESERVE))
    return UniversalCappingSample(k, rand, tuple(out), n)


def universal_capping_build(data: Any, k: int, rand: RandSource) -> UniversalCappingSample:
    _check_k(k)
    recs, n = _records(data, rand)
    return _capping(recs, k, rand, n)


def universal_capping_merge(a: UniversalCappingSample, b: UniversalCappingSample) -> UniversalCappingSample:
    """Rebuild from all retained keys of both inputs."""
    if a.k != b.k:
        raise _mismatch("k", a.k, b.k)
    _check_rand(a.rand, b.rand)
    recs, _ = _records([(r.key, r.weight) for r in a.records + b.records], a.rand)
    return _capping(recs, a.k, a.rand, a.n_processed + b.n_processed)


def _mismatch(name, x, y):
    return ParameterMismatch(f"cannot merge universal samples with different {name}: {x!r} != {y!r}")


__all__ = [
    "CappingRecord", "MonotoneEntry", "UniversalCappingSample", "UniversalMonotoneSample",
    "monotone_base_probability", "monotone_conditional_probability", "universal_capping_build",
    "universal_capping_merge", "universal_monotone_build", "universal_monotone_by_u",
    "universal_monotone_by_weight", "universal_monotone_merge",
]
