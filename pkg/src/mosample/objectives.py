"""Statistic functions ``f(w)`` and objectives ``(f, k)``.

Built-in kinds: sum, count, thresh:T, cap:T, moment:p, nonnegative
combinations of those, and per-key tables.  The text form accepted by
:func:`parse_stat` is also what ``StatFn.spec`` produces, so specs
round-trip through sample files::

    sum | count | thresh:T | cap:T | moment:p | combo:[(a1,spec1),(a2,spec2),...]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping

from .core import Dataset, Key, as_weights, key_bytes


def _fmt(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


class StatFn:
    """Base class.  ``value(key, w)`` is the per-key evaluation used everywhere."""

    monotone = True
    per_key = False

    def __call__(self, w: float) -> float:
        return self.value(None, w)

    def value(self, key: Key, w: float) -> float:
        raise NotImplementedError

    @property
    def spec(self) -> str:
        raise NotImplementedError

    def support_floor(self):
        """``(T, strict)`` such that f(w) > 0 iff w > T (strict) or w >= T.

        ``None`` when positivity is not a function of the weight alone.
        """
        return None

    def __str__(self):
        return self.spec


@dataclass(frozen=True)
class Sum(StatFn):
    def value(self, key, w):
        return w

    @property
    def spec(self):
        return "sum"

    def support_floor(self):
        return (0.0, True)


@dataclass(frozen=True)
class Count(StatFn):
    def value(self, key, w):
        return 1.0 if w > 0 else 0.0

    @property
    def spec(self):
        return "count"

    def support_floor(self):
        return (0.0, True)


@dataclass(frozen=True)
class Threshold(StatFn):
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"threshold needs T > 0, got {self.T}")
        object.__setattr__(self, "T", float(self.T))

    def value(self, key, w):
        return 1.0 if w >= self.T else 0.0

    @property
    def spec(self):
        return f"thresh:{_fmt(self.T)}"

    def support_floor(self):
        return (self.T, False)


@dataclass(frozen=True)
class Cap(StatFn):
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"capping needs T > 0, got {self.T}")
        object.__setattr__(self, "T", float(self.T))

    def value(self, key, w):
        return w if w < self.T else self.T

    @property
    def spec(self):
        return f"cap:{_fmt(self.T)}"

    def support_floor(self):
        return (0.0, True)


@dataclass(frozen=True)
class Moment(StatFn):
    p: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"moment needs p > 0, got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    def value(self, key, w):
        if w <= 0:
            return 0.0
        return w ** self.p

    @property
    def spec(self):
        return f"moment:{_fmt(self.p)}"

    def support_floor(self):
        return (0.0, True)


@dataclass(frozen=True)
class Combo(StatFn):
    terms: tuple[tuple[float, StatFn], ...]

    def __post_init__(self):
        terms = tuple((float(a), f) for a, f in self.terms)
        if not terms:
            raise ValueError("combo needs at least one term")
        for a, f in terms:
            if not a >= 0 or not math.isfinite(a):
                raise ValueError(f"combo coefficients must be finite and >= 0, got {a}")
            if not isinstance(f, StatFn):
                raise TypeError(f"combo term is not a StatFn: {f!r}")
        object.__setattr__(self, "terms", terms)

    @property
    def monotone(self):
        return all(f.monotone for _, f in self.terms)

    @property
    def per_key(self):
        return any(f.per_key for _, f in self.terms)

    def value(self, key, w):
        return sum(a * f.value(key, w) for a, f in self.terms)

    @property
    def spec(self):
        inner = ",".join(f"({_fmt(a)},{f.spec})" for a, f in self.terms)
        return f"combo:[{inner}]"

    def support_floor(self):
        floors = [f.support_floor() for a, f in self.terms if a > 0]
        if not floors or any(fl is None for fl in floors):
            return None
        return min(floors, key=lambda fl: (fl[0], not fl[1]))


@dataclass(frozen=True)
class Table(StatFn):
    """Arbitrary per-key values; keys not listed evaluate to 0."""

    items: tuple[tuple[Key, float], ...]
    name: str | None = None
    _lookup: dict = field(default=None, compare=False, repr=False, hash=False)

    monotone = False
    per_key = True

    def __post_init__(self):
        lookup = {}
        for k, v in self.items:
            v = float(v)
            if not v >= 0 or not math.isfinite(v):
                raise ValueError(f"table value for {k!r} must be finite and >= 0")
            lookup[k] = v
        items = tuple(sorted(lookup.items(), key=lambda kv: key_bytes(kv[0])))
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def from_mapping(cls, values: Mapping[Key, float], name: str | None = None) -> "Table":
        return cls(tuple(values.items()), name)

    def value(self, key, w):
        return self._lookup.get(key, 0.0)

    def as_dict(self) -> dict:
        return dict(self._lookup)

    @property
    def spec(self):
        return f"table:{self.name}" if self.name else "table"


@dataclass(frozen=True)
class Objective:
    f: StatFn
    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"objective size parameter k must be an int >= 1, got {self.k!r}")
        if isinstance(self.f, str):
            object.__setattr__(self, "f", parse_stat(self.f))


def evaluate(f: StatFn, w: float, key: Key = None) -> float:
    if w < 0:
        raise ValueError("weights are nonnegative")
    return f.value(key, w)


# -- text specs -------------------------------------------------------------

def _split_top(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur or parts:
        parts.append("".join(cur))
    return parts


def parse_stat(spec: str) -> StatFn:
    """Parse a statistic spec such as ``cap:5`` or ``combo:[(1,sum),(2,thresh:10)]``."""
    s = spec.strip()
    name, _, arg = s.partition(":")
    name = name.strip().lower()
    arg = arg.strip()
    try:
        if name == "sum" and not arg:
            return Sum()
        if name == "count" and not arg:
            return Count()
        if name in ("thresh", "threshold"):
            return Threshold(float(arg))
        if name in ("cap", "capp"):
            return Cap(float(arg))
        if name == "moment":
            return Moment(float(arg))
        if name == "combo":
            if not (arg.startswith("[") and arg.endswith("]")):
                raise ValueError("combo terms must be wrapped in [...]")
            terms = []
            for part in _split_top(arg[1:-1]):
                part = part.strip()
                if not (part.startswith("(") and part.endswith(")")):
                    raise ValueError(f"bad combo term {part!r}")
                coef, _, inner = part[1:-1].partition(",")
                terms.append((float(coef), parse_stat(inner)))
            return Combo(tuple(terms))
    except ValueError as exc:
        raise ValueError(f"invalid statistic spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown statistic spec {spec!r}")


def stat_to_json(f: StatFn) -> Any:
    if isinstance(f, Table):
        return {"table": [[k, v] for k, v in f.items], "name": f.name}
    if isinstance(f, Combo) and f.per_key:
        return {"combo": [[a, stat_to_json(g)] for a, g in f.terms]}
    return f.spec


def stat_from_json(obj: Any) -> StatFn:
    if isinstance(obj, str):
        return parse_stat(obj)
    if "table" in obj:
        return Table(tuple((k, v) for k, v in obj["table"]), obj.get("name"))
    if "combo" in obj:
        return Combo(tuple((a, stat_from_json(g)) for a, g in obj["combo"]))
    raise ValueError(f"cannot decode statistic {obj!r}")


# -- exact statistics -------------------------------------------------------

def segment_filter(segment: Any) -> Callable[[Key], bool]:
    """Normalize a segment: None (all keys), a predicate, ``"prefix:P"`` or a key collection."""
    if segment is None:
        return lambda key: True
    if callable(segment):
        return segment
    if isinstance(segment, str):
        if segment.startswith("prefix:"):
            prefix = segment[len("prefix:"):]
            pb = prefix.encode("utf-8")
            return lambda key: key_bytes(key).startswith(pb)
        raise ValueError(f"segment string must look like prefix:P, got {segment!r}")
    members = frozenset(segment)
    return members.__contains__


def segment_sum_exact(data: Dataset | Mapping | Iterable, f: StatFn, segment: Any = None) -> float:
    """Exact ``sum_{x in H} f(w_x)``."""
    keep = segment_filter(segment)
    return math.fsum(f.value(k, w) for k, w in as_weights(data).items() if keep(k))


def disparity(f: StatFn, g: StatFn, data: Dataset | Mapping | Iterable) -> float:
    """``max_x f/g * max_x g/f`` over keys of ``data``; ``inf`` when supports differ."""
    fg = gf = None
    for k, w in as_weights(data).items():
        a, b = f.value(k, w), g.value(k, w)
        if a == 0 and b == 0:
            continue
        if a == 0 or b == 0:
            return math.inf
        # exact ratios, so an exact rescaling gives exactly 1
        r = Fraction(a) / Fraction(b)
        fg = r if fg is None else max(fg, r)
        gf = 1 / r if gf is None else max(gf, 1 / r)
    if fg is None:
        return 1.0
    return float(fg * gf)


def is_monotone_on(f: StatFn, weights: Iterable[float]) -> bool:
    """Check f is non-decreasing on the given weights (sorted internally)."""
    ws = sorted(set(weights))
    vals = [f(w) for w in ws]
    return all(a <= b for a, b in zip(vals, vals[1:]))
