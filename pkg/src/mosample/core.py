"""Keys, elements, datasets and the shared hash-based randomization.

All samplers are coordinated through a :class:`RandSource`: the uniform
value ``u`` of a key depends only on ``(hash_seed, key)``, so samples taken
for different objectives, shards or sample sizes agree on every key.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Iterable, Iterator, Mapping

import xxhash

from .errors import DataError

HASH_NAME = "xxh64"
"""Name of the 64-bit keyed hash recorded in every sample file."""

_U_SCALE = 2.0 ** -52
_SEED_MASK = (1 << 64) - 1

Key = Hashable  # str, bytes or an unsigned 64-bit int


class Mode(str, enum.Enum):
    """Rank transform applied to ``u``: ``r = u`` or ``r = -ln(1 - u)``."""

    PRIORITY = "priority"
    PPSWOR = "ppswor"


def key_bytes(key: Key) -> bytes:
    """Canonical byte encoding of a key, used for hashing and tie-breaking."""
    if isinstance(key, bytes):
        return key
    if isinstance(key, str):
        return key.encode("utf-8")
    if isinstance(key, int) and not isinstance(key, bool):
        if not 0 <= key <= _SEED_MASK:
            raise TypeError(f"integer keys must fit in 64 unsigned bits, got {key}")
        return key.to_bytes(8, "big")
    raise TypeError(f"unsupported key type {type(key).__name__}")


def uniform_from_bytes(kb: bytes, hash_seed: int) -> float:
    # top 52 bits of the hash, centred in their cell: (2m+1) / 2^53 is exact
    # in float64 and lies strictly inside (0, 1)
    return ((xxhash.xxh64_intdigest(kb, hash_seed) >> 12) + 0.5) * _U_SCALE


class ExactSum:
    """Running exact sum of finite floats.

    Sample totals are kept exact so that a merge of shard totals equals the
    one-shot total bit for bit, whatever the summation order.
    """

    __slots__ = ("_acc",)

    def __init__(self):
        self._acc = 0

    def add(self, v: float) -> None:
        n, d = float(v).as_integer_ratio()
        # every float is n / 2^e with e <= 1074
        self._acc += n << (1074 - d.bit_length() + 1)

    def value(self) -> Fraction:
        return Fraction(self._acc, 1 << 1074)


def exact_sum(values: Iterable[float]) -> Fraction:
    acc = ExactSum()
    for v in values:
        acc.add(v)
    return acc.value()


def rank_from_uniform(u: float, mode: Mode) -> float:
    if mode is Mode.PRIORITY:
        return u
    return -math.log1p(-u)


def seed_from_uniform(u: float, f_value: float, mode: Mode) -> float:
    """The f-seed ``r(u) / f``; ``+inf`` when ``f == 0``."""
    if f_value <= 0.0:
        return math.inf
    return rank_from_uniform(u, mode) / f_value


def inclusion_probability(mode: Mode, f_value: float, tau: float) -> float:
    """``Pr[r(u)/f < tau]`` for ``u ~ U(0,1)``: the bottom-k conditional probability."""
    if tau == math.inf:
        return 1.0 if f_value > 0 else 0.0
    x = f_value * tau
    if mode is Mode.PRIORITY:
        return min(1.0, x)
    return -math.expm1(-x)


@dataclass(frozen=True)
class RandSource:
    """Seeded per-key randomization shared by all samplers.

    ``prefetch`` returns an equal RandSource that memoizes ``u`` for a known
    key set; it only trades memory for speed when the same keys are hashed
    many times (Monte Carlo harnesses).
    """

    hash_seed: int
    mode: Mode = Mode.PPSWOR
    _memo: dict | None = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if not isinstance(self.hash_seed, int) or not 0 <= self.hash_seed <= _SEED_MASK:
            raise ValueError(f"hash_seed must be an unsigned 64-bit int, got {self.hash_seed!r}")
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))

    def u(self, key: Key) -> float:
        memo = self._memo
        if memo is not None:
            hit = memo.get(key)
            if hit is not None:
                return hit
        return uniform_from_bytes(key_bytes(key), self.hash_seed)

    def rank(self, key: Key) -> float:
        return rank_from_uniform(self.u(key), self.mode)

    def seed(self, key: Key, f_value: float) -> float:
        return seed_from_uniform(self.u(key), f_value, self.mode)

    def with_mode(self, mode: Mode) -> "RandSource":
        return dataclasses.replace(self, mode=Mode(mode))

    def prefetch(self, keys: Iterable[Key]) -> "RandSource":
        seed = self.hash_seed
        memo = {k: uniform_from_bytes(key_bytes(k), seed) for k in keys}
        return dataclasses.replace(self, _memo=memo)


def uniform_from_key(rand: RandSource, key: Key) -> float:
    return rand.u(key)


def f_seed(rand: RandSource, key: Key, f_value: float) -> float:
    if f_value < 0:
        raise ValueError("f_value must be nonnegative")
    return rand.seed(key, f_value)


@dataclass(frozen=True)
class Element:
    key: Key
    weight: float

    def __post_init__(self):
        w = self.weight
        if isinstance(w, bool) or not isinstance(w, (int, float)):
            raise DataError(f"weight of {self.key!r} is not a number: {w!r}")
        w = float(w)
        if not math.isfinite(w) or w < 0:
            raise DataError(f"weight of {self.key!r} must be finite and >= 0, got {w}")
        object.__setattr__(self, "weight", w)
        key_bytes(self.key)


@dataclass(frozen=True)
class Dataset:
    """A finite collection of elements; ``aggregated`` promises unique keys."""

    elements: tuple[Element, ...] = ()
    aggregated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.aggregated:
            seen = set()
            for e in self.elements:
                if e.key in seen:
                    raise DataError(f"duplicate key {e.key!r} in an aggregated dataset")
                seen.add(e.key)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Key, float]] | Mapping[Key, float],
                   aggregated: bool = False) -> "Dataset":
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
            aggregated = True
        return cls(tuple(Element(k, w) for k, w in pairs), aggregated)

    def __iter__(self) -> Iterator[Element]:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def weights(self) -> dict[Key, float]:
        """Key -> weight, taking the maximum over repeated keys."""
        out: dict[Key, float] = {}
        for e in self.elements:
            prev = out.get(e.key)
            if prev is None or e.weight > prev:
                out[e.key] = e.weight
        return out

    def keys(self) -> list[Key]:
        return list(self.weights())

    def require_unique(self) -> None:
        if self.aggregated:
            return
        seen = set()
        for e in self.elements:
            if e.key in seen:
                raise DataError(f"duplicate key {e.key!r}; pps sampling needs aggregated data")
            seen.add(e.key)


def aggregate(data: Dataset | Iterable[Element]) -> Dataset:
    """Collapse repeated keys to their maximum weight (first-seen key order)."""
    if isinstance(data, Dataset) and data.aggregated:
        return data
    if not isinstance(data, Dataset):
        data = Dataset(tuple(data))
    return Dataset.from_pairs(data.weights())


def as_weights(data: Any) -> dict[Key, float]:
    """Accept a Dataset, a mapping or an iterable of pairs/elements."""
    if isinstance(data, Dataset):
        return data.weights()
    if isinstance(data, Mapping):
        return dict(data)
    out: dict[Key, float] = {}
    for item in data:
        k, w = (item.key, item.weight) if isinstance(item, Element) else item
        prev = out.get(k)
        if prev is None or w > prev:
            out[k] = w
    return out
