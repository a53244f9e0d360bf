"""Input readers and the sample file format.

Input elements are ``key<TAB>weight`` lines or JSON lines
``{"key": ..., "w": ...}``; blank lines and ``#`` comments are skipped.

Sample files are canonical JSON: keys sorted, entries in key-byte order,
floats written in shortest round-trip form (bit-exact on reload), exact
totals as ``"numerator/denominator"`` strings and an infinite threshold as
``null``.
"""

from __future__ import annotations

import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator, TextIO

from .core import HASH_NAME, Element, Mode, RandSource
from .errors import DataError
from .multi import MultiBotkRecord, MultiBotkSample, MultiPpsSample, UpperBoundSample
from .objectives import Objective, stat_from_json, stat_to_json
from .single import BottomKEntry, BottomKSample, PoissonEntry, PoissonSample
from .universal import CappingRecord, MonotoneEntry, UniversalCappingSample, UniversalMonotoneSample

SCHEMA_VERSION = 1
MAX_REPORTED_LINES = 20


# -- elements -------------------------------------------------------------------

def _detect_format(path: str | None, first: str) -> str:
    if path and path.endswith((".jsonl", ".ndjson", ".json")):
        return "jsonl"
    return "jsonl" if first.lstrip().startswith("{") else "tsv"


def _parse_line(line: str, fmt: str) -> Element:
    if fmt == "jsonl":
        obj = json.loads(line)
        if not isinstance(obj, dict) or "key" not in obj or "w" not in obj:
            raise ValueError('expected an object with "key" and "w"')
        key, w = obj["key"], obj["w"]
        if isinstance(key, bool) or not isinstance(key, (str, int)):
            raise ValueError("key must be a string or an unsigned integer")
        if isinstance(w, bool) or not isinstance(w, (int, float)):
            raise ValueError("weight must be a number")
        return Element(key, float(w))
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) != 2:
        raise ValueError("expected key<TAB>weight")
    key, w = parts
    if not key:
        raise ValueError("empty key")
    return Element(key, float(w))


def iter_elements(source: str | Path | TextIO, fmt: str | None = None) -> Iterator[Element]:
    """Stream elements from a path or open text file.

    Bad lines do not stop the stream; after the last line a
    :class:`DataError` lists them with line numbers.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from iter_elements(fh, fmt or _detect_format(str(source), ""))
        return
    errors: list[tuple[int, str]] = []
    for lineno, line in enumerate(source, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if fmt is None:
            fmt = _detect_format(None, line)
        try:
            yield _parse_line(line, fmt)
        except (ValueError, TypeError) as exc:
            errors.append((lineno, str(exc)))
    if errors:
        shown = "; ".join(f"line {n}: {msg}" for n, msg in errors[:MAX_REPORTED_LINES])
        more = f" (and {len(errors) - MAX_REPORTED_LINES} more)" if len(errors) > MAX_REPORTED_LINES else ""
        raise DataError(f"{len(errors)} invalid input lines: {shown}{more}", [n for n, _ in errors])


def read_pairs(source, fmt: str | None = None) -> list[tuple[Any, float]]:
    return [(e.key, e.weight) for e in iter_elements(source, fmt)]


def parse_elements(text: str, fmt: str | None = None) -> list[tuple[Any, float]]:
    return read_pairs(io.StringIO(text), fmt)


# -- sample files -------------------------------------------------------------------

def _key_out(key):
    if isinstance(key, bytes):
        return {"hex": key.hex()}
    return key


def _key_in(obj):
    if isinstance(obj, dict):
        return bytes.fromhex(obj["hex"])
    return obj


def _frac_out(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _frac_in(s) -> Fraction:
    return Fraction(s)


def _tau_out(t: float):
    return None if t == math.inf else t


def _tau_in(t) -> float:
    return math.inf if t is None else float(t)


def _objs_out(objs) -> list:
    return [{"stat": stat_to_json(o.f), "k": o.k} for o in objs]


def _objs_in(objs) -> tuple[Objective, ...]:
    return tuple(Objective(stat_from_json(o["stat"]), int(o["k"])) for o in objs)


def sample_to_dict(sample) -> dict:
    d: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "kind": sample.kind,
        "hash": HASH_NAME,
        "hash_seed": sample.rand.hash_seed,
        "mode": sample.rand.mode.value,
    }
    kind = sample.kind
    if kind == "pps":
        d["objectives"] = _objs_out([sample.objective])
        d["totals"] = [_frac_out(sample.total)]
        d["entries"] = [{"key": _key_out(e.key), "w": e.weight, "u": e.u, "p": e.p} for e in sample.entries]
    elif kind in ("mo_pps", "ub_pps"):
        d["objectives"] = _objs_out(sample.objectives)
        d["totals"] = [_frac_out(t) for t in sample.totals]
        d["entries"] = [{"key": _key_out(e.key), "w": e.weight, "u": e.u, "p": e.p} for e in sample.entries]
        if kind == "mo_pps":
            d["warnings"] = list(sample.warnings)
    elif kind == "botk":
        d["objectives"] = _objs_out([sample.objective])
        d["tau"] = _tau_out(sample.tau)
        rec = lambda e: {"key": _key_out(e.key), "w": e.weight, "u": e.u, "seed": e.seed}  # noqa: E731
        d["entries"] = [rec(e) for e in sample.entries]
        d["threshold_entry"] = None if sample.threshold_entry is None else rec(sample.threshold_entry)
    elif kind == "mo_botk":
        d["objectives"] = _objs_out(sample.objectives)
        d["taus"] = [_tau_out(t) for t in sample.taus]
        d["records"] = [{"key": _key_out(r.key), "w": r.weight, "u": r.u, "role": r.role, "p": r.p}
                        for r in sample.records]
    elif kind == "universal_monotone":
        d["k"] = sample.k
        d["n_processed"] = sample.n_processed
        d["entries"] = [{"key": _key_out(e.key), "w": e.weight, "u": e.u, "p": e.p} for e in sample.entries]
        d["aux"] = [{"key": _key_out(e.key), "w": e.weight, "u": e.u, "role": "aux"} for e in sample.aux]
    elif kind == "universal_capping":
        d["k"] = sample.k
        d["n_processed"] = sample.n_processed
        d["records"] = [{"key": _key_out(r.key), "w": r.weight, "u": r.u, "h": r.h, "l": r.l,
                         "role": r.role, "p": r.p} for r in sample.records]
    else:
        raise ValueError(f"cannot serialize sample kind {kind!r}")
    return d


def sample_from_dict(d: dict):
    try:
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        if d.get("hash") != HASH_NAME:
            raise DataError(f"unsupported hash {d.get('hash')!r}")
        rand = RandSource(int(d["hash_seed"]), Mode(d["mode"]))
        kind = d["kind"]
        if kind == "pps":
            (obj,) = _objs_in(d["objectives"])
            entries = tuple(PoissonEntry(_key_in(e["key"]), float(e["w"]), e["u"], e["p"]) for e in d["entries"])
            return PoissonSample(obj, rand, _frac_in(d["totals"][0]), entries)
        if kind in ("mo_pps", "ub_pps"):
            objs = _objs_in(d["objectives"])
            totals = tuple(_frac_in(t) for t in d["totals"])
            entries = tuple(PoissonEntry(_key_in(e["key"]), float(e["w"]), e["u"], e["p"]) for e in d["entries"])
            if kind == "mo_pps":
                return MultiPpsSample(objs, rand, totals, entries, tuple(d.get("warnings", ())))
            return UpperBoundSample(objs, rand, totals, entries)
        if kind == "botk":
            (obj,) = _objs_in(d["objectives"])
            rec = lambda e: BottomKEntry(_key_in(e["key"]), float(e["w"]), e["u"], e["seed"])  # noqa: E731
            thr = d.get("threshold_entry")
            return BottomKSample(obj, rand, tuple(rec(e) for e in d["entries"]), None if thr is None else rec(thr))
        if kind == "mo_botk":
            objs = _objs_in(d["objectives"])
            records = tuple(MultiBotkRecord(_key_in(r["key"]), float(r["w"]), r["u"], r["role"], r.get("p"))
                            for r in d["records"])
            return MultiBotkSample(objs, rand, tuple(_tau_in(t) for t in d["taus"]), records)
        if kind == "universal_monotone":
            entries = tuple(MonotoneEntry(_key_in(e["key"]), float(e["w"]), e["u"], e["p"]) for e in d["entries"])
            aux = tuple(MonotoneEntry(_key_in(e["key"]), float(e["w"]), e["u"]) for e in d["aux"])
            return UniversalMonotoneSample(int(d["k"]), rand, entries, aux, int(d["n_processed"]))
        if kind == "universal_capping":
            records = tuple(CappingRecord(_key_in(r["key"]), float(r["w"]), r["u"], int(r["h"]), int(r["l"]),
                                          r["role"], r.get("p")) for r in d["records"])
            return UniversalCappingSample(int(d["k"]), rand, records, int(d["n_processed"]))
        raise DataError(f"unknown sample kind {kind!r}")
    except DataError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed sample file: {exc!r}") from None


def dumps_sample(sample) -> str:
    return json.dumps(sample_to_dict(sample), sort_keys=True, allow_nan=False) + "\n"


def loads_sample(text: str):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"sample file is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise DataError("sample file must contain a JSON object")
    return sample_from_dict(d)


def write_sample(sample, path: str | Path) -> None:
    Path(path).write_text(dumps_sample(sample), encoding="utf-8")


def read_sample(path: str | Path):
    return loads_sample(Path(path).read_text(encoding="utf-8"))


__all__ = [
    "SCHEMA_VERSION", "dumps_sample", "iter_elements", "loads_sample", "parse_elements", "read_pairs",
    "read_sample", "sample_from_dict", "sample_to_dict", "write_sample",
]
