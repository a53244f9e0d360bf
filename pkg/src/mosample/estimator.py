"""Inverse-probability segment-sum estimates from any sample kind.

Every sample exposes ``probabilities()`` yielding ``(key, weight, p)`` for
its sampled keys, where ``p`` is the exact, conditional or upper-bound
inclusion probability.  The estimate of ``sum(g; H)`` is the sum of
``g(w)/p`` over sampled keys in ``H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .core import as_weights
from .errors import ContractViolation, CorruptSampleError
from .objectives import StatFn, segment_filter


@dataclass(frozen=True)
class EstimateResult:
    value: float
    contributing_keys: int
    sample_kind: str
    warnings: tuple[str, ...] = field(default=())


def _sample_functions(sample) -> list[StatFn] | None:
    """Functions whose positive support the sample covers; None for universal kinds."""
    if hasattr(sample, "objectives"):
        return [o.f for o in sample.objectives]
    if hasattr(sample, "objective"):
        return [sample.objective.f]
    return None


def _floor_covers(f_floor, g_floor) -> bool:
    (tf, sf), (tg, sg) = f_floor, g_floor
    return tf < tg or (tf == tg and (not sf or sg))


def support_warnings(sample, g: StatFn, data: Any = None, segment: Any = None) -> list[str]:
    """Describe keys with ``g > 0`` that the sample could never include.

    Estimates remain defined but are biased low for such keys.  With
    ``data`` the affected keys are counted; without it the check is
    structural, based on the support floors of the functions.
    """
    fs = _sample_functions(sample)  # None: universal, covers every positive weight
    if data is not None:
        keep = segment_filter(segment)
        missed = 0
        for key, w in as_weights(data).items():
            if not keep(key) or g.value(key, w) <= 0:
                continue
            covered = w > 0 if fs is None else any(f.value(key, w) > 0 for f in fs)
            if not covered:
                missed += 1
        if missed:
            return [f"{missed} keys have {g.spec} > 0 but zero sampling probability; "
                    "the estimate is biased low"]
        return []
    g_floor = g.support_floor()
    floors = [(0.0, True)] if fs is None else [f.support_floor() for f in fs]
    if g_floor is not None and any(fl is not None and _floor_covers(fl, g_floor) for fl in floors):
        return []
    if g_floor is None or any(fl is None for fl in floors):
        return [f"cannot verify that the sample covers the support of {g.spec}; "
                "pass the data to count uncovered keys"]
    return [f"{g.spec} is positive on weights the sample's objectives give zero "
            "probability; the estimate is biased low"]


def estimate_segment_sum(sample, g: StatFn, segment: Any = None, data: Any = None) -> EstimateResult:
    """``sum over sampled x in H of g(w_x) / p_x``."""
    keep = segment_filter(segment)
    terms = []
    for key, w, p in sample.probabilities():
        if not keep(key):
            continue
        if p is None or not p > 0 or p > 1:
            raise CorruptSampleError(f"sampled key {key!r} has invalid probability {p!r}")
        gv = g.value(key, w)
        if gv > 0:
            terms.append(gv / p)
    value = math.fsum(terms)
    warnings = tuple(support_warnings(sample, g, data, segment))
    return EstimateResult(value, len(terms), sample.kind, warnings)


def estimate_with_upper_bounds(sample, g: StatFn, segment: Any = None, data: Any = None) -> EstimateResult:
    """Estimate from a sample taken with upper-bound probabilities ``pi``."""
    if getattr(sample, "kind", None) != "ub_pps":
        raise ContractViolation(f"expected an upper-bound sample, got {getattr(sample, 'kind', sample)!r}")
    return estimate_segment_sum(sample, g, segment, data)


__all__ = ["EstimateResult", "estimate_segment_sum", "estimate_with_upper_bounds", "support_warnings"]
