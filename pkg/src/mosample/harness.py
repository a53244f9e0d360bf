"""Monte Carlo and brute-force quality checks.

Trials vary only the hash seed; datasets stay fixed, so the randomness is
exactly the randomness of the ``u`` values.  Slack constants are part of
each report so a failure can be reproduced from the report alone.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import binom

from .core import Dataset, Key, Mode, RandSource, as_weights, exact_sum, key_bytes, rank_from_uniform, \
    uniform_from_bytes
from .estimator import estimate_segment_sum
from .multi import MultiBotkSample, mo_botk_build, mo_pps_build
from .objectives import (Cap, Count, Moment, Objective, StatFn, Sum, Table, Threshold, disparity,
                         segment_filter)
from .single import botk_build, pps_build
from .universal import universal_capping_build, universal_monotone_build

_MASK = (1 << 64) - 1

SAMPLER_KINDS = ("pps", "botk", "mo_pps", "mo_botk", "universal_monotone", "universal_capping")


def trial_seed(seed0: int, t: int) -> int:
    return (seed0 + t) & _MASK


@dataclass(frozen=True)
class SamplerConfig:
    """What to sample: a kind, its objectives (or ``k`` for universal kinds) and the rank mode."""

    kind: str
    objectives: tuple[Objective, ...] = ()
    k: int | None = None
    mode: Mode = Mode.PPSWOR

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.kind.startswith("universal"):
            if self.k is None:
                raise ValueError("universal samplers need k")
        elif not self.objectives:
            raise ValueError(f"{self.kind} needs objectives")
        if self.kind in ("pps", "botk") and len(self.objectives) != 1:
            raise ValueError(f"{self.kind} takes exactly one objective")

    @classmethod
    def named(cls, name: str, f: StatFn, k: int) -> "SamplerConfig":
        """``pps``, ``ppswor`` or ``priority`` for a single objective ``(f, k)``."""
        if name == "pps":
            return cls("pps", (Objective(f, k),))
        if name in ("ppswor", "priority"):
            return cls("botk", (Objective(f, k),), mode=Mode(name))
        raise ValueError(f"unknown sampler name {name!r}")

    @property
    def label(self) -> str:
        if self.kind.startswith("universal"):
            return f"{self.kind}(k={self.k},{self.mode.value})"
        objs = ",".join(f"{o.f.spec}/{o.k}" for o in self.objectives)
        return f"{self.kind}({objs},{self.mode.value})"

    def builder(self, data: Any) -> Callable[[RandSource], Any]:
        """A function ``rand -> sample``; pps totals are computed once."""
        ds = Dataset.from_pairs(as_weights(data))
        if self.kind == "pps":
            obj = self.objectives[0]
            total = exact_sum(obj.f.value(e.key, e.weight) for e in ds)
            return lambda rand: pps_build(ds, obj, rand, total)
        if self.kind == "mo_pps":
            totals = [exact_sum(o.f.value(e.key, e.weight) for e in ds) for o in self.objectives]
            return lambda rand: mo_pps_build(ds, self.objectives, rand, totals)
        if self.kind == "botk":
            return lambda rand: botk_build(ds, self.objectives[0], rand)
        if self.kind == "mo_botk":
            return lambda rand: mo_botk_build(ds, self.objectives, rand)
        if self.kind == "universal_monotone":
            return lambda rand: universal_monotone_build(ds, self.k, rand)
        return lambda rand: universal_capping_build(ds, self.k, rand)

    def cv_bound(self, data: Any, g: StatFn, q: float) -> tuple[float, float]:
        """``(bound, rho)``: the CV bound for estimating a segment of g-weight ``q``."""
        if q <= 0:
            return math.inf, math.inf
        if self.kind.startswith("universal"):
            kk = self.k - 1
            if kk <= 0:
                return math.inf, 1.0
            if self.kind == "universal_monotone":
                covered = g.monotone and not g.per_key
                rho = 1.0 if covered else math.inf
            elif isinstance(g, (Cap, Sum)):
                rho = 1.0
            else:
                ws = sorted({w for w in as_weights(data).values() if w > 0})
                rho = min((disparity(Cap(T), g, data) for T in ws), default=math.inf)
            return math.sqrt(rho / (q * kk)) if rho < math.inf else math.inf, rho
        drop = 1 if self.kind in ("botk", "mo_botk") else 0
        best, best_rho = math.inf, math.inf
        for o in self.objectives:
            kk = o.k - drop
            rho = disparity(o.f, g, data)
            if kk <= 0 or rho == math.inf:
                continue
            b = math.sqrt(rho / (q * kk))
            if b < best:
                best, best_rho = b, rho
        return best, best_rho

    def concentration_params(self, data: Any, g: StatFn) -> tuple[float, float] | None:
        """``(k_eff, rho)`` maximizing ``k / rho^2`` over objectives; None if undefined."""
        if self.kind.startswith("universal"):
            return (self.k - 1, 1.0) if self.k > 1 else None
        drop = 1 if self.kind in ("botk", "mo_botk") else 0
        best = None
        for o in self.objectives:
            rho = disparity(o.f, g, data)
            if rho == math.inf or o.k - drop <= 0:
                continue
            if best is None or (o.k - drop) / rho ** 2 > best[0] / best[1] ** 2:
                best = (o.k - drop, rho)
        return best


# -- CV, unbiasedness and concentration --------------------------------------

@dataclass
class TrialReport:
    label: str
    trials: int
    true_value: float
    q: float
    rho: float
    empirical_mean: float
    stderr: float
    empirical_cv: float
    bound_cv: float
    slack: float
    mean_size: float
    exceedance_counts: dict = field(default_factory=dict)

    @property
    def cv_ok(self) -> bool:
        return self.empirical_cv <= self.bound_cv * (1 + self.slack)

    @property
    def unbiased_ok(self) -> bool:
        if self.stderr == 0:
            return math.isclose(self.empirical_mean, self.true_value, rel_tol=1e-9, abs_tol=1e-12)
        return abs(self.empirical_mean - self.true_value) <= 3 * self.stderr

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["cv_ok"] = self.cv_ok
        d["unbiased_ok"] = self.unbiased_ok
        d["exceedance_counts"] = {str(k): v for k, v in self.exceedance_counts.items()}
        return d


def segment_mass(data: Any, g: StatFn, segment: Any = None) -> tuple[float, float]:
    """``(sum(g; H), q)`` with ``q = sum(g; H) / sum(g; all)``."""
    keep = segment_filter(segment)
    weights = as_weights(data)
    tot = exact_sum(g.value(k, w) for k, w in weights.items())
    part = exact_sum(g.value(k, w) for k, w in weights.items() if keep(k))
    return float(part), float(part / tot) if tot > 0 else 0.0


def sample_estimates(data: Any, config: SamplerConfig, g: StatFn, segment: Any = None,
                     trials: int = 1000, seed0: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Estimates of ``sum(g; H)`` and sample sizes over ``trials`` hash seeds."""
    build = config.builder(data)
    keep = segment_filter(segment)
    est = np.empty(trials)
    sizes = np.empty(trials)
    for t in range(trials):
        s = build(RandSource(trial_seed(seed0, t), config.mode))
        est[t] = estimate_segment_sum(s, g, keep).value
        sizes[t] = len(s)
    return est, sizes


def run_cv_trial(data: Any, config: SamplerConfig, g: StatFn, segment: Any = None, trials: int = 10_000,
                 seed0: int = 0, slack: float = 0.10, deltas: Sequence[float] = ()) -> TrialReport:
    """Empirical CV (root mean squared relative error) against the CV bound."""
    if trials < 100:
        raise ValueError("run_cv_trial needs at least 100 trials")
    true, q = segment_mass(data, g, segment)
    bound, rho = config.cv_bound(data, g, q)
    est, sizes = sample_estimates(data, config, g, segment, trials, seed0)
    mean = float(est.mean())
    se = float(est.std(ddof=1) / math.sqrt(trials))
    cv = float(math.sqrt(np.mean((est - true) ** 2)) / true) if true > 0 else 0.0
    exc = {d: _exceedances(est, true, d) for d in deltas}
    return TrialReport(config.label, trials, true, q, rho, mean, se, cv, bound, slack,
                       float(sizes.mean()), exc)


def run_query_grid(data: Any, config: SamplerConfig, queries: Sequence[tuple[StatFn, Any]],
                   trials: int = 10_000, seed0: int = 0, slack: float = 0.10) -> list[TrialReport]:
    """One report per ``(g, segment)`` query, all scored on the same sampled draws."""
    if trials < 100:
        raise ValueError("run_query_grid needs at least 100 trials")
    build = config.builder(data)
    keeps = [segment_filter(seg) for _, seg in queries]
    est = np.empty((trials, len(queries)))
    sizes = np.empty(trials)
    for t in range(trials):
        s = build(RandSource(trial_seed(seed0, t), config.mode))
        for j, ((g, _), keep) in enumerate(zip(queries, keeps)):
            est[t, j] = estimate_segment_sum(s, g, keep).value
        sizes[t] = len(s)
    out = []
    for j, (g, seg) in enumerate(queries):
        true, q = segment_mass(data, g, seg)
        bound, rho = config.cv_bound(data, g, q)
        col = est[:, j]
        cv = float(math.sqrt(np.mean((col - true) ** 2)) / true) if true > 0 else 0.0
        out.append(TrialReport(f"{config.label} g={g.spec}", trials, true, q, rho, float(col.mean()),
                               float(col.std(ddof=1) / math.sqrt(trials)), cv, bound, slack,
                               float(sizes.mean())))
    return out


def _exceedances(est: np.ndarray, true: float, delta: float) -> int:
    if delta <= 1:
        return int(np.sum(np.abs(est - true) > delta * true))
    return int(np.sum(est - true > delta * true))


def concentration_bound(q: float, k: float, rho: float, delta: float) -> float:
    """Tail bound on relative error ``delta``: two-sided for ``delta <= 1``, upper tail above."""
    a = q * k / rho ** 2
    if delta <= 1:
        return min(1.0, 2 * math.exp(-a * delta ** 2 / 3))
    return min(1.0, math.exp(-a * delta / 3))


@dataclass
class DeltaResult:
    delta: float
    exceedances: int
    rate: float
    bound: float
    allowed: int
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.exceedances <= self.allowed


@dataclass
class ConcentrationReport:
    label: str
    trials: int
    q: float
    k_eff: float
    rho: float
    confidence: float
    results: list[DeltaResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def as_dict(self) -> dict:
        return {"label": self.label, "trials": self.trials, "q": self.q, "k_eff": self.k_eff,
                "rho": self.rho, "confidence": self.confidence, "passed": self.passed,
                "results": [dict(r.__dict__, passed=r.passed) for r in self.results]}


def run_concentration_trial(data: Any, config: SamplerConfig, g: StatFn, segment: Any = None,
                            deltas: Sequence[float] = (0.5, 1.0), trials: int = 10_000, seed0: int = 0,
                            confidence: float = 0.99) -> ConcentrationReport:
    """Exceedance counts of relative error ``delta`` against the tail bound.

    A count passes when it is at most the ``confidence`` quantile of
    Binomial(trials, bound).  Bounds of 1 or more are reported as vacuous.
    """
    if any(not d > 0 for d in deltas):
        raise ValueError("deltas must be positive")
    true, q = segment_mass(data, g, segment)
    params = config.concentration_params(data, g)
    est, _ = sample_estimates(data, config, g, segment, trials, seed0)
    k_eff, rho = params if params else (0.0, math.inf)
    results = []
    for d in deltas:
        bound = concentration_bound(q, k_eff, rho, d) if params and q > 0 else 1.0
        n_exc = _exceedances(est, true, d)
        allowed = int(binom.ppf(confidence, trials, bound)) if bound < 1 else trials
        results.append(DeltaResult(d, n_exc, n_exc / trials, bound, allowed, bound >= 1))
    return ConcentrationReport(config.label, trials, q, k_eff, rho, confidence, results)


# -- NMSE ---------------------------------------------------------------------

@dataclass(frozen=True)
class HalfSubsetFamily:
    """All functions equal to 1 on a ``size``-subset of ``keys`` and 0 elsewhere.

    The family is exponentially large, so the ForAll maximum is computed in
    closed form per draw: the worst subset collects the ``size`` largest or
    the ``size`` smallest per-key ratios.
    """

    keys: tuple
    size: int

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        if not 1 <= self.size <= len(self.keys):
            raise ValueError("subset size must be between 1 and the number of keys")


def nmse_probabilities(data: Any, family: Sequence[StatFn] | HalfSubsetFamily, ell: float) -> dict[Key, float]:
    """``p^(F, ell)_x = min(1, ell * max_f f_x / sum f)``."""
    weights = as_weights(data)
    if isinstance(family, HalfSubsetFamily):
        members = set(family.keys)
        return {k: (min(1.0, ell / family.size) if k in members else 0.0) for k in weights}
    from .multi import base_probabilities
    base = base_probabilities(weights, list(family))
    return {k: min(1.0, float(ell * b)) for k, b in base.items()}


@dataclass
class NmseReport:
    trials: int
    nmse_e: float
    nmse_a: float

    @property
    def ordered(self) -> bool:
        return self.nmse_e <= self.nmse_a


def _inverse_prob_draws(keys: list, probs: np.ndarray, trials: int, seed0: int) -> np.ndarray:
    """Matrix ``trials x n`` of ``I[u <= p] / p`` (0 where p = 0)."""
    kbs = [key_bytes(k) for k in keys]
    inv = np.where(probs > 0, 1.0 / np.where(probs > 0, probs, 1.0), 0.0)
    out = np.empty((trials, len(keys)))
    for t in range(trials):
        seed = trial_seed(seed0, t)
        u = np.fromiter((uniform_from_bytes(kb, seed) for kb in kbs), float, len(kbs))
        out[t] = (u <= probs) * inv
    return out


def run_nmse(data: Any, probabilities: dict[Key, float], family: Sequence[StatFn] | HalfSubsetFamily,
             trials: int = 2000, seed0: int = 0) -> NmseReport:
    """ForEach ``max_f E[(est_f/true_f - 1)^2]`` and ForAll ``E[max_f (est_f/true_f - 1)^2]``.

    Statistics are over the full data.  Both use the same draws, so the
    ForEach value never exceeds the ForAll value.
    """
    weights = as_weights(data)
    keys = list(weights)
    probs = np.array([float(probabilities.get(k, 0.0)) for k in keys])
    draws = _inverse_prob_draws(keys, probs, trials, seed0)
    if isinstance(family, HalfSubsetFamily):
        idx = {k: i for i, k in enumerate(keys)}
        cols = np.array([idx[k] for k in family.keys])
        c = draws[:, cols]
        s = family.size
        srt = np.sort(c, axis=1)
        hi = srt[:, -s:].mean(axis=1) - 1
        lo = srt[:, :s].mean(axis=1) - 1
        forall = np.maximum(hi ** 2, lo ** 2)
        # ForEach: the subset with the largest variance, sum of (1/p - 1)
        var = np.where(probs[cols] > 0, 1 / np.where(probs[cols] > 0, probs[cols], 1) - 1, np.inf)
        worst = np.argsort(-var, kind="stable")[:s]
        foreach = (c[:, worst].mean(axis=1) - 1) ** 2
        return NmseReport(trials, float(foreach.mean()), float(forall.mean()))
    fns = list(family)
    mat = np.array([[f.value(k, weights[k]) for k in keys] for f in fns], dtype=float)
    totals = mat.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise ValueError("every function needs positive total mass")
    ratios = draws @ (mat / totals).T - 1
    sq = ratios ** 2
    return NmseReport(trials, float(sq.mean(axis=0).max()), float(sq.max(axis=1).mean()))


# -- closure ------------------------------------------------------------------

@dataclass
class ClosureReport:
    combos: int
    checked: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _exact_probs(vals: dict[Key, Fraction], k: int) -> dict[Key, Fraction]:
    tot = sum(vals.values(), Fraction(0))
    if tot == 0:
        return {x: Fraction(0) for x in vals}
    return {x: min(Fraction(1), k * v / tot) for x, v in vals.items()}


def check_closure(data: Any, functions: Sequence[StatFn], k: int,
                  combos: int | Iterable[Sequence[float]] = 100, seed: int = 0) -> ClosureReport:
    """Check ``p^(f,k)_x <= p^(F,k)_x`` exactly for nonnegative combinations ``f`` of ``F``.

    ``combos`` is a count of random coefficient vectors or explicit vectors.
    """
    weights = as_weights(data)
    fvals = [{x: Fraction(f.value(x, w)) for x, w in weights.items()} for f in functions]
    per_f = [_exact_probs(v, k) for v in fvals]
    p_family = {x: max(p[x] for p in per_f) for x in weights}
    if isinstance(combos, int):
        rng = random.Random(seed)
        vectors = []
        for _ in range(combos):
            alpha = [rng.choice([0.0, rng.random(), rng.uniform(0, 100)]) for _ in functions]
            if not any(alpha):
                alpha[rng.randrange(len(alpha))] = 1.0
            vectors.append(alpha)
    else:
        vectors = [list(a) for a in combos]
    checked = 0
    violations = []
    for alpha in vectors:
        if any(a < 0 for a in alpha):
            raise ValueError("closure combinations need nonnegative coefficients")
        vals = {x: sum((Fraction(a) * fv[x] for a, fv in zip(alpha, fvals)), Fraction(0)) for x in weights}
        for x, p in _exact_probs(vals, k).items():
            checked += 1
            if p > p_family[x]:
                violations.append((tuple(alpha), x, float(p), float(p_family[x])))
    return ClosureReport(len(vectors), checked, violations)


def random_family(rng: random.Random, weights: dict, size: int = 3) -> list[StatFn]:
    """Random statistic functions for closure experiments."""
    ws = sorted(weights.values())
    out = []
    for _ in range(size):
        pick = rng.randrange(6)
        T = rng.choice(ws) if ws and ws[-1] > 0 else 1.0
        T = T if T > 0 else 1.0
        if pick == 0:
            out.append(Sum())
        elif pick == 1:
            out.append(Count())
        elif pick == 2:
            out.append(Threshold(T))
        elif pick == 3:
            out.append(Cap(T))
        elif pick == 4:
            out.append(Moment(rng.choice([0.5, 2.0, 3.0])))
        else:
            out.append(Table.from_mapping({x: rng.choice([0.0, rng.random() * 10]) for x in weights}))
    return out


# -- brute-force oracles --------------------------------------------------------

def _sorted_seeds(weights: dict, fvals: dict, rand: RandSource) -> list[tuple[float, bytes, Key]]:
    out = []
    for x, fv in fvals.items():
        if fv > 0:
            kb = key_bytes(x)
            out.append((rank_from_uniform(uniform_from_bytes(kb, rand.hash_seed), rand.mode) / fv, kb, x))
    out.sort()
    return out


def brute_force_union_oracle(data: Any, family: str, k: int, rand: RandSource) -> set:
    """Union of dedicated bottom-k samples of ``thresh_T`` or ``cap:T`` over ``T`` in the weights."""
    if family not in ("thresholds", "cappings"):
        raise ValueError("family must be 'thresholds' or 'cappings'")
    weights = as_weights(data)
    out: set = set()
    for T in {w for w in weights.values() if w > 0}:
        if family == "thresholds":
            fv = {x: 1.0 if w >= T else 0.0 for x, w in weights.items()}
        else:
            fv = {x: min(T, w) for x, w in weights.items()}
        out |= {x for _, _, x in _sorted_seeds(weights, fv, rand)[:k]}
    return out


def brute_force_mo_botk_probabilities(data: Any, objectives: Sequence[Objective],
                                      rand: RandSource) -> dict[Key, float]:
    """``max_f Pr[seed_f(x) < k_f-th smallest f-seed of the other keys]`` for every sampled key."""
    weights = as_weights(data)
    sampled: set = set()
    per_f = []
    for o in objectives:
        fv = {x: o.f.value(x, w) for x, w in weights.items()}
        ranked = _sorted_seeds(weights, fv, rand)
        sampled |= {x for _, _, x in ranked[:o.k]}
        per_f.append((o, fv, ranked))
    out = {}
    for x in sampled:
        best = 0.0
        for o, fv, ranked in per_f:
            if fv[x] <= 0:
                continue
            others = [s for s, _, y in ranked if y != x]
            t = others[o.k - 1] if len(others) >= o.k else math.inf
            x_t = fv[x] * t
            p = 1.0 if t == math.inf else (min(1.0, x_t) if rand.mode is Mode.PRIORITY else -math.expm1(-x_t))
            best = max(best, p)
        out[x] = best
    return out


def mo_botk_matches_oracle(sample: MultiBotkSample, data: Any) -> bool:
    oracle = brute_force_mo_botk_probabilities(data, sample.objectives, sample.rand)
    got = {k: p for k, _, p in sample.probabilities()}
    return got.keys() == oracle.keys() and all(got[x] == oracle[x] for x in got)


# -- bench configuration ----------------------------------------------------------

def run_bench(config: dict, data: Any) -> dict:
    """Run the suites of a bench config; returns a JSON-ready report.

    Config: ``{"suites": [{"type": "cv" | "concentration" | "nmse", ...}]}``
    with sampler fields ``kind``, ``stats``, ``k``, ``mode`` and query
    fields ``g``, ``segment``, ``trials``, ``seed``, ``slack``, ``deltas``.
    """
    from .objectives import parse_stat
    reports = []
    for suite in config.get("suites", []):
        typ = suite.get("type", "cv")
        trials = int(suite.get("trials", 1000))
        seed0 = int(suite.get("seed", 0))
        segment = suite.get("segment")
        if typ == "nmse":
            fns = [parse_stat(s) for s in suite["stats"]]
            probs = nmse_probabilities(data, fns, float(suite["ell"]))
            rep = run_nmse(data, probs, fns, trials, seed0)
            bound = 1 / float(suite["ell"])
            slack = float(suite.get("slack", 0.10))
            reports.append({"type": "nmse", "ell": suite["ell"], "nmse_e": rep.nmse_e, "nmse_a": rep.nmse_a,
                            "bound": bound, "pass": rep.ordered and rep.nmse_e <= bound * (1 + slack)})
            continue
        kind = suite.get("kind", "pps").replace("-", "_")
        k = int(suite.get("k", 10))
        mode = suite.get("mode", "ppswor")
        stats = [parse_stat(s) for s in suite.get("stats", ["sum"])]
        if kind in ("ppswor", "priority"):
            kind, mode = "botk", kind
        if kind.startswith("universal"):
            cfg = SamplerConfig(kind, k=k, mode=mode)
        else:
            cfg = SamplerConfig(kind, tuple(Objective(f, k) for f in stats), mode=mode)
        g = parse_stat(suite["g"]) if "g" in suite else stats[0]
        if typ == "cv":
            rep = run_cv_trial(data, cfg, g, segment, trials, seed0, float(suite.get("slack", 0.10)),
                               suite.get("deltas", ()))
            d = rep.as_dict()
            d.update(type="cv", **{"pass": rep.cv_ok and rep.unbiased_ok})
            reports.append(d)
        elif typ == "concentration":
            rep = run_concentration_trial(data, cfg, g, segment, suite.get("deltas", (0.5, 1.0)), trials, seed0)
            d = rep.as_dict()
            d.update(type="concentration", **{"pass": rep.passed})
            reports.append(d)
        else:
            raise ValueError(f"unknown suite type {typ!r}")
    return {"suites": reports, "pass": all(r["pass"] for r in reports)}


__all__ = [
    "ClosureReport", "ConcentrationReport", "HalfSubsetFamily", "NmseReport", "SamplerConfig",
    "TrialReport", "brute_force_mo_botk_probabilities", "brute_force_union_oracle", "check_closure",
    "concentration_bound", "nmse_probabilities", "random_family", "run_bench", "run_concentration_trial",
    "run_cv_trial", "run_nmse", "run_query_grid", "sample_estimates", "segment_mass",
]
