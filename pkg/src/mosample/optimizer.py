"""Adaptive-size optimization over multi-objective samples.

Maximize ``M(sum(f; X, m))`` over candidate functions ``f`` using a sample
with probabilities ``min(1, k pi_x)``: optimize on the sample, certify the
sample optimum against the data (or an independent validation sample),
and double ``k`` until the certificate holds.  The ``u`` values are drawn
once, so each sample contains the previous one.

Maximizing over a ForEach-quality sample can only go wrong by
over-estimating the winner's objective, which is exactly what the
certificate tests.  Minimization is expressed with a shifted outer function
``M(v) = C - v`` where ``C`` makes ``M`` positive on the relevant range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .core import Key, RandSource, as_weights
from .errors import ContractViolation, SolverContractError
from .objectives import StatFn

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class OuterFunction:
    """``M`` with its declared rate constant and monotonicity direction."""

    fn: Callable[[float], float]
    rate: float = 1.0
    increasing: bool = True
    name: str = "custom"

    def __call__(self, v: float) -> float:
        return self.fn(v)

    @classmethod
    def identity(cls) -> "OuterFunction":
        return cls(lambda v: v, 1.0, True, "identity")

    @classmethod
    def negate_shift(cls, C: float, v_max: float | None = None) -> "OuterFunction":
        """``M(v) = C - v`` for minimization; ``C`` must exceed the sums that matter.

        The rate constant is ``v_max / (C - v_max)`` when ``v_max`` is given.
        """
        if not C > 0:
            raise ValueError("the shift C must be positive")
        rate = v_max / (C - v_max) if v_max is not None and v_max < C else math.inf
        return cls(lambda v: C - v, rate, False, f"negate-shift:{C!r}")

    @classmethod
    def parse(cls, spec: str) -> "OuterFunction":
        spec = spec.strip()
        if spec == "identity":
            return cls.identity()
        if spec.startswith("negate-shift:"):
            return cls.negate_shift(float(spec.split(":", 1)[1]))
        raise ValueError(f"unknown outer function {spec!r}")


Solver = Callable[[Mapping[Key, float], Sequence[StatFn], Mapping[Key, float], OuterFunction], int]


def exhaustive_solver(a: Mapping[Key, float], candidates: Sequence[StatFn],
                      weights: Mapping[Key, float], outer: OuterFunction) -> int:
    """Exact maximizer of ``M(sum(f; S, a))`` over a finite candidate list."""
    best, arg = -math.inf, None
    for i, f in enumerate(candidates):
        val = outer(weighted_sum(f, a, weights))
        if val > best:
            best, arg = val, i
    return arg


def weighted_sum(f: StatFn, a: Mapping[Key, float], weights: Mapping[Key, float]) -> float:
    """``sum_x a_x f_x`` over the keys of ``a``."""
    return math.fsum(ax * f.value(x, weights[x]) for x, ax in a.items())


@dataclass
class OptimizationProblem:
    """Data ``weights`` (the ``w`` fed to the functions), importance ``m`` and candidates ``F``.

    ``pi`` defaults to the exact base probabilities of ``mF``;
    ``solver_eps`` is the approximation factor the inner solver promises,
    checked on every call when the candidate list is finite.
    """

    weights: Mapping[Key, float]
    candidates: Sequence[StatFn]
    outer: OuterFunction
    eps: float
    importance: Mapping[Key, float] | None = None
    pi: Mapping[Key, float] | None = None
    inner_solver: Solver = exhaustive_solver
    solver_eps: float = 0.0

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must be in (0, 1)")
        self.weights = as_weights(self.weights)
        if self.importance is None:
            self.importance = {x: 1.0 for x in self.weights}
        if not self.candidates:
            raise ValueError("at least one candidate function is required")


def base_probabilities_mf(weights: Mapping[Key, float], importance: Mapping[Key, float],
                          candidates: Sequence[StatFn]) -> dict[Key, float]:
    """``max_f m_x f_x / sum_y m_y f_y``, rounded up so it never falls below the exact value."""
    best = {x: Fraction(0) for x in weights}
    for f in candidates:
        vals = {x: Fraction(importance.get(x, 0.0)) * Fraction(f.value(x, w)) for x, w in weights.items()}
        tot = sum(vals.values(), Fraction(0))
        if tot == 0:
            continue
        for x, v in vals.items():
            r = v / tot
            if r > best[x]:
                best[x] = r
    out = {}
    for x, r in best.items():
        p = float(r)
        if Fraction(p) < r:
            p = math.nextafter(p, math.inf)
        out[x] = min(1.0, p)
    return out


def uniform_pi(keys: Sequence[Key], overhead: float = 1.0) -> dict[Key, float]:
    """``pi_x = h / n`` when nothing is known about the family."""
    n = len(keys)
    return {x: min(1.0, overhead / n) for x in keys}


@dataclass
class IterationRecord:
    k: float
    sample_size: int
    full_data: bool
    choice: int
    sample_estimate: float
    check_value: float
    certified: bool
    bracket: tuple[float, float]
    confidence_failure: float


@dataclass
class OptimizationResult:
    choice: int
    function: StatFn
    certified: bool
    sample_estimate: float
    check_value: float
    mode: str
    form: str
    iterations: list[IterationRecord] = field(default_factory=list)
    caveats: list[str] = field(default_factory=list)

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    @property
    def certificate(self) -> tuple[float, float]:
        return self.sample_estimate, self.check_value

    @property
    def union_failure_bound(self) -> float:
        return min(1.0, sum(it.confidence_failure for it in self.iterations))

    def as_dict(self) -> dict:
        return {
            "choice": self.choice, "function": self.function.spec, "certified": self.certified,
            "sample_estimate": self.sample_estimate, "check_value": self.check_value,
            "mode": self.mode, "form": self.form, "union_failure_bound": self.union_failure_bound,
            "caveats": list(self.caveats),
            "iterations": [dict(it.__dict__, bracket=list(it.bracket)) for it in self.iterations],
        }


def passes_test(outer: OuterFunction, eps: float, check: float, estimate: float, form: str = "M") -> bool:
    """The certification inequality.

    ``M`` form: ``M(check) >= (1 - eps) M(estimate)``.  ``sum`` form:
    ``check >= (1 - eps) estimate`` for increasing ``M`` and
    ``check <= (1 + eps) estimate`` for decreasing ``M``.
    """
    if form == "M":
        return outer(check) >= (1 - eps) * outer(estimate)
    if form == "sum":
        if outer.increasing:
            return check >= (1 - eps) * estimate
        return check <= (1 + eps) * estimate
    raise ValueError(f"unknown test form {form!r}")


def certify(problem: OptimizationProblem, f: StatFn, sample_estimate: float, mode: str = "exact",
            form: str = "M", validation_seed: int | None = None, validation_k: float | None = None) -> tuple[bool, float]:
    """``(passed, check_value)`` where the check value is the exact or validation-sample sum."""
    w, m = problem.weights, problem.importance
    if mode == "exact":
        check = math.fsum(m[x] * f.value(x, w[x]) for x in w)
    elif mode == "validation":
        if validation_seed is None:
            raise ValueError("validation mode needs an independent seed")
        kv = validation_k if validation_k is not None else 4 / problem.eps ** 2
        pi = problem.pi if problem.pi is not None else base_probabilities_mf(w, m, problem.candidates)
        a = _sample_weights(RandSource(validation_seed), w, m, pi, kv)[0]
        check = weighted_sum(f, a, w)
    else:
        raise ValueError(f"unknown certification mode {mode!r}")
    return passes_test(problem.outer, problem.eps, check, sample_estimate, form), check


def _sample_weights(rand: RandSource, weights, importance, pi, k) -> tuple[dict, bool]:
    a = {}
    full = True
    for x in weights:
        px = pi.get(x, 0.0)
        if px <= 0:
            continue
        p = min(1.0, k * px)
        if p < 1:
            full = False
        if rand.u(x) <= p:
            a[x] = importance.get(x, 0.0) / p
    return a, full


def _check_pi(problem: OptimizationProblem, pi: Mapping[Key, float]) -> None:
    for x, w in problem.weights.items():
        mass = problem.importance.get(x, 0.0) * max(f.value(x, w) for f in problem.candidates)
        if mass > 0 and not pi.get(x, 0.0) > 0:
            raise ContractViolation(f"pi for key {x!r} must be positive: some candidate has mass there")
        if pi.get(x, 0.0) > 1:
            raise ContractViolation(f"pi for key {x!r} exceeds 1")


def _check_solver(problem: OptimizationProblem, a, choice: int) -> None:
    vals = [problem.outer(weighted_sum(g, a, problem.weights)) for g in problem.candidates]
    best = max(vals)
    if vals[choice] < best - problem.solver_eps * abs(best) - 1e-12 * max(1.0, abs(best)):
        raise SolverContractError(f"inner solver returned candidate {choice} with value {vals[choice]}, "
                                  f"outside its {problem.solver_eps} approximation of the optimum {best}")


def optimize(problem: OptimizationProblem, seed: int = 0, mode: str = "exact", form: str = "M",
             validation_seed: int | None = None) -> OptimizationResult:
    """Double the sample size until the sample optimum is certified.

    The loop always ends: once ``k pi_x >= 1`` for every key the sample is the
    full data and the optimum over it is exact.
    """
    w, m = problem.weights, problem.importance
    pi = problem.pi if problem.pi is not None else base_probabilities_mf(w, m, problem.candidates)
    _check_pi(problem, pi)
    if mode == "validation" and validation_seed is None:
        validation_seed = (seed ^ 0x9E3779B97F4A7C15) & _MASK
    if mode == "validation" and validation_seed == seed:
        raise ValueError("the validation seed must differ from the sampling seed")
    rand = RandSource(seed & _MASK)
    eps = problem.eps
    k = float(math.ceil(1 / eps ** 2 - 1e-9))
    iterations: list[IterationRecord] = []
    caveats = []
    if mode == "validation":
        caveats.append("certified against an independent validation sample: the check holds "
                       "with the validation sample's own ForEach confidence, not with certainty")
    while True:
        a, full = _sample_weights(rand, w, m, pi, k)
        choice = problem.inner_solver(a, problem.candidates, w, problem.outer)
        if choice is None or not 0 <= choice < len(problem.candidates):
            raise SolverContractError(f"inner solver returned an invalid candidate index {choice!r}")
        _check_solver(problem, a, choice)
        f = problem.candidates[choice]
        est = weighted_sum(f, a, w)
        fail = min(1.0, 2 * math.exp(-k * eps ** 2 / 3))
        if full:
            exact = math.fsum(m[x] * f.value(x, w[x]) for x in w)
            iterations.append(IterationRecord(k, len(a), True, choice, est, exact, True,
                                              (problem.outer(exact), problem.outer(exact)), 0.0))
            return OptimizationResult(choice, f, True, est, exact, "full-data", form, iterations, caveats)
        ok, check = certify(problem, f, est, mode, form, validation_seed)
        bracket = (problem.outer(check), (1 + eps) * problem.outer(est))
        iterations.append(IterationRecord(k, len(a), False, choice, est, check, ok, bracket, fail))
        if ok:
            return OptimizationResult(choice, f, True, est, check, mode, form, iterations, caveats)
        k *= 2


__all__ = [
    "IterationRecord", "OptimizationProblem", "OptimizationResult", "OuterFunction",
    "base_probabilities_mf", "certify", "exhaustive_solver", "optimize", "passes_test",
    "uniform_pi", "weighted_sum",
]
