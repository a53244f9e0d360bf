"""The twelve acceptance criteria, each at its stated tolerance."""

import math
import random
import time
from fractions import Fraction

import pytest

from mosample.core import Mode, RandSource
from mosample.formats import dumps_sample
from mosample.harness import (HalfSubsetFamily, SamplerConfig, check_closure, nmse_probabilities, random_family,
                              run_cv_trial, run_nmse, run_query_grid)
from mosample.multi import mo_botk_build, mo_botk_merge, mo_pps_build, mo_pps_merge, mo_pps_probability
from mosample.objectives import Cap, Count, Moment, Objective, Sum, Table, Threshold, parse_stat, segment_sum_exact
from mosample.optimizer import OptimizationProblem, OuterFunction, base_probabilities_mf, optimize, uniform_pi
from mosample.single import botk_build, botk_merge, pps_build, pps_merge, pps_probability
from mosample.universal import (universal_capping_build, universal_capping_merge, universal_monotone_by_u,
                                universal_monotone_by_weight, universal_monotone_merge)

import oracles
from conftest import ACCEPTANCE, EX1, EX1_SEGMENT, EX2_KEYS, EX2_TABLE
from test_optimizer import line_median_fixture, outlier_fixture


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


W100 = {f"x{i:03d}": 1 + 7 * i / 99 for i in range(100)}
QUARTER = {f"x{i:03d}" for i in range(0, 100, 4)}


def _round2(x: Fraction) -> Fraction:
    # round half up at two decimals, exactly
    return Fraction(math.floor(x * 100 + Fraction(1, 2)), 100)


def test_c01_reference_pps_probabilities():
    t0 = time.perf_counter()
    data = {x: Fraction(w) for x, w in EX1.items()}
    specs = {"sum": lambda w: w, "thresh:10": lambda w: Fraction(int(w >= 10)), "cap:5": lambda w: min(Fraction(5), w)}
    mismatches, totals = [], {}
    for spec, f in specs.items():
        total = sum((f(w) for w in data.values()), Fraction(0))
        totals[spec] = total
        for x, expected in zip(EX2_KEYS, EX2_TABLE[spec]):
            p = min(Fraction(1), 3 * f(data[x]) / total)
            # the library's float path agrees with exact arithmetic
            lib = round(pps_probability(parse_stat(spec), 3, EX1[x], total, x), 2)
            if _round2(p) != Fraction(expected).limit_denominator(100) or lib != expected:
                mismatches.append((spec, x))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and totals == {"sum": 385, "thresh:10": 4, "cap:5": 41} and elapsed < 1
    record(1, ok, f"30/30 probabilities match to 2 dp, totals 385/4/41, {elapsed * 1000:.0f} ms"
           if ok else f"mismatches {mismatches}, totals {totals}, {elapsed:.2f} s")


def test_c02_segment_statistics():
    expected = {"sum": 128, "count": 4, "thresh:10": 2, "cap:5": 17, "moment:2": 10414}
    got = {s: segment_sum_exact(EX1, parse_stat(s), EX1_SEGMENT) for s in expected}
    exact_moment = sum(Fraction(EX1[x]) ** 2 for x in EX1_SEGMENT)
    ok = got == expected and exact_moment == 10414
    record(2, ok, "sum=128 count=4 thresh10=2 cap5=17 moment2=10414" if ok else f"got {got}")


def test_c03_multi_objective_pps_size():
    fs = {"sum": Sum(), "thresh:10": Threshold(10), "cap:5": Cap(5)}
    data = {x: Fraction(w) for x, w in EX1.items()}
    vals = {n: {x: Fraction(f(float(w))) for x, w in data.items()} for n, f in fs.items()}
    per = {n: {x: min(Fraction(1), 3 * v / sum(vs.values())) for x, v in vs.items()} for n, vs in vals.items()}
    dedicated = [sum(per[n].values()) for n in fs]
    brute = sum(max(per[n][x] for n in fs) for x in data)
    objs = [Objective(f, 3) for f in fs.values()]
    lib = math.fsum(mo_pps_probability(objs, [385, 4, 41], w, x) for x, w in EX1.items())
    ok = ([round(float(d), 2) for d in dedicated] == [2.29, 3.00, 3.00] and round(float(sum(dedicated)), 2) == 8.29
          and abs(lib - float(brute)) < 1e-12 and round(lib, 2) == 4.82)
    record(3, ok, f"dedicated {[round(float(d), 2) for d in dedicated]} (sum {float(sum(dedicated)):.2f}), "
                  f"MO size {lib:.4f} = brute force {float(brute):.4f}; the 4.68 reference value is a known discrepancy")


@pytest.mark.slow
def test_c04_cv_bound_grid():
    t0 = time.perf_counter()
    failures, worst = [], 0.0
    rows = 0
    for name in ("pps", "ppswor", "priority"):
        for g in (Sum(), Cap(2)):
            for seg in (None, QUARTER):
                for k in (10, 25):
                    rep = run_cv_trial(W100, SamplerConfig.named(name, Sum(), k), g, seg, trials=10_000, seed0=12345)
                    rows += 1
                    worst = max(worst, rep.empirical_cv / rep.bound_cv)
                    if not rep.cv_ok or rep.rho > 4:
                        failures.append((name, g.spec, round(rep.q, 3), k, rep.empirical_cv, rep.bound_cv))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120
    record(4, ok, f"{rows} configurations x 1e4 seeds, worst CV/bound = {worst:.3f} (allowed 1.10), "
                  f"{elapsed:.0f} s" + (f"; failures {failures}" if failures else ""))


@pytest.mark.slow
def test_c05_unbiasedness():
    queries = [(Sum(), None), (Sum(), QUARTER), (Cap(2), QUARTER), (Threshold(5), QUARTER), (Count(), None)]
    two = (Objective(Sum(), 10), Objective(Count(), 10))
    configs = [SamplerConfig.named("pps", Sum(), 10), SamplerConfig.named("ppswor", Sum(), 10),
               SamplerConfig.named("priority", Sum(), 10), SamplerConfig("mo_pps", two),
               SamplerConfig("mo_botk", two), SamplerConfig("mo_botk", two, mode=Mode.PRIORITY),
               SamplerConfig("universal_monotone", k=10), SamplerConfig("universal_capping", k=10),
               SamplerConfig("universal_capping", k=10, mode=Mode.PRIORITY)]
    bad, worst, n = [], 0.0, 0
    for cfg in configs:
        for (g, seg), rep in zip(queries, run_query_grid(W100, cfg, queries, trials=10_000, seed0=777)):
            n += 1
            z = abs(rep.empirical_mean - rep.true_value) / rep.stderr
            worst = max(worst, z)
            if not rep.unbiased_ok:
                bad.append((rep.label, seg is not None, z))
    record(5, not bad, f"{n} (sampler, g, H) cases x 1e4 seeds, max |mean - true| = {worst:.2f} standard errors"
                       + (f"; biased: {bad}" if bad else ""))


def test_c06_universal_monotone_size_and_scan_equivalence():
    n, k = 1000, 10
    data = {f"w{i:04d}": float(i + 1) for i in range(n)}
    sizes = [len(universal_monotone_by_weight(data, k, RandSource(s))) for s in range(1000)]
    mean = sum(sizes) / len(sizes)
    bound = k * math.log(n)
    rng = random.Random(6)
    diffs = 0
    for _ in range(1000):
        m = rng.randint(1, 40)
        pool = [float(rng.randint(1, 5))] * 3 + [rng.uniform(0, 10) for _ in range(3)]
        inst = {f"k{i}": rng.choice(pool) for i in range(m)}
        rand = RandSource(rng.getrandbits(64), rng.choice(list(Mode)))
        kk = rng.randint(1, 6)
        a = dumps_sample(universal_monotone_by_weight(inst, kk, rand))
        b = dumps_sample(universal_monotone_by_u(inst, kk, rand))
        diffs += a != b
    ok = mean <= bound * 1.05 and diffs == 0
    record(6, ok, f"mean |S| = {mean:.2f} <= k ln n = {bound:.2f} (+5%); weight-order and u-order scans "
                  f"byte-identical on 1000/1000 instances" if ok else f"mean {mean:.2f}, {diffs} scan mismatches")


def test_c07_oracle_equivalence():
    rng = random.Random(7)
    counts = {"monotone": 0, "capping": 0, "mo_botk": 0}
    checked = 0
    for seed_i in range(200):
        n = rng.randint(1, 12)
        k = rng.randint(1, 4)
        seed = rng.getrandbits(64)
        mode = rng.choice(list(Mode))
        pool = [1.0, 2.0, 3.0] if rng.random() < 0.5 else None
        data = {f"k{i}": (rng.choice(pool) if pool else float(rng.randint(0, 60))) for i in range(n)}
        rand = RandSource(seed, mode)
        checked += 1
        if set(universal_monotone_by_weight(data, k, rand).keys()) != oracles.threshold_union(data, k, seed):
            counts["monotone"] += 1
        if set(universal_capping_build(data, k, rand).keys()) != oracles.capping_union(data, k, seed, mode.value):
            counts["capping"] += 1
        fs = rng.sample([Sum(), Count(), Threshold(3), Cap(2), Moment(2)], 3)
        ks = [rng.randint(1, 4) for _ in fs]
        s = mo_botk_build(data, [Objective(f, kk) for f, kk in zip(fs, ks)], rand)
        fl = [{x: f(w) for x, w in data.items()} for f in fs]
        got = {x: p for x, _, p in s.probabilities()}
        want = {x: oracles.mo_botk_p(fl, ks, x, seed, mode.value) for x in data}
        want = {x: p for x, p in want.items()
                if any(x in [y for _, _, y in oracles.dedicated_bottom_k(data, fv, kk, seed, mode.value)[:kk]]
                       for fv, kk in zip(fl, ks))}
        if got != want:
            counts["mo_botk"] += 1
    ok = not any(counts.values())
    record(7, ok, f"{checked} instances (n <= 12, k <= 4): mismatches {counts}")


def test_c08_capping_size_bound():
    n, k = 1000, 10
    data = {f"c{i:04d}": math.exp(2 * i / (n - 1)) for i in range(n)}
    sizes, not_subset = [], 0
    for s in range(1000):
        rand = RandSource(s)
        cap = set(universal_capping_build(data, k, rand).keys())
        mono = set(universal_monotone_by_weight(data, k, rand).keys())
        sizes.append(len(cap))
        not_subset += not cap <= mono
    mean = sum(sizes) / len(sizes)
    bound = math.e * k * 2
    ok = mean <= bound and not_subset == 0
    record(8, ok, f"mean |S_cap| = {mean:.2f} <= e*k*2 = {bound:.2f}; capping within monotone sample on "
                  f"{1000 - not_subset}/1000 draws")


def test_c09_closure():
    rng = random.Random(9)
    violations, checked = 0, 0
    for i in range(100):
        data = {f"k{j}": float(rng.choice([0, 1, 2, 5, 10, 50])) * rng.random() for j in range(rng.randint(2, 15))}
        fam = random_family(rng, data, 3)
        rep = check_closure(data, fam, rng.randint(1, 5), combos=1, seed=i)
        violations += len(rep.violations)
        checked += rep.checked
    record(9, violations == 0, f"100 random nonnegative combinations, {checked} per-key checks, "
                               f"{violations} violations (exact rationals)")


def _shards(data, rng, parts=3):
    out = [dict() for _ in range(parts)]
    for x, w in data.items():
        out[rng.randrange(parts)][x] = w
    return out


def test_c10_merge_equals_one_shot():
    rng = random.Random(10)
    kinds = {
        "pps": (lambda d, r: pps_build(d, Objective(Sum(), 4), r), pps_merge),
        "botk": (lambda d, r: botk_build(d, Objective(Cap(5), 4), r), botk_merge),
        "mo_pps": (lambda d, r: mo_pps_build(d, [Objective(Sum(), 3), Objective(Threshold(10), 2)], r), mo_pps_merge),
        "mo_botk": (lambda d, r: mo_botk_build(d, [Objective(Sum(), 3), Objective(Threshold(10), 2),
                                                   Objective(Cap(2), 3)], r), mo_botk_merge),
        "universal_monotone": (lambda d, r: universal_monotone_by_weight(d, 3, r), universal_monotone_merge),
        "universal_capping": (lambda d, r: universal_capping_build(d, 3, r), universal_capping_merge),
    }
    bad = {name: 0 for name in kinds}
    aux_seen = 0
    trials = 200
    for _ in range(trials):
        data = {f"k{i}": float(rng.choice([0, 1, 2, 2, 7, 15, 40])) for i in range(rng.randint(0, 40))}
        rand = RandSource(rng.getrandbits(64), rng.choice(list(Mode)))
        shards = _shards(data, rng)
        for name, (build, merge) in kinds.items():
            parts = [build(s, rand) for s in shards]
            merged = merge(merge(parts[0], parts[1]), parts[2])
            one = build(data, rand)
            bad[name] += dumps_sample(merged) != dumps_sample(one)
            if name == "mo_botk":
                aux_seen += len(one.aux) > 0
    ok = not any(bad.values()) and aux_seen > 0
    record(10, ok, f"{trials} random 3-way shardings x 6 kinds byte-identical to one-shot "
                   f"({aux_seen} MO bottom-k cases carried auxiliary keys); mismatches {bad}")


@pytest.mark.slow
def test_c11_nmse_ordering():
    n = 1000
    keys = [f"k{i:04d}" for i in range(n)]
    data = dict.fromkeys(keys, 1.0)
    rng = random.Random(11)
    rows, ordered, bound_ok = [], True, True
    tables = [Table.from_mapping(dict.fromkeys(rng.sample(keys, n // 2), 1.0)) for _ in range(10)]
    for ell in (25, 100):
        for fam_name, fam in (("random halves", tables), ("all halves", HalfSubsetFamily(keys, n // 2))):
            rep = run_nmse(data, nmse_probabilities(data, fam, ell), fam, trials=10_000, seed0=ell)
            ordered &= rep.ordered
            within = rep.nmse_e <= 1.10 / ell
            bound_ok &= within
            rows.append(f"l={ell} {fam_name}: e={rep.nmse_e:.5f} a={rep.nmse_a:.4f}")
    record(11, ordered and bound_ok, "nmse_e <= nmse_a and nmse_e <= 1.1/l in every configuration; "
                                     + "; ".join(rows))


@pytest.mark.slow
def test_c12_optimizer():
    eps = 0.1
    pts, cands, costs = line_median_fixture()
    best = min(costs)
    C = 2 * max(costs)
    m = dict.fromkeys(pts, 1.0)
    pi = base_probabilities_mf(pts, m, cands)
    ratios = []
    for seed in range(30):
        prob = OptimizationProblem(m, cands, OuterFunction.negate_shift(C), eps, pi=pi)
        res = optimize(prob, seed=seed)
        ratios.append(costs[res.choice] / best if res.certified else math.inf)
    median_ok = max(ratios) <= 1 + 3 * eps

    pts2, cands2, costs2 = outlier_fixture()
    iters = []
    for seed in range(10):
        prob = OptimizationProblem(dict.fromkeys(pts2, 1.0), cands2, OuterFunction.negate_shift(2 * max(costs2)),
                                   eps, pi=uniform_pi(list(pts2)))
        iters.append(optimize(prob, seed=seed).n_iterations)
    outlier_ok = min(iters) >= 2

    # an outer function no sample can certify: the loop must still end, on the full data
    never = OuterFunction(lambda v: -1.0, 1.0, True, "never")
    w = {f"n{i}": 1 + (i % 7) for i in range(2000)}
    res = optimize(OptimizationProblem(w, [Sum(), Cap(3)], never, eps), seed=1)
    fallback_ok = res.mode == "full-data" and res.iterations[-1].full_data and res.certified
    ok = median_ok and outlier_ok and fallback_ok
    record(12, ok, f"1-median worst cost ratio {max(ratios):.4f} <= {1 + 3 * eps:.1f} over 30 seeds; "
                   f"outlier fixture iterations {min(iters)}-{max(iters)} (>= 2); uncertifiable outer function "
                   f"ends on full data after {res.n_iterations} doublings")
