"""The ``mosample`` command line.

JSON results go to stdout (or ``--out``), one-line summaries and
diagnostics to stderr.  Exit codes: 0 ok, 1 usage, 2 data error,
3 contract violation.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Iterator

import click
import xxhash

from .core import Element, ExactSum, Mode, RandSource, key_bytes
from .errors import ContractViolation, DataError
from .estimator import estimate_segment_sum
from .formats import dumps_sample, iter_elements, read_pairs, read_sample
from .harness import run_bench
from .multi import MultiBotkBuilder, MultiPpsBuilder, mo_pps_probability
from .objectives import Objective, StatFn, Table, parse_stat
from .optimizer import OptimizationProblem, OuterFunction, optimize as run_optimize
from .single import BottomKBuilder, PpsBuilder, pps_probability
from .universal import universal_capping_build, universal_monotone_build

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONTRACT = 0, 1, 2, 3
KINDS = ("pps", "botk", "mo-pps", "mo-botk", "universal-monotone", "universal-capping")
_SHARD_HASH_SEED = 0x5EED


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False) + "\n"


def _note(msg: str) -> None:
    click.echo(msg, err=True)


def _stats(specs: Iterable[str]) -> list[StatFn]:
    try:
        return [parse_stat(s) for s in specs]
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--stat") from None


def _elements(paths: Iterable[str]) -> Iterator[Element]:
    for p in paths:
        if p == "-":
            yield from iter_elements(sys.stdin)
        else:
            yield from iter_elements(p)


def _shard_of(key, n: int) -> int:
    return 0 if n == 1 else xxhash.xxh64_intdigest(key_bytes(key), _SHARD_HASH_SEED) % n


# -- sampling -------------------------------------------------------------------

class _ListSink:
    """Collects pairs for the universal samplers, which aggregate internally."""

    def __init__(self, build):
        self._build = build
        self._pairs: list = []

    def add(self, key, weight):
        self._pairs.append((key, weight))

    def result(self):
        return self._build(self._pairs)


def _pps_totals(elements, objs, shards: int) -> list[list]:
    """First pass: exact per-shard totals, rejecting repeated keys."""
    acc = [[ExactSum() for _ in objs] for _ in range(shards)]
    seen = set()
    for e in elements:
        if e.key in seen:
            raise DataError(f"duplicate key {e.key!r}; pps sampling needs aggregated data")
        seen.add(e.key)
        for a, o in zip(acc[_shard_of(e.key, shards)], objs):
            a.add(o.f.value(e.key, e.weight))
    return [[a.value() for a in row] for row in acc]


def build_sample(inputs, kind: str, stats: list[StatFn], k: int, rand: RandSource,
                 totals: list[float] | None = None, shards: int = 1):
    """Sample the concatenated inputs; with ``shards > 1`` build per shard and merge."""
    if kind not in KINDS:
        raise click.BadParameter(f"unknown kind {kind!r}", param_hint="--kind")
    if shards < 1:
        raise click.BadParameter("must be >= 1", param_hint="--shards")
    universal = kind.startswith("universal")
    if not universal and not stats:
        raise click.BadParameter(f"--kind {kind} needs at least one --stat", param_hint="--stat")
    if kind in ("pps", "botk") and len(stats) != 1:
        raise click.BadParameter(f"--kind {kind} takes exactly one --stat", param_hint="--stat")
    objs = [Objective(f, k) for f in stats]
    two_pass = kind in ("pps", "mo-pps") and not totals
    if two_pass and "-" in inputs:
        # stdin cannot be read twice
        cached = list(_elements(inputs))
        elements = lambda: iter(cached)  # noqa: E731
    else:
        elements = lambda: _elements(inputs)  # noqa: E731

    if kind in ("pps", "mo-pps"):
        if totals:
            if shards > 1:
                raise click.UsageError("--total cannot be combined with --shards")
            if len(totals) != len(objs):
                raise click.BadParameter("give one --total per --stat", param_hint="--total")
            shard_totals = [list(totals)]
        else:
            shard_totals = _pps_totals(elements(), objs, shards)
        if kind == "pps":
            sinks = [PpsBuilder(objs[0], rand, t[0]) for t in shard_totals]
        else:
            sinks = [MultiPpsBuilder(objs, rand, t) for t in shard_totals]
        seen = set() if totals else None
    else:
        seen = None
        if kind == "botk":
            sinks = [BottomKBuilder(objs[0], rand) for _ in range(shards)]
        elif kind == "mo-botk":
            sinks = [MultiBotkBuilder(objs, rand) for _ in range(shards)]
        elif kind == "universal-monotone":
            sinks = [_ListSink(lambda d: universal_monotone_build(d, k, rand)) for _ in range(shards)]
        else:
            sinks = [_ListSink(lambda d: universal_capping_build(d, k, rand)) for _ in range(shards)]

    for e in elements():
        if seen is not None:
            if e.key in seen:
                raise DataError(f"duplicate key {e.key!r}; pps sampling needs aggregated data")
            seen.add(e.key)
        sinks[_shard_of(e.key, shards)].add(e.key, e.weight)

    sample = sinks[0].result()
    for sink in sinks[1:]:
        sample = sample.merge(sink.result())
    return sample


def _summary(sample) -> str:
    line = f"{sample.kind}: {len(sample)} sampled keys, hash_seed={sample.rand.hash_seed}"
    objs = getattr(sample, "objectives", None)
    if objs:
        k = max(o.k for o in objs)
        line += f", overhead |S|/k={len(sample) / k:.3f}"
    return line


class _Cli(click.Group):
    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        # exit codes are ours: 1 usage, 2 data, 3 contract
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.exceptions.Exit as exc:
            code = exc.exit_code
        except click.Abort:
            _note("aborted")
            code = EXIT_USAGE
        except click.UsageError as exc:
            exc.show()
            code = EXIT_USAGE
        except click.ClickException as exc:
            exc.show()
            code = EXIT_USAGE
        except DataError as exc:
            _note(f"data error: {exc}")
            code = EXIT_DATA
        except ContractViolation as exc:
            _note(f"contract violation: {exc}")
            code = EXIT_CONTRACT
        except (ValueError, OSError) as exc:
            _note(f"error: {exc}")
            code = EXIT_USAGE
        else:
            code = rv if isinstance(rv, int) else EXIT_OK
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=_Cli)
@click.version_option(package_name="artifact", prog_name="mosample")
def main():
    """Multi-objective weighted sampling of key/weight data."""


_input_arg = click.argument("inputs", nargs=-1, type=click.Path(dir_okay=False, allow_dash=True))
_seed_opt = click.option("--seed", type=click.IntRange(0, (1 << 64) - 1), envvar="MOSAMPLE_SEED",
                         default=0, show_default=True, help="Hash seed (env MOSAMPLE_SEED).")
_mode_opt = click.option("--mode", type=click.Choice([m.value for m in Mode]), default="ppswor",
                         show_default=True, help="Rank transform for bottom-k and universal kinds.")


@main.command()
@_input_arg
@click.option("--kind", type=click.Choice(KINDS), required=True)
@click.option("--stat", "stats", multiple=True, help="Statistic spec; repeat for multiple objectives.")
@click.option("--k", "k", type=click.IntRange(min=1), required=True, help="Sample size parameter.")
@_seed_opt
@_mode_opt
@click.option("--total", "totals", type=float, multiple=True,
              help="Known total per --stat (pps kinds): sample in one pass.")
@click.option("--shards", type=click.IntRange(min=1), default=1, show_default=True,
              help="Split by key hash, sample each shard and merge.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the sample here instead of stdout.")
def sample(inputs, kind, stats, k, seed, mode, totals, shards, out):
    """Build a sample of INPUTS (TSV key<TAB>weight or JSONL; '-' for stdin)."""
    if not inputs:
        inputs = ("-",)
    rand = RandSource(seed, Mode(mode))
    s = build_sample(inputs, kind, _stats(stats), k, rand, list(totals) or None, shards)
    _emit(dumps_sample(s), out)
    _note(_summary(s))


@main.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
def merge(files, out):
    """Merge sample files of disjoint (or overlapping, for bottom-k kinds) data."""
    samples = [read_sample(f) for f in files]
    result = samples[0]
    for s in samples[1:]:
        if s.kind != result.kind:
            raise ContractViolation(f"cannot merge a {result.kind} sample with a {s.kind} sample")
        if not hasattr(result, "merge"):
            raise ContractViolation(f"{result.kind} samples are not mergeable")
        result = result.merge(s)
    _emit(dumps_sample(result), out)
    _note(_summary(result))


def _segment(spec: str | None):
    if spec is None or spec.startswith("prefix:"):
        return spec
    path = Path(spec)
    if not path.exists():
        raise click.BadParameter(f"{spec!r} is neither prefix:P nor an existing file", param_hint="--segment")
    members = {line.strip() for line in path.read_text(encoding="utf-8").splitlines()
               if line.strip() and not line.lstrip().startswith("#")}
    return lambda key: (key if isinstance(key, str) else str(key)) in members


@main.command()
@click.option("--sample", "sample_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stat", "stat", required=True, help="The statistic g to estimate.")
@click.option("--segment", help="prefix:P or a file with one key per line; default all keys.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False),
              help="Original data, to count keys the sample cannot cover.")
def estimate(sample_path, stat, segment, data):
    """Estimate sum(g; H) from a sample."""
    s = read_sample(sample_path)
    (g,) = _stats([stat])
    pairs = read_pairs(data) if data else None
    res = estimate_segment_sum(s, g, _segment(segment), pairs)
    click.echo(_json({"estimate": res.value, "keys_used": res.contributing_keys,
                      "kind": res.sample_kind, "warnings": list(res.warnings)}), nl=False)


def _key_json(key):
    return {"hex": key.hex()} if isinstance(key, bytes) else key


@main.command()
@click.option("--sample", "sample_path", type=click.Path(exists=True, dir_okay=False),
              help="Dump the probabilities of a sample's keys.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False),
              help="Compute pps probabilities for every key of this data.")
@click.option("--stat", "stats", multiple=True)
@click.option("--k", "k", type=click.IntRange(min=1))
def probe(sample_path, data, stats, k):
    """Per-key inclusion probabilities, from a sample or exactly from data."""
    if (sample_path is None) == (data is None):
        raise click.UsageError("give exactly one of --sample or --data")
    if sample_path:
        s = read_sample(sample_path)
        rows = [{"key": _key_json(x), "w": w, "p": p} for x, w, p in s.probabilities()]
        click.echo(_json({"kind": s.kind, "probabilities": rows}), nl=False)
        return
    fs = _stats(stats)
    if not fs or k is None:
        raise click.UsageError("--data needs --stat and --k")
    pairs = read_pairs(data)
    objs = [Objective(f, k) for f in fs]
    totals = []
    for o in objs:
        acc = ExactSum()
        for x, w in pairs:
            acc.add(o.f.value(x, w))
        totals.append(acc.value())
    rows = []
    for x, w in pairs:
        per = {o.f.spec: pps_probability(o.f, k, w, t, x) if t > 0 else 0.0 for o, t in zip(objs, totals)}
        rows.append({"key": _key_json(x), "w": w, "p": mo_pps_probability(objs, totals, w, x), "per_stat": per})
    size = math.fsum(r["p"] for r in rows)
    click.echo(_json({"kind": "mo_pps" if len(objs) > 1 else "pps", "k": k,
                      "totals": {o.f.spec: float(t) for o, t in zip(objs, totals)},
                      "expected_size": size, "probabilities": rows}), nl=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", type=click.Path(exists=True, dir_okay=False),
              help="Dataset; defaults to the config's \"data\" path.")
def bench(config_path, data):
    """Run the Monte Carlo quality suites of a JSON config."""
    try:
        config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"config is not valid JSON: {exc}") from None
    if data is None:
        if "data" not in config:
            raise click.UsageError("no --data and no \"data\" entry in the config")
        data = Path(config_path).parent / config["data"]
    report = run_bench(config, read_pairs(data))
    click.echo(_json(report), nl=False)
    _note(f"bench: {len(report['suites'])} suites, pass={report['pass']}")


def _read_candidates(path: str) -> list[StatFn]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            obj = json.loads(line)
            name = obj.get("name")
            if "values" in obj:
                out.append(Table.from_mapping(obj["values"], name))
            else:
                out.append(parse_stat(obj["stat"]))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"candidates line {lineno}: {exc}", [lineno]) from None
    if not out:
        raise DataError("the candidates file is empty")
    return out


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Key/weight data fed to the candidate functions.")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False),
              help="Importance weights m (key/weight format); default 1 for every key.")
@click.option("--candidates", required=True, type=click.Path(exists=True, dir_okay=False),
              help='JSONL: {"name": ..., "values": {key: v}} or {"name": ..., "stat": spec}.')
@click.option("--M", "outer", default="identity", show_default=True, help="identity or negate-shift:C")
@click.option("--eps", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.1, show_default=True)
@click.option("--certify", type=click.Choice(["exact", "sample"]), default="exact", show_default=True)
@click.option("--form", type=click.Choice(["M", "sum"]), default="M", show_default=True)
@_seed_opt
@click.option("--validation-seed", type=click.IntRange(0, (1 << 64) - 1))
@click.option("--pi", "pi_path", type=click.Path(exists=True, dir_okay=False),
              help="Upper bounds on the base probabilities (key/weight format).")
def optimize(data, weights, candidates, outer, eps, certify, form, seed, validation_seed, pi_path):
    """Adaptive-size optimization over samples with certification."""
    try:
        M = OuterFunction.parse(outer)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--M") from None
    w = dict(read_pairs(data))
    m = dict(read_pairs(weights)) if weights else None
    pi = dict(read_pairs(pi_path)) if pi_path else None
    problem = OptimizationProblem(w, _read_candidates(candidates), M, eps, m, pi)
    mode = "exact" if certify == "exact" else "validation"
    res = run_optimize(problem, seed, mode, form, validation_seed)
    d = res.as_dict()
    d["name"] = d.pop("function")
    click.echo(_json(d), nl=False)
    _note(f"optimize: candidate {res.choice} ({d['name']}) certified after {res.n_iterations} iterations")


if __name__ == "__main__":  # pragma: no cover
    main()
