"""Sweep configuration, orchestration, and output layout."""

from __future__ import annotations

import hashlib
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import engine, feeds, graph, learners, metrics
from .engine import SimConfig
from .learners import LearnerConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class NetworkSource:
    path: str | None = None
    nodes: int | None = None
    edges: int | None = None
    core: int | None = None
    seed: int = 0

    @property
    def synthetic(self) -> bool:
        return self.path is None


@dataclass(frozen=True)
class SweepSpec:
    network: NetworkSource
    simulation: SimConfig = SimConfig()
    learner: LearnerConfig = LearnerConfig()
    algorithms: tuple[str, ...] = feeds.ALGORITHMS
    prevalences: tuple[float, ...] = (0.05, 0.15, 0.50)
    feed_lengths: tuple[int, ...] = (30, 50, 100)
    seeds: tuple[int, ...] = (1, 2, 3)
    workers: int = 1
    output_dir: str = "out"
    # optional degree-attribute correlation target for the trait assignments;
    # None leaves labels uniform random at the fixed count
    trait_rho: float | None = None
    trait_tolerance: float = 0.02

    def combinations(self):
        for seed in self.seeds:
            for prevalence in self.prevalences:
                for algorithm in self.algorithms:
                    for n in self.feed_lengths:
                        yield algorithm, prevalence, n, seed


_SIM_KEYS = {f.name for f in fields(SimConfig)} - {"algorithm", "prevalence", "feed_length", "seed"}
_LEARN_KEYS = {f.name for f in fields(LearnerConfig)} - {"seed"}
_SWEEP_KEYS = {"algorithms", "prevalences", "feed_lengths", "seeds", "workers",
               "output_dir", "trait_rho", "trait_tolerance"}
_NET_KEYS = {"path", "nodes", "edges", "core", "seed"}


def parse_config(path) -> SweepSpec:
    """Parse and validate a sweep TOML file; unknown keys are errors."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc

    unknown_sections = set(doc) - {"network", "simulation", "sweep", "learner"}
    if unknown_sections:
        raise ConfigError(f"unknown section {sorted(unknown_sections)[0]!r}")
    if "network" not in doc:
        raise ConfigError("missing required section [network]")

    net = doc["network"]
    _reject_unknown("network", net, _NET_KEYS)
    if "path" in net:
        if {"nodes", "edges", "core"} & set(net):
            raise ConfigError("network.path and synthetic sizes are mutually exclusive")
        source = NetworkSource(path=str(net["path"]))
    else:
        missing = {"nodes", "edges", "core"} - set(net)
        if missing:
            raise ConfigError(f"network needs either path or nodes/edges/core; missing {sorted(missing)}")
        source = NetworkSource(nodes=_as_int("network.nodes", net["nodes"]),
                               edges=_as_int("network.edges", net["edges"]),
                               core=_as_int("network.core", net["core"]),
                               seed=_as_int("network.seed", net.get("seed", 0)))

    sim_doc = doc.get("simulation", {})
    _reject_unknown("simulation", sim_doc, _SIM_KEYS)
    sim = SimConfig(**sim_doc)
    try:
        sim.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    learn_doc = dict(doc.get("learner", {}))
    _reject_unknown("learner", learn_doc, _LEARN_KEYS)
    if "mlp_layers" in learn_doc:
        learn_doc["mlp_layers"] = tuple(learn_doc["mlp_layers"])
    learner = LearnerConfig(**learn_doc)
    try:
        learner.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    sweep_doc = doc.get("sweep", {})
    _reject_unknown("sweep", sweep_doc, _SWEEP_KEYS)
    spec = SweepSpec(
        network=source,
        simulation=sim,
        learner=learner,
        algorithms=tuple(sweep_doc.get("algorithms", feeds.ALGORITHMS)),
        prevalences=tuple(sweep_doc.get("prevalences", (0.05, 0.15, 0.50))),
        feed_lengths=tuple(sweep_doc.get("feed_lengths", (30, 50, 100))),
        seeds=tuple(sweep_doc.get("seeds", (1, 2, 3))),
        workers=_as_int("sweep.workers", sweep_doc.get("workers", 1)),
        output_dir=str(sweep_doc.get("output_dir", "out")),
        trait_rho=sweep_doc.get("trait_rho"),
        trait_tolerance=float(sweep_doc.get("trait_tolerance", 0.02)),
    )
    _validate_sweep(spec)
    return spec


def _reject_unknown(section: str, mapping, allowed: set) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {section}.{key}")


def _as_int(name: str, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return v


def _validate_sweep(spec: SweepSpec) -> None:
    if not spec.algorithms or not spec.prevalences or not spec.feed_lengths or not spec.seeds:
        raise ConfigError("sweep lists must be non-empty")
    for a in spec.algorithms:
        if a not in feeds.ALGORITHMS:
            raise ConfigError(f"sweep.algorithms entry {a!r} not one of {feeds.ALGORITHMS}")
    for p in spec.prevalences:
        if not 0.0 < p < 1.0:
            raise ConfigError(f"sweep.prevalences entry {p} must be in (0,1)")
    for n in spec.feed_lengths:
        if n < 1:
            raise ConfigError(f"sweep.feed_lengths entry {n} must be >= 1")
    if spec.workers < 1:
        raise ConfigError(f"sweep.workers must be >= 1, got {spec.workers}")
    if spec.trait_rho is not None and abs(spec.trait_rho) > 1.0:
        raise ConfigError(f"sweep.trait_rho must be in [-1,1], got {spec.trait_rho}")
    if spec.trait_tolerance <= 0:
        raise ConfigError(f"sweep.trait_tolerance must be positive, got {spec.trait_tolerance}")
    if spec.network.synthetic:
        if spec.network.nodes < 2 or spec.network.edges < 1 or spec.network.core < 1:
            raise ConfigError("network synthetic sizes must be positive")


def serialize_config(spec: SweepSpec) -> str:
    """Canonical TOML text for a spec; parse(serialize(x)) round-trips."""
    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(val(x) for x in v) + "]"
        return str(v)

    lines = ["[network]"]
    if spec.network.synthetic:
        lines += [f"nodes = {spec.network.nodes}", f"edges = {spec.network.edges}",
                  f"core = {spec.network.core}", f"seed = {spec.network.seed}"]
    else:
        lines += [f"path = {val(spec.network.path)}"]
    lines.append("")
    lines.append("[simulation]")
    for name in sorted(_SIM_KEYS):
        lines.append(f"{name} = {val(getattr(spec.simulation, name))}")
    lines.append("")
    lines.append("[sweep]")
    lines.append(f"algorithms = {val(spec.algorithms)}")
    lines.append(f"prevalences = {val(spec.prevalences)}")
    lines.append(f"feed_lengths = {val(spec.feed_lengths)}")
    lines.append(f"seeds = {val(spec.seeds)}")
    lines.append(f"workers = {spec.workers}")
    lines.append(f"output_dir = {val(spec.output_dir)}")
    if spec.trait_rho is not None:
        lines.append(f"trait_rho = {val(spec.trait_rho)}")
    lines.append(f"trait_tolerance = {val(spec.trait_tolerance)}")
    lines.append("")
    lines.append("[learner]")
    for name in sorted(_LEARN_KEYS):
        lines.append(f"{name} = {val(getattr(spec.learner, name))}")
    return "\n".join(lines) + "\n"


def config_hash(spec: SweepSpec) -> str:
    return hashlib.sha256(serialize_config(spec).encode()).hexdigest()[:16]


def build_network(spec: SweepSpec) -> graph.Network:
    src = spec.network
    if src.synthetic:
        return graph.generate_synthetic(src.nodes, src.edges, src.core, src.seed)
    return graph.load_edge_list(src.path)


def build_ranker(cfg: SimConfig, learner_cfg: LearnerConfig,
                 net: graph.Network, traits: graph.TraitAssignment) -> feeds.FeedRanker:
    if cfg.algorithm in ("ncf", "widedeep"):
        per_run = replace(learner_cfg, seed=cfg.seed)
        return learners.LearnedRanker(cfg.algorithm, net, traits, per_run)
    return feeds.make_ranker(cfg.algorithm, static_minimize_rho=cfg.minimize_rho_static)


def run_filename(algorithm: str, prevalence: float, feed_length: int, seed: int) -> str:
    return f"{algorithm}_p{prevalence:g}_n{feed_length}_s{seed}.csv"


def _trait_assignment(net: graph.Network, prevalence: float, seed: int,
                      trait_rho: float | None, trait_tolerance: float) -> graph.TraitAssignment:
    # one assignment per (seed, prevalence), shared by every algorithm so
    # ranker comparisons hold network and labels fixed
    return graph.assign_traits(net, prevalence, target_rho=trait_rho,
                               tolerance=trait_tolerance, seed=seed)


def _execute_run(net: graph.Network, spec: SweepSpec, algorithm: str,
                 prevalence: float, feed_length: int, seed: int,
                 run_workers: int) -> str:
    cfg = spec.simulation.with_run(algorithm, prevalence, feed_length, seed)
    traits = _trait_assignment(net, prevalence, seed, spec.trait_rho, spec.trait_tolerance)
    ranker = build_ranker(cfg, spec.learner, net, traits)
    rows, _state = engine.run_simulation(net, traits, cfg, ranker, workers=run_workers)
    out = os.path.join(spec.output_dir, run_filename(algorithm, prevalence, feed_length, seed))
    metrics.write_csv(out, rows)
    return out


def run_sweep(spec: SweepSpec) -> int:
    """Run every combination; returns 0 on full success, 1 if any run failed.

    Runs parallelize across processes first; inside a run, core users are
    partitioned across the same worker budget.
    """
    os.makedirs(spec.output_dir, exist_ok=True)
    net = build_network(spec)
    combos = list(spec.combinations())
    chash = config_hash(spec)
    records = []
    pool_size = min(spec.workers, len(combos))

    if pool_size <= 1:
        for combo in combos:
            records.append(_run_guarded(net, spec, combo, spec.workers))
    else:
        with ProcessPoolExecutor(max_workers=pool_size) as pool:
            futures = [pool.submit(_run_guarded, net, spec, combo, spec.workers)
                       for combo in combos]
            records = [f.result() for f in futures]

    failed = 0
    manifest = os.path.join(spec.output_dir, "manifest.tsv")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("run_id\tfilename\talgorithm\tprevalence\tfeed_length\tseed\tstatus\tmessage\tconfig_hash\n")
        for run_id, (combo, status, message) in enumerate(records):
            algorithm, prevalence, n, seed = combo
            fname = run_filename(algorithm, prevalence, n, seed)
            if status != "ok":
                failed += 1
            fh.write(f"{run_id}\t{fname}\t{algorithm}\t{prevalence:g}\t{n}\t{seed}\t"
                     f"{status}\t{message}\t{chash}\n")
    return 1 if failed else 0


def _run_guarded(net, spec, combo, run_workers):
    algorithm, prevalence, n, seed = combo
    try:
        _execute_run(net, spec, algorithm, prevalence, n, seed, run_workers)
        return combo, "ok", ""
    except Exception as exc:
        detail = traceback.format_exception_only(type(exc), exc)[-1].strip()
        return combo, "error", detail
