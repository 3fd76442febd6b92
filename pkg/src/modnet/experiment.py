"""Config-driven chain runs: the engine behind the command line.

A config names a builtin network, how many chains to run, per-site proposal
settings, and a master seed. Chain i always runs from the generator seeded
with derive_seed(master, i): network construction (including any inverse
training), initialization, and the chain itself all draw from that one
stream, so results depend only on (config, master seed, i) and never on how
chains are scheduled across workers. Each chain writes trace_chain<i>.csv;
a single summary.json is written after every chain has finished.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .mh import (SiteProposal, discrete_uniform_proposal, flip_proposal,
                 gaussian_walk_proposal, resolve_port, run_chain)
from .network import ModuleNetwork
from .outlier_regression import build_outlier_network
from .reference_models import chain3_network, switch_hmm_network
from .seeds import derive_seed
from .traceio import TraceAccumulator, TraceWriter, summary_document, write_summary


class ConfigError(Exception):
    """Invalid experiment config; message names the offending field."""


BUILTIN_NETWORKS = ("outlier_regression", "chain3", "switch_hmm")

DEFAULT_PROPOSALS = {
    "outlier_regression": [
        {"site": "A", "port": "a", "kind": "discrete_uniform", "domain": [0, 1]},
    ],
    "chain3": [
        {"site": "X1", "port": "z", "kind": "flip"},
        {"site": "X2", "port": "z", "kind": "flip"},
    ],
    "switch_hmm": [
        {"site": "A", "port": "a", "kind": "discrete_uniform", "domain": [0, 1]},
    ],
}


@dataclass(frozen=True)
class ExperimentConfig:
    network: str
    seed: int
    chains: int = 1
    iterations: int = 1000
    particles: int = 30
    train_samples: int = 100_000
    workers: int = 1
    scan: str = "random"
    proposals: tuple = ()
    out: str | None = None

    def replace(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update(kw)
        return parse_config(d)


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")

    network = doc.get("network")
    if network not in BUILTIN_NETWORKS:
        raise ConfigError(
            f"field 'network': expected one of {list(BUILTIN_NETWORKS)}, got {network!r}")

    if "seed" not in doc or doc["seed"] is None:
        raise ConfigError("field 'seed': required; refusing to seed from the clock")
    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("field 'seed': must be an integer in [0, 2^64)")

    def count(name: str, default: int) -> int:
        v = doc.get(name, default)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"field {name!r}: must be an integer >= 1")
        return v

    train_samples = doc.get("train_samples", 100_000)
    if (not isinstance(train_samples, int) or isinstance(train_samples, bool)
            or train_samples < 0):
        raise ConfigError(
            "field 'train_samples': must be an integer >= 0 (0 = exact tables)")

    scan = doc.get("scan", "random")
    if scan not in ("random", "cyclic"):
        raise ConfigError("field 'scan': must be 'random' or 'cyclic'")

    proposals = doc.get("proposals")
    if proposals is None:
        proposals = DEFAULT_PROPOSALS[network]
    if not isinstance(proposals, (list, tuple)) or not proposals:
        raise ConfigError("field 'proposals': must be a non-empty list")
    frozen = []
    for k, p in enumerate(proposals):
        if not isinstance(p, dict):
            try:
                p = dict(p)
            except (TypeError, ValueError):
                raise ConfigError(f"field 'proposals[{k}]': must be an object")
        if "site" not in p or "kind" not in p:
            raise ConfigError(f"field 'proposals[{k}]': needs 'site' and 'kind'")
        for key, v in p.items():
            if isinstance(v, list):
                p[key] = tuple(v)
        frozen.append(tuple(sorted(p.items())))

    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("field 'out': must be a path string")

    return ExperimentConfig(
        network=network,
        seed=seed,
        chains=count("chains", 1),
        iterations=count("iterations", 1000),
        particles=count("particles", 30),
        train_samples=train_samples,
        workers=count("workers", 1),
        scan=scan,
        proposals=tuple(frozen),
        out=out,
    )


def read_config_document(path):
    """JSON body of a config file; bad JSON reports line and column."""
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"
        )
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}")


def load_config(path, overrides: Mapping | None = None) -> ExperimentConfig:
    """Parse a config file, with overrides (e.g. command-line flags) applied
    on top of the file's fields before validation."""
    doc = read_config_document(path)
    if overrides and isinstance(doc, dict):
        doc = {**doc, **overrides}
    return parse_config(doc)


def build_configured_network(cfg: ExperimentConfig, rng) -> ModuleNetwork:
    if cfg.network == "outlier_regression":
        return build_outlier_network(cfg.particles, cfg.train_samples, rng)
    if cfg.network == "chain3":
        return chain3_network()
    if cfg.network == "switch_hmm":
        return switch_hmm_network(cfg.particles, cfg.train_samples, rng)
    raise ConfigError(f"unknown network {cfg.network!r}")


def build_proposal(net: ModuleNetwork, spec: tuple) -> SiteProposal:
    p = dict(spec)
    try:
        site = net.id_of(p["site"])
    except KeyError:
        raise ConfigError(f"proposal site {p['site']!r} is not a node name")
    port = p.get("port")
    kind = p["kind"]
    if kind == "flip":
        return flip_proposal(site, port=port)
    if kind == "discrete_uniform":
        domain = tuple(p.get("domain", (0, 1)))
        return discrete_uniform_proposal(site, domain, port=port)
    if kind == "gaussian_walk":
        return gaussian_walk_proposal(site, float(p.get("sigma", 1.0)), port=port)
    raise ConfigError(f"unknown proposal kind {kind!r}")


def run_one_chain(cfg: ExperimentConfig, index: int,
                  out_dir: Path | None) -> TraceAccumulator:
    rng = np.random.default_rng(derive_seed(cfg.seed, index))
    net = build_configured_network(cfg, rng)
    net.initialize(rng)
    schedule = [build_proposal(net, p) for p in cfg.proposals]
    site_ports = {p.target: resolve_port(net, p) for p in schedule}
    acc = TraceAccumulator(node_names={i: net.name_of(i) for i in net.node_ids()})

    if out_dir is None:
        run_chain(net, schedule, cfg.iterations, rng, sink=acc, scan=cfg.scan)
        return acc

    path = Path(out_dir) / f"trace_chain{index}.csv"
    with TraceWriter(path, net, site_ports) as writer:
        def sink(rec):
            writer(rec)
            acc(rec)
        run_chain(net, schedule, cfg.iterations, rng, sink=sink, scan=cfg.scan)
    return acc


def _chain_job(args) -> TraceAccumulator:
    doc, index, out_dir = args
    cfg = parse_config(doc)
    return run_one_chain(cfg, index, Path(out_dir) if out_dir else None)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run all chains and return the summary document. When out_dir is set,
    also write trace_chain<i>.csv per chain plus summary.json."""
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.workers > 1 and cfg.chains > 1:
        doc = asdict(cfg)
        doc["proposals"] = [dict(p) for p in cfg.proposals]
        jobs = [(doc, i, str(out_dir) if out_dir else None) for i in range(cfg.chains)]
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.chains)) as pool:
            accs = list(pool.map(_chain_job, jobs))
    else:
        accs = [run_one_chain(cfg, i, out_dir) for i in range(cfg.chains)]

    doc = summary_document(accs)
    if out_dir is not None:
        write_summary(out_dir / "summary.json", doc)
    return doc


def posterior_rate(summary: dict, site_name: str, value) -> float:
    """P-hat of a site value from a summary document's combined section."""
    rates = summary["combined"]["value_rates"].get(site_name, {})
    return rates.get(str(value), 0.0)
