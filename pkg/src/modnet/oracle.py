"""Brute-force enumeration oracle for small discrete models.

This is the verification path the test suite trusts: plain dictionaries,
explicit sums over every configuration, nothing shared with the inference
engine. Models are factored as CPTs in topological order, optionally with one
continuous leaf whose marginal density given a full discrete configuration is
available in closed form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

MAX_CONFIGS = 1 << 20
_ROW_TOL = 1e-9


class UndefinedConditionalError(ValueError):
    """Conditioning event has probability zero."""


@dataclass(frozen=True)
class Factor:
    """CPT for one variable: rows keyed by parent-value tuples."""

    var: str
    domain: tuple
    parents: tuple[str, ...]
    table: Mapping[tuple, tuple[float, ...]]


@dataclass(frozen=True)
class ContinuousLeaf:
    """One continuous observation hanging off the discrete skeleton.

    log_density(config, obs) must return the closed-form log marginal density
    of obs given the full discrete configuration.
    """

    name: str
    log_density: Callable[[dict, Any], float]


class FactoredDiscreteModel:
    def __init__(self, factors, leaf: ContinuousLeaf | None = None):
        self.factors = tuple(factors)
        self.leaf = leaf
        self._validate()

    def _validate(self):
        seen: list[str] = []
        for f in self.factors:
            if f.var in seen:
                raise ValueError(f"duplicate variable {f.var!r}")
            for p in f.parents:
                if p not in seen:
                    raise ValueError(
                        f"factor {f.var!r} references {p!r} before it is defined"
                    )
            if not f.domain:
                raise ValueError(f"factor {f.var!r} has empty domain")
            parent_domains = [d for v in f.parents for d in [self._domain(v)]]
            expected_rows = 1
            for d in parent_domains:
                expected_rows *= len(d)
            if len(f.table) != expected_rows:
                raise ValueError(
                    f"factor {f.var!r}: expected {expected_rows} rows, got {len(f.table)}"
                )
            for key, probs in f.table.items():
                if len(key) != len(f.parents):
                    raise ValueError(f"factor {f.var!r}: bad row key {key!r}")
                if len(probs) != len(f.domain):
                    raise ValueError(f"factor {f.var!r}: row {key!r} has wrong arity")
                if any(p < 0.0 for p in probs):
                    raise ValueError(f"factor {f.var!r}: negative probability")
                if abs(sum(probs) - 1.0) > _ROW_TOL:
                    raise ValueError(f"factor {f.var!r}: row {key!r} does not sum to 1")
            seen.append(f.var)
        if self.leaf is not None and self.leaf.name in seen:
            raise ValueError(f"leaf name {self.leaf.name!r} clashes with a variable")
        n = 1
        for f in self.factors:
            n *= len(f.domain)
            if n > MAX_CONFIGS:
                raise ValueError("model too large to enumerate")

    def _domain(self, var: str) -> tuple:
        for f in self.factors:
            if f.var == var:
                return f.domain
        raise KeyError(var)

    def variables(self) -> tuple[str, ...]:
        return tuple(f.var for f in self.factors)

    def config_prob(self, config: dict) -> float:
        """Joint probability of one full discrete configuration."""
        prob = 1.0
        for f in self.factors:
            key = tuple(config[p] for p in f.parents)
            val = config[f.var]
            if val not in f.domain:
                return 0.0
            prob *= f.table[key][f.domain.index(val)]
        return prob


def _logsumexp(vals):
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in vals))


def _configs(model: FactoredDiscreteModel, fixed: Mapping[str, Any]):
    """Yield full configurations consistent with the fixed assignments."""
    names = model.variables()
    domains = []
    for f in model.factors:
        if f.var in fixed:
            if fixed[f.var] not in f.domain:
                return
            domains.append((fixed[f.var],))
        else:
            domains.append(f.domain)
    n = 1
    for d in domains:
        n *= len(d)
    if n > MAX_CONFIGS:
        raise ValueError("enumeration space exceeds the configuration cap")
    for combo in itertools.product(*domains):
        yield dict(zip(names, combo))


def enumerate_joint(model: FactoredDiscreteModel) -> dict[tuple, float]:
    """Exact joint over all discrete variables, keyed by value tuples.

    Only defined for fully discrete models; a continuous leaf has no finite
    joint table.
    """
    if model.leaf is not None:
        raise ValueError("enumerate_joint requires a fully discrete model")
    names = model.variables()
    joint = {}
    for config in _configs(model, {}):
        joint[tuple(config[v] for v in names)] = model.config_prob(config)
    total = sum(joint.values())
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"joint sums to {total}, expected 1")
    return joint


def log_evidence(model: FactoredDiscreteModel, observation: Mapping[str, Any]) -> float:
    """log p(observation), summing the joint over unobserved configurations."""
    observation = dict(observation)
    leaf_obs = None
    if model.leaf is not None and model.leaf.name in observation:
        leaf_obs = observation.pop(model.leaf.name)
    unknown = set(observation) - set(model.variables())
    if unknown:
        raise ValueError(f"observation names unknown variables: {sorted(unknown)}")
    terms = []
    for config in _configs(model, observation):
        p = model.config_prob(config)
        if p == 0.0:
            continue
        lp = math.log(p)
        if leaf_obs is not None:
            lp += model.leaf.log_density(config, leaf_obs)
        terms.append(lp)
    if not terms:
        return -math.inf
    return _logsumexp(terms)


def evidence(model: FactoredDiscreteModel, observation: Mapping[str, Any]) -> float:
    return math.exp(log_evidence(model, observation))


def posterior(
    model: FactoredDiscreteModel,
    observation: Mapping[str, Any],
    query: tuple[str, ...],
) -> dict[tuple, float]:
    """Exact posterior over query-variable tuples given the observation."""
    observation = dict(observation)
    leaf_obs = None
    if model.leaf is not None and model.leaf.name in observation:
        leaf_obs = observation.pop(model.leaf.name)
    for q in query:
        model._domain(q)  # raises KeyError for unknown names
        if q in observation:
            raise ValueError(f"query variable {q!r} is observed")
    log_terms: dict[tuple, list[float]] = {}
    for config in _configs(model, observation):
        p = model.config_prob(config)
        if p == 0.0:
            continue
        lp = math.log(p)
        if leaf_obs is not None:
            lp += model.leaf.log_density(config, leaf_obs)
        key = tuple(config[q] for q in query)
        log_terms.setdefault(key, []).append(lp)
    if not log_terms:
        raise UndefinedConditionalError("observation has probability zero")
    log_probs = {k: _logsumexp(v) for k, v in log_terms.items()}
    log_total = _logsumexp(list(log_probs.values()))
    return {k: math.exp(lp - log_total) for k, lp in log_probs.items()}
