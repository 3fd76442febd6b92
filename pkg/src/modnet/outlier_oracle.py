"""Exact reference answers for the outlier-regression experiment.

Everything here goes through brute-force enumeration (oracle.py) plus a
hand-rolled conjugate Gaussian marginal likelihood, sharing no machinery with
the inference engine. The constants file is re-read and re-interpreted here on
purpose; only the raw JSON is common ground.

Model being scored: a three-stage binary switch prior feeding a 9-point linear
regression whose per-point noise scale is chosen by latent outlier indicators,
with the regression line integrated out analytically.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from typing import Mapping, Sequence

from .oracle import (
    ContinuousLeaf,
    Factor,
    FactoredDiscreteModel,
    enumerate_joint,
    log_evidence,
    posterior,
)

_SWITCH_VARS = ("u1", "u2", "u3", "a")


def load_constants() -> dict:
    text = (
        resources.files("modnet")
        .joinpath("configs/outlier_regression.json")
        .read_text(encoding="utf-8")
    )
    return json.loads(text)


def _bern_factor(var: str, parents: tuple[str, ...], p_one_by_parent) -> Factor:
    if not parents:
        p = float(p_one_by_parent)
        return Factor(var, (0, 1), (), {(): (1.0 - p, p)})
    rows = {}
    for parent_val in (0, 1):
        p = float(p_one_by_parent[parent_val])
        rows[(parent_val,)] = (1.0 - p, p)
    return Factor(var, (0, 1), parents, rows)


def switch_prior_model(constants: Mapping | None = None) -> FactoredDiscreteModel:
    """The binary switch prior as a four-variable chain u1 -> u2 -> u3 -> a."""
    constants = constants or load_constants()
    cpts = constants["switch_prior"]
    return FactoredDiscreteModel(
        [
            _bern_factor("u1", (), cpts["u1"]),
            _bern_factor("u2", ("u1",), cpts["u2"]),
            _bern_factor("u3", ("u2",), cpts["u3"]),
            _bern_factor("a", ("u3",), cpts["a"]),
        ]
    )


def switch_marginal(constants: Mapping | None = None) -> dict[int, float]:
    """Exact p(a) by summing the 16-row joint."""
    joint = enumerate_joint(switch_prior_model(constants))
    out = {0: 0.0, 1: 0.0}
    for config, prob in joint.items():
        out[config[_SWITCH_VARS.index("a")]] += prob
    return out


def conjugate_log_marginal(
    xs: Sequence[float],
    bs: Sequence[float],
    sigmas: Sequence[float],
    prior_mean: Sequence[float],
    prior_var: Sequence[float],
) -> float:
    """log p(bs) for b_i = c + m*x_i + eps_i with (c, m) integrated out.

    Prior (c, m) ~ N(prior_mean, diag(prior_var)), eps_i ~ N(0, sigmas[i]^2).
    Computed in precision form with explicit 2x2 determinant and Cramer solve;
    no matrix library involved.
    """
    n = len(xs)
    if not (len(bs) == len(sigmas) == n):
        raise ValueError("xs, bs, sigmas must have equal length")
    l0_c = 1.0 / prior_var[0]
    l0_m = 1.0 / prior_var[1]
    # Posterior precision [[acc, abm], [abm, amm]] and shift eta.
    acc = l0_c
    abm = 0.0
    amm = l0_m
    eta_c = l0_c * prior_mean[0]
    eta_m = l0_m * prior_mean[1]
    quad_obs = 0.0
    log_sigma_sum = 0.0
    for x, b, s in zip(xs, bs, sigmas):
        w = 1.0 / (s * s)
        acc += w
        abm += w * x
        amm += w * x * x
        eta_c += w * b
        eta_m += w * b * x
        quad_obs += w * b * b
        log_sigma_sum += math.log(s)
    det0 = l0_c * l0_m
    detn = acc * amm - abm * abm
    quad_post = (amm * eta_c * eta_c - 2.0 * abm * eta_c * eta_m + acc * eta_m * eta_m) / detn
    quad_prior = l0_c * prior_mean[0] * prior_mean[0] + l0_m * prior_mean[1] * prior_mean[1]
    return (
        -0.5 * n * math.log(2.0 * math.pi)
        - log_sigma_sum
        + 0.5 * (math.log(det0) - math.log(detn))
        + 0.5 * (quad_post - quad_prior - quad_obs)
    )


def full_model(constants: Mapping | None = None) -> FactoredDiscreteModel:
    """Complete discrete skeleton (u1, u2, u3, a, o1..o9) with the response
    vector as a continuous leaf. 2^13 configurations, enumerable directly."""
    constants = constants or load_constants()
    cpts = constants["switch_prior"]
    reg = constants["regression"]
    xs = tuple(constants["dataset"]["covariates"])
    rate = {0: float(reg["outlier_rate"]["0"]), 1: float(reg["outlier_rate"]["1"])}
    factors = [
        _bern_factor("u1", (), cpts["u1"]),
        _bern_factor("u2", ("u1",), cpts["u2"]),
        _bern_factor("u3", ("u2",), cpts["u3"]),
        _bern_factor("a", ("u3",), cpts["a"]),
    ]
    for i in range(len(xs)):
        factors.append(_bern_factor(f"o{i + 1}", ("a",), (rate[0], rate[1])))
    sigma = (float(reg["sigma_inlier"]), float(reg["sigma_outlier"]))
    prior_mean = tuple(reg["prior_mean"])
    prior_var = tuple(reg["prior_var"])

    def leaf_log_density(config: dict, obs) -> float:
        sigmas = [sigma[config[f"o{i + 1}"]] for i in range(len(xs))]
        return conjugate_log_marginal(xs, obs, sigmas, prior_mean, prior_var)

    return FactoredDiscreteModel(factors, leaf=ContinuousLeaf("b", leaf_log_density))


def compute_fixtures(constants: Mapping | None = None) -> dict:
    """All oracle constants the test suite pins against, as one JSON document."""
    constants = constants or load_constants()
    ds = constants["dataset"]
    bs = tuple(ds["responses"])
    model = full_model(constants)
    prior_a = switch_marginal(constants)
    log_ev = {a: log_evidence(model, {"a": a, "b": bs}) for a in (0, 1)}
    post = posterior(model, {"b": bs}, ("a",))
    return {
        "schema": 1,
        "dataset": {
            "covariates": list(ds["covariates"]),
            "responses": list(ds["responses"]),
            "seed": ds["seed"],
        },
        "switch_marginal": {"0": prior_a[0], "1": prior_a[1]},
        "log_evidence_by_switch": {
            "0": log_ev[0] - math.log(prior_a[0]),
            "1": log_ev[1] - math.log(prior_a[1]),
        },
        "log_evidence_joint_by_switch": {"0": log_ev[0], "1": log_ev[1]},
        "posterior_switch_one": post[(1,)],
        "log_evidence_dataset": log_evidence(model, {"b": bs}),
    }


def fixture_groups(constants: Mapping | None = None) -> dict[str, dict]:
    """compute_fixtures split by the model each key describes, so callers can
    assemble fixture files for a subset of models. Keys of the groups are
    disjoint; the "schema" marker belongs to the assembled document, not to
    any group."""
    full = compute_fixtures(constants)
    prior = {"switch_marginal": full["switch_marginal"]}
    rest = {
        k: v for k, v in full.items() if k not in ("switch_marginal", "schema")
    }
    return {"switch_prior": prior, "outlier_regression": rest}


def write_fixtures(path, doc: dict) -> None:
    """Serialize a fixture document the one pinned way (sorted keys, indent 2,
    trailing newline) so repeated runs are byte-identical."""
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
