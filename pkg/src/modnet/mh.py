"""Single-site Metropolis-Hastings over a module network.

One update proposes a new value for one unobserved node's output, regenerates
that node and its children against the proposal, and accepts or rejects on the
change in their stored log-weights plus the proposal ratio. Because every
regenerate draws fresh auxiliary randomness, the chain is valid as long as
each module's exp(lw) is an unbiased estimate of its output probability; no
module ever needs an exact density.

RNG consumption per update, in order: the proposal's own draws, then the
regenerating modules' draws (target node first, then children by ascending
id), then exactly one uniform for the accept test. The uniform is drawn even
when the decision is already forced, so the stream position never depends on
the outcome.

On accept, the target's outputs and every touched node's (log-weight, aux)
pair and recorded inputs are swapped in together. On reject, nothing is
touched: the discarded call results simply go out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from . import values
from .interface import SchemaError, check_log_weight
from .network import ModuleNetwork
from .values import Value


@dataclass(frozen=True)
class SiteProposal:
    """Transition proposal for one node's output port.

    sample(current, rng) draws a candidate Value; log_density(candidate,
    current) evaluates log r(candidate; current) so that asymmetric proposals
    are handled. port may be None when the target has a single output port.
    """

    target: int
    sample: Callable[[Value, Any], Value]
    log_density: Callable[[Value, Value], float]
    port: str | None = None


@dataclass(frozen=True)
class UpdateInfo:
    """What one update did: the site and proposed value, the fresh log-weight
    of every regenerated node (target plus children), and the outcome."""

    site: int
    port: str
    proposed_value: Any
    accepted: bool
    neg_inf_proposal: bool
    log_alpha: float
    regen_log_weights: dict[int, float]


@dataclass(frozen=True)
class ChainRecord:
    """One iteration of trace output.

    site_values is the chain state after the update, so its series is the
    usual MCMC trace. log_weights and total_log_weight report the evaluation
    the update performed: fresh regeneration results for the target and its
    children, stored values for untouched nodes. On an accepted iteration
    that coincides with the new state; on a rejected one it describes the
    discarded configuration (the target site at proposed_value), which is why
    the log-weight series keeps moving even while site_values sits still.
    """

    iteration: int
    site: int
    proposed_value: Any
    accepted: bool
    neg_inf_proposal: bool
    site_values: dict[int, Any]
    log_weights: dict[int, float]
    total_log_weight: float


@dataclass
class ChainSummary:
    iterations: int = 0
    proposals: dict[int, int] = field(default_factory=dict)
    accepts: dict[int, int] = field(default_factory=dict)

    def acceptance_rate(self, site: int) -> float:
        n = self.proposals.get(site, 0)
        return self.accepts.get(site, 0) / n if n else math.nan


def resolve_port(net: ModuleNetwork, proposal: SiteProposal) -> str:
    """The output port a proposal acts on; explicit, or the node's only one."""
    ports = net.module_of(proposal.target).output_ports
    if proposal.port is not None:
        if proposal.port not in ports:
            raise SchemaError(
                f"node {proposal.target} has no output port {proposal.port!r}"
            )
        return proposal.port
    if len(ports) != 1:
        raise SchemaError(
            f"node {proposal.target} has ports {ports}; proposal must name one"
        )
    return ports[0]


_resolve_port = resolve_port


def mh_update(net: ModuleNetwork, proposal: SiteProposal, rng) -> UpdateInfo:
    """One accept/reject step at proposal.target. See module docstring."""
    i = proposal.target
    if net.is_observed(i):
        raise SchemaError(f"node {i} is observed and cannot be a proposal site")
    port = _resolve_port(net, proposal)

    old_outputs = net.outputs_of(i)
    old_value = old_outputs[port]
    new_value = proposal.sample(old_value, rng)
    new_outputs = dict(old_outputs)
    new_outputs[port] = new_value
    override = {i: new_outputs}

    touched = [i] + [j for j in net.children(i) if j != i]
    regen: dict[int, tuple[dict, dict, float, Any]] = {}
    delta = 0.0
    neg_inf = False
    for j in touched:
        if j == i:
            x_j = net.inputs_of(i)
            z_j = new_outputs
        else:
            x_j = net.assemble_inputs(j, override=override)
            z_j = net.outputs_of(j)
        lw_new, aux_new = net.module_of(j).regenerate(x_j, z_j, rng)
        lw_new = check_log_weight(lw_new)
        regen[j] = (x_j, z_j, lw_new, aux_new)
        if lw_new == -math.inf:
            neg_inf = True
        else:
            delta += lw_new - net.lookup_log_weight(j)

    if neg_inf:
        log_alpha = -math.inf
    else:
        log_alpha = (
            proposal.log_density(old_value, new_value)
            - proposal.log_density(new_value, old_value)
            + delta
        )

    # One uniform per update regardless of outcome, drawn after all
    # regenerations, so the stream stays aligned across accept paths.
    u = rng.random()
    log_s = math.log(u) if u > 0.0 else -math.inf
    accepted = log_alpha != -math.inf and log_s <= log_alpha

    if accepted:
        net.set_outputs(i, new_outputs)
        for j, (x_j, _z_j, lw_new, aux_new) in regen.items():
            net.update_log_weight(j, lw_new, aux_new)
            net.set_inputs(j, x_j)

    return UpdateInfo(
        site=i,
        port=port,
        proposed_value=new_value.data,
        accepted=accepted,
        neg_inf_proposal=neg_inf,
        log_alpha=log_alpha,
        regen_log_weights={j: r[2] for j, r in regen.items()},
    )


def run_chain(
    net: ModuleNetwork,
    schedule: Sequence[SiteProposal],
    iterations: int,
    rng,
    sink: Callable[[ChainRecord], None] | None = None,
    scan: str = "random",
) -> ChainSummary:
    """Run a site-mixture chain, streaming one ChainRecord per iteration.

    scan="random" picks a schedule entry uniformly each iteration (one rng
    draw before the update); scan="cyclic" walks the schedule in order with
    no extra draw.
    """
    if not schedule:
        raise ValueError("schedule is empty")
    if scan not in ("random", "cyclic"):
        raise ValueError(f"unknown scan mode {scan!r}")
    seen = set()
    for prop in schedule:
        if net.is_observed(prop.target):
            raise SchemaError(f"schedule targets observed node {prop.target}")
        seen.add(prop.target)
    site_ports = {p.target: _resolve_port(net, p) for p in schedule}

    summary = ChainSummary(iterations=iterations)
    for it in range(iterations):
        k = int(rng.integers(len(schedule))) if scan == "random" else it % len(schedule)
        prop = schedule[k]
        info = mh_update(net, prop, rng)
        summary.proposals[info.site] = summary.proposals.get(info.site, 0) + 1
        if info.accepted:
            summary.accepts[info.site] = summary.accepts.get(info.site, 0) + 1
        if sink is not None:
            lws = {j: net.lookup_log_weight(j) for j in net.node_ids()}
            lws.update(info.regen_log_weights)
            total = 0.0
            for lw in lws.values():
                total += lw
            sink(ChainRecord(
                iteration=it,
                site=info.site,
                proposed_value=info.proposed_value,
                accepted=info.accepted,
                neg_inf_proposal=info.neg_inf_proposal,
                site_values={
                    s: net.outputs_of(s)[p].data for s, p in site_ports.items()
                },
                log_weights=lws,
                total_log_weight=total,
            ))
    return summary


def acceptance_stats(records: Iterable[ChainRecord]) -> dict:
    """Aggregate per-site acceptance rates and per-node log-weight moments."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    proposals: dict[int, int] = {}
    accepts: dict[int, int] = {}
    neg_inf = 0
    lw_acc: dict[int, list[float]] = {}
    for r in records:
        proposals[r.site] = proposals.get(r.site, 0) + 1
        if r.accepted:
            accepts[r.site] = accepts.get(r.site, 0) + 1
        if r.neg_inf_proposal:
            neg_inf += 1
        for j, lw in r.log_weights.items():
            lw_acc.setdefault(j, []).append(lw)
    lw_stats = {}
    for j, xs in lw_acc.items():
        mean = sum(xs) / len(xs)
        var = sum((x - mean) ** 2 for x in xs) / len(xs)
        lw_stats[j] = {"mean": mean, "variance": var}
    return {
        "iterations": len(records),
        "acceptance_rates": {
            s: accepts.get(s, 0) / n for s, n in proposals.items()
        },
        "proposals": proposals,
        "neg_inf_proposals": neg_inf,
        "log_weight_stats": lw_stats,
    }


# -- proposal library -------------------------------------------------------


def flip_proposal(target: int, port: str | None = None) -> SiteProposal:
    """Deterministic 0/1 flip; symmetric, so the ratio term vanishes."""

    def sample(current: Value, rng) -> Value:
        if current.kind != values.DISCRETE or current.data not in (0, 1):
            raise SchemaError("flip proposal needs a current value in {0, 1}")
        return values.discrete(1 - current.data)

    def log_density(candidate: Value, current: Value) -> float:
        return 0.0 if candidate.data == 1 - current.data else -math.inf

    return SiteProposal(target, sample, log_density, port)


def discrete_uniform_proposal(
    target: int, domain: Sequence[int], port: str | None = None
) -> SiteProposal:
    """Uniform redraw over a finite domain; may repropose the current value."""
    domain = tuple(int(v) for v in domain)
    if len(set(domain)) != len(domain) or not domain:
        raise ValueError("domain must be nonempty without duplicates")
    log_p = -math.log(len(domain))

    def sample(current: Value, rng) -> Value:
        return values.discrete(domain[int(rng.integers(len(domain)))])

    def log_density(candidate: Value, current: Value) -> float:
        return log_p if candidate.data in domain else -math.inf

    return SiteProposal(target, sample, log_density, port)


def gaussian_walk_proposal(
    target: int, sigma: float, port: str | None = None
) -> SiteProposal:
    """Random walk on a real-valued output."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")

    def sample(current: Value, rng) -> Value:
        if current.kind != values.REAL:
            raise SchemaError("gaussian walk proposal needs a real-valued site")
        return values.real(current.data + sigma * rng.standard_normal())

    def log_density(candidate: Value, current: Value) -> float:
        t = (candidate.data - current.data) / sigma
        return -0.5 * math.log(2.0 * math.pi) - math.log(sigma) - 0.5 * t * t

    return SiteProposal(target, sample, log_density, port)
