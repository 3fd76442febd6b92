"""Directed acyclic networks of modules wired port-to-port.

A network owns all mutable inference state: current outputs per node, plus the
(log-weight, aux) pair from the most recent call that produced them. The pair
lives in a single slot and is only ever replaced whole, so a log-weight can
never be paired with auxiliary state from a different call. Observed nodes
have their outputs fixed at construction and never change.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .interface import (
    DegenerateTraceError,
    ModnetError,
    ModuleIO,
    ProbModule,
    SchemaError,
    check_log_weight,
)
from .values import Value

log = logging.getLogger("modnet.network")


class NetworkBuildError(ModnetError):
    """The node/edge/observation description does not define a valid network."""


class UninitializedNodeError(ModnetError):
    """State was read from a node before initialize() populated it."""


@dataclass(frozen=True)
class NodeSpec:
    id: int
    module: ProbModule
    name: str | None = None


@dataclass(frozen=True)
class EdgeSpec:
    src: int
    src_port: str
    dst: int
    dst_port: str


class _Node:
    __slots__ = (
        "id", "name", "module", "observed", "wiring",
        "inputs", "outputs", "state",
    )

    def __init__(self, spec: NodeSpec, observed: bool):
        self.id = spec.id
        self.name = spec.name if spec.name is not None else str(spec.id)
        self.module = spec.module
        self.observed = observed
        self.wiring: dict[str, tuple[int, str]] = {}  # dst_port -> (src id, src port)
        self.inputs: ModuleIO | None = None
        self.outputs: ModuleIO | None = None
        self.state: tuple[float, Any] | None = None  # (log-weight, aux), one slot


class ModuleNetwork:
    """Built via build_network; see module docstring for the state protocol."""

    def __init__(self, nodes: dict[int, _Node], order: tuple[int, ...],
                 children: dict[int, tuple[int, ...]]):
        self._nodes = nodes
        self.order = order
        self._children = children
        self.initialized = False

    # -- topology ----------------------------------------------------------

    def node_ids(self) -> tuple[int, ...]:
        return self.order

    def children(self, node_id: int) -> tuple[int, ...]:
        return self._children[node_id]

    def is_observed(self, node_id: int) -> bool:
        return self._node(node_id).observed

    def name_of(self, node_id: int) -> str:
        return self._node(node_id).name

    def id_of(self, name: str) -> int:
        for node in self._nodes.values():
            if node.name == name:
                return node.id
        raise KeyError(name)

    def module_of(self, node_id: int) -> ProbModule:
        return self._node(node_id).module

    def unobserved_ids(self) -> tuple[int, ...]:
        return tuple(i for i in self.order if not self._nodes[i].observed)

    def _node(self, node_id: int) -> _Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NetworkBuildError(f"no node with id {node_id}") from None

    # -- state access ------------------------------------------------------

    def outputs_of(self, node_id: int) -> ModuleIO:
        node = self._node(node_id)
        if node.outputs is None:
            raise UninitializedNodeError(f"node {node_id} has no outputs yet")
        return node.outputs

    def inputs_of(self, node_id: int) -> ModuleIO:
        node = self._node(node_id)
        if node.inputs is None:
            raise UninitializedNodeError(f"node {node_id} has no recorded inputs yet")
        return node.inputs

    def lookup_log_weight(self, node_id: int) -> float:
        node = self._node(node_id)
        if node.state is None:
            raise UninitializedNodeError(f"node {node_id} has no log-weight yet")
        return node.state[0]

    def lookup_aux(self, node_id: int) -> Any:
        node = self._node(node_id)
        if node.state is None:
            raise UninitializedNodeError(f"node {node_id} has no aux state yet")
        return node.state[1]

    def update_log_weight(self, node_id: int, lw: float, aux: Any) -> None:
        """Overwrite a node's (log-weight, aux) pair atomically."""
        node = self._node(node_id)
        if node.state is None:
            raise UninitializedNodeError(f"node {node_id} was never initialized")
        node.state = (check_log_weight(lw), aux)

    def total_log_weight(self) -> float:
        """Sum of per-node log-weights in topological order; -inf absorbs."""
        total = 0.0
        for i in self.order:
            node = self._nodes[i]
            if node.state is None:
                raise UninitializedNodeError(f"node {i} has no log-weight yet")
            total += node.state[0]
        return total

    def assemble_inputs(self, node_id: int,
                        override: Mapping[int, ModuleIO] | None = None) -> ModuleIO:
        """Gather a node's inputs from its parents' current outputs.

        override maps node id to a replacement outputs dict, used to evaluate
        a child under a proposed parent value without mutating anything.
        """
        node = self._node(node_id)
        inputs: ModuleIO = {}
        for dst_port, (src, src_port) in node.wiring.items():
            src_outputs = None if override is None else override.get(src)
            if src_outputs is None:
                src_outputs = self.outputs_of(src)
            inputs[dst_port] = src_outputs[src_port]
        return inputs

    def set_outputs(self, node_id: int, outputs: ModuleIO) -> None:
        """Replace an unobserved node's outputs (accepted proposals only)."""
        node = self._node(node_id)
        if node.observed:
            raise SchemaError(f"node {node_id} is observed; outputs are immutable")
        node.module.check_outputs(outputs)
        node.outputs = dict(outputs)

    def set_inputs(self, node_id: int, inputs: ModuleIO) -> None:
        node = self._node(node_id)
        node.module.check_inputs(inputs)
        node.inputs = dict(inputs)

    # -- initialization ----------------------------------------------------

    def initialize(self, rng, max_attempts: int = 100) -> None:
        """Populate every node in topological order.

        Unobserved nodes simulate; observed nodes regenerate their fixed
        outputs. An observed node scoring -inf (or a degenerate simulate)
        voids the attempt and the whole pass restarts, up to max_attempts.
        """
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        for attempt in range(max_attempts):
            if self._try_initialize(rng):
                self.initialized = True
                return
            log.debug("initialization attempt %d hit a zero-probability trace", attempt + 1)
        raise DegenerateTraceError(
            f"initialization failed {max_attempts} times; an observation may have "
            "probability zero under every reachable parent configuration"
        )

    def _try_initialize(self, rng) -> bool:
        staged: dict[int, tuple[ModuleIO, ModuleIO, float, Any]] = {}
        outputs_so_far: dict[int, ModuleIO] = {}
        for i in self.order:
            node = self._nodes[i]
            inputs = {
                port: outputs_so_far[src][src_port]
                for port, (src, src_port) in node.wiring.items()
            }
            node.module.check_inputs(inputs)
            if node.observed:
                lw, aux = node.module.regenerate(inputs, node.outputs, rng)
                lw = check_log_weight(lw)
                if lw == -math.inf:
                    return False
                outs = node.outputs
            else:
                try:
                    outs, lw, aux = node.module.simulate(inputs, rng)
                except DegenerateTraceError:
                    return False
                node.module.check_outputs(outs)
                lw = check_log_weight(lw)
            staged[i] = (inputs, outs, lw, aux)
            outputs_so_far[i] = outs
        for i, (inputs, outs, lw, aux) in staged.items():
            node = self._nodes[i]
            node.inputs = inputs
            if not node.observed:
                node.outputs = dict(outs)
            node.state = (lw, aux)
        return True


def build_network(
    nodes: Iterable[NodeSpec],
    edges: Iterable[EdgeSpec],
    observations: Mapping[int, ModuleIO] | None = None,
) -> ModuleNetwork:
    """Validate and assemble a module network.

    Checks: unique ids and names, every edge endpoint exists and names a real
    port, every input port is driven by exactly one edge, the graph is acyclic,
    and observations exactly cover the output schema of existing nodes.
    """
    observations = dict(observations or {})
    specs = list(nodes)
    edge_list = list(edges)

    by_id: dict[int, _Node] = {}
    names: set[str] = set()
    for spec in specs:
        if not isinstance(spec.id, int) or isinstance(spec.id, bool):
            raise NetworkBuildError(f"node id {spec.id!r} is not an int")
        if spec.id in by_id:
            raise NetworkBuildError(f"duplicate node id {spec.id}")
        node = _Node(spec, observed=spec.id in observations)
        if node.name in names:
            raise NetworkBuildError(f"duplicate node name {node.name!r}")
        names.add(node.name)
        by_id[spec.id] = node

    for obs_id in observations:
        if obs_id not in by_id:
            raise NetworkBuildError(f"observation targets unknown node {obs_id}")

    for e in edge_list:
        if e.src not in by_id:
            raise NetworkBuildError(f"edge source {e.src} does not exist")
        if e.dst not in by_id:
            raise NetworkBuildError(f"edge target {e.dst} does not exist")
        if e.src_port not in by_id[e.src].module.output_ports:
            raise NetworkBuildError(
                f"node {e.src} has no output port {e.src_port!r}"
            )
        if e.dst_port not in by_id[e.dst].module.input_ports:
            raise NetworkBuildError(
                f"node {e.dst} has no input port {e.dst_port!r}"
            )
        if e.dst_port in by_id[e.dst].wiring:
            raise NetworkBuildError(
                f"input port {e.dst_port!r} of node {e.dst} is driven twice"
            )
        by_id[e.dst].wiring[e.dst_port] = (e.src, e.src_port)

    for node in by_id.values():
        missing = set(node.module.input_ports) - set(node.wiring)
        if missing:
            raise NetworkBuildError(
                f"node {node.id}: input ports {sorted(missing)} are unbound"
            )

    # Kahn's algorithm; whatever survives with in-degree > 0 sits on a cycle.
    indeg = {i: 0 for i in by_id}
    children: dict[int, set[int]] = {i: set() for i in by_id}
    for node in by_id.values():
        for src, _ in node.wiring.values():
            children[src].add(node.id)
    for node in by_id.values():
        indeg[node.id] = len({src for src, _ in node.wiring.values()})
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order: list[int] = []
    parent_count = {
        i: len({src for src, _ in by_id[i].wiring.values()}) for i in by_id
    }
    remaining = dict(parent_count)
    while ready:
        i = ready.pop(0)
        order.append(i)
        for c in sorted(children[i]):
            remaining[c] -= 1
            if remaining[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != len(by_id):
        cyclic = sorted(set(by_id) - set(order))
        raise NetworkBuildError(f"cycle detected among nodes {cyclic}")

    for obs_id, outs in observations.items():
        node = by_id[obs_id]
        if set(outs) != set(node.module.output_ports):
            raise NetworkBuildError(
                f"observation for node {obs_id} must provide exactly ports "
                f"{sorted(node.module.output_ports)}"
            )
        for port, val in outs.items():
            if not isinstance(val, Value):
                raise NetworkBuildError(
                    f"observation {obs_id}.{port} is not a Value"
                )
        node.outputs = dict(outs)

    return ModuleNetwork(
        by_id,
        tuple(order),
        {i: tuple(sorted(children[i])) for i in by_id},
    )
