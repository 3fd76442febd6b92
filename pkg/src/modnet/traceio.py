"""Trace capture for chain runs: a CSV of per-iteration state and a JSON
summary of what the chain did.

Formatting is pinned so identical runs produce identical bytes: floats go
through repr (shortest round-trip form), vectors join entries with ';', and
JSON is dumped with sorted keys.

CSV schema, versioned below: one column per scheduled site holding that
site's current output value, named after the site's proposal port (falling
back to port_nodename when two sites share a port name), then lw_<node name>
for every node in topological order, then total_lw, then accepted (0/1).

The value columns trace the chain itself. The lw columns carry the
log-weights the iteration evaluated (see ChainRecord), so on rejected rows
they describe the discarded proposal rather than the retained state; the
accepted column says which. Regeneration is stochastic, so total_lw keeps
fluctuating even across stretches where every value column is constant.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

from .mh import ChainRecord
from .network import ModuleNetwork

CSV_SCHEMA_VERSION = 1


def format_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ";".join(format_cell(x) for x in v)
    raise TypeError(f"cannot format {type(v).__name__} into a trace cell")


def site_column_names(net: ModuleNetwork, site_ports: dict[int, str]) -> dict[int, str]:
    ports = list(site_ports.values())
    return {
        s: p if ports.count(p) == 1 else f"{p}_{net.name_of(s)}"
        for s, p in site_ports.items()
    }


class TraceWriter:
    """Streams ChainRecords to one CSV file. Use as the sink for run_chain;
    close (or use as a context manager) to flush."""

    def __init__(self, path, net: ModuleNetwork, site_ports: dict[int, str]):
        self.site_ids = tuple(site_ports)
        self.node_ids = tuple(net.node_ids())
        names = {i: net.name_of(i) for i in net.node_ids()}
        cols = site_column_names(net, site_ports)
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh)
        header = ["iteration"]
        header += [cols[s] for s in self.site_ids]
        header += [f"lw_{names[i]}" for i in self.node_ids]
        header += ["total_lw", "accepted"]
        self._csv.writerow(header)

    def __call__(self, rec: ChainRecord) -> None:
        row = [str(rec.iteration)]
        row += [format_cell(rec.site_values[s]) for s in self.site_ids]
        row += [format_cell(rec.log_weights[i]) for i in self.node_ids]
        row += [format_cell(rec.total_log_weight), "1" if rec.accepted else "0"]
        self._csv.writerow(row)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


@dataclass
class _Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def merge(self, other: "_Moments") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        d = other.mean - self.mean
        self.mean += d * other.count / n
        self.m2 += other.m2 + d * d * self.count * other.count / n
        self.count = n

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count else math.nan


@dataclass
class TraceAccumulator:
    """Running summary over a stream of ChainRecords: per-site value counts
    and acceptance counts, plus per-node log-weight moments grouped by the
    site value each evaluation used, which is the proposed value at the
    updated site and the current value elsewhere (infinite log-weights are
    counted, not averaged). Accumulators merge, so chains summarize
    independently and combine."""

    node_names: dict[int, str]
    iterations: int = 0
    frequencies: dict = field(default_factory=dict)
    proposals: dict = field(default_factory=dict)
    accepts: dict = field(default_factory=dict)
    neg_inf_proposals: int = 0
    lw_moments: dict = field(default_factory=dict)

    def __call__(self, rec: ChainRecord) -> None:
        self.iterations += 1
        self.proposals[rec.site] = self.proposals.get(rec.site, 0) + 1
        if rec.accepted:
            self.accepts[rec.site] = self.accepts.get(rec.site, 0) + 1
        if rec.neg_inf_proposal:
            self.neg_inf_proposals += 1
        for s, v in rec.site_values.items():
            key = format_cell(v)
            per_site = self.frequencies.setdefault(s, {})
            per_site[key] = per_site.get(key, 0) + 1
            used = rec.proposed_value if s == rec.site else v
            by_val = self.lw_moments.setdefault(s, {}).setdefault(
                format_cell(used), {}
            )
            for node, lw in rec.log_weights.items():
                if lw != -math.inf:
                    by_val.setdefault(node, _Moments()).add(lw)
            if rec.total_log_weight != -math.inf:
                by_val.setdefault("total", _Moments()).add(rec.total_log_weight)

    def merge(self, other: "TraceAccumulator") -> None:
        self.iterations += other.iterations
        self.neg_inf_proposals += other.neg_inf_proposals
        for s, n in other.proposals.items():
            self.proposals[s] = self.proposals.get(s, 0) + n
        for s, n in other.accepts.items():
            self.accepts[s] = self.accepts.get(s, 0) + n
        for s, per_site in other.frequencies.items():
            mine = self.frequencies.setdefault(s, {})
            for k, n in per_site.items():
                mine[k] = mine.get(k, 0) + n
        for s, per_site in other.lw_moments.items():
            mine = self.lw_moments.setdefault(s, {})
            for k, by_node in per_site.items():
                row = mine.setdefault(k, {})
                for node, mom in by_node.items():
                    row.setdefault(node, _Moments()).merge(mom)

    def to_jsonable(self) -> dict:
        def label(node) -> str:
            return node if node == "total" else f"lw_{self.node_names[node]}"

        name = self.node_names
        return {
            "iterations": self.iterations,
            "neg_inf_proposals": self.neg_inf_proposals,
            "value_counts": {
                name[s]: dict(sorted(per.items()))
                for s, per in sorted(self.frequencies.items())
            },
            "value_rates": {
                name[s]: {k: n / self.iterations for k, n in sorted(per.items())}
                for s, per in sorted(self.frequencies.items())
            },
            "acceptance_rates": {
                name[s]: self.accepts.get(s, 0) / n
                for s, n in sorted(self.proposals.items()) if n
            },
            "lw_variance_by_value": {
                name[s]: {
                    k: {label(node): by_node[node].variance
                        for node in sorted(by_node, key=str)}
                    for k, by_node in sorted(per.items())
                }
                for s, per in sorted(self.lw_moments.items())
            },
        }


def summary_document(per_chain: list[TraceAccumulator]) -> dict:
    combined = TraceAccumulator(node_names=dict(per_chain[0].node_names))
    for acc in per_chain:
        combined.merge(acc)
    return {
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "chains": [acc.to_jsonable() for acc in per_chain],
        "combined": combined.to_jsonable(),
    }


def write_summary(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
