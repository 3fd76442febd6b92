"""Tagged values exchanged between modules over named ports.

A Value is immutable and hashable so network state can be snapshotted and
compared bit-for-bit. Real payloads must be finite: log-weights are the only
place infinities are meaningful, and they are plain floats, not Values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

DISCRETE = "discrete"
REAL = "real"
DISCRETE_VECTOR = "discrete_vector"
REAL_VECTOR = "real_vector"

_KINDS = (DISCRETE, REAL, DISCRETE_VECTOR, REAL_VECTOR)


@dataclass(frozen=True)
class Value:
    kind: str
    data: Any

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown value kind {self.kind!r}")
        if self.kind == DISCRETE:
            if not isinstance(self.data, int) or isinstance(self.data, bool):
                raise ValueError("discrete payload must be an int")
        elif self.kind == REAL:
            if not isinstance(self.data, float):
                raise ValueError("real payload must be a float")
            if not math.isfinite(self.data):
                raise ValueError("real payload must be finite")
        elif self.kind == DISCRETE_VECTOR:
            if not isinstance(self.data, tuple) or any(
                not isinstance(v, int) or isinstance(v, bool) for v in self.data
            ):
                raise ValueError("discrete_vector payload must be a tuple of ints")
        else:
            if not isinstance(self.data, tuple) or any(
                not isinstance(v, float) for v in self.data
            ):
                raise ValueError("real_vector payload must be a tuple of floats")
            if any(not math.isfinite(v) for v in self.data):
                raise ValueError("real_vector payload must be finite")

    def __len__(self) -> int:
        if self.kind in (DISCRETE, REAL):
            raise TypeError(f"{self.kind} value has no length")
        return len(self.data)


def discrete(v: int) -> Value:
    return Value(DISCRETE, int(v))


def real(v: float) -> Value:
    return Value(REAL, float(v))


def discrete_vector(vs) -> Value:
    return Value(DISCRETE_VECTOR, tuple(int(v) for v in vs))


def real_vector(vs) -> Value:
    return Value(REAL_VECTOR, tuple(float(v) for v in vs))


def to_json(value: Value) -> dict:
    data = list(value.data) if isinstance(value.data, tuple) else value.data
    return {"kind": value.kind, "value": data}


def from_json(doc: dict) -> Value:
    if not isinstance(doc, dict) or set(doc) != {"kind", "value"}:
        raise ValueError(f"malformed value document: {doc!r}")
    kind, data = doc["kind"], doc["value"]
    if kind == DISCRETE:
        return discrete(data)
    if kind == REAL:
        return real(data)
    if kind == DISCRETE_VECTOR:
        return discrete_vector(data)
    if kind == REAL_VECTOR:
        return real_vector(data)
    raise ValueError(f"unknown value kind {kind!r}")
