"""Sequential Monte Carlo as a module backend.

A SequentialModel describes per-step latents proposed from their prior and a
per-step observation likelihood; smc_run estimates the normalizing constant
with multinomial resampling at every step, and the resulting log Z-hat is the
module log-weight. The conditional variant (csmc_run) reruns the sweep with
one uniformly chosen particle slot pinned to a given latent trajectory; it is
what simulate uses to score a forward sample. Why log Z-hat is the right
log-weight on both paths is worked through in docs/smc-module-weights.md.

The running estimate uses max-shifted logsumexp with a fixed left-to-right
reduction, and recompute_log_z replays the stored particle system through the
identical operations, so the two agree bit-for-bit, not just approximately.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Any

from .interface import DegenerateTraceError, ModuleIO, ProbModule, SchemaError


def logsumexp(vals) -> float:
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in vals))


class SequentialModel:
    """Stepwise model contract consumed by smc_run/csmc_run.

    States are treated as immutable: advance_state returns a new state and
    must be deterministic, which is what makes replay verification exact.
    finalize_extra samples any non-sequential latents from their exact
    conditional given the final state (return None when there are none).
    """

    num_steps: int
    input_ports: tuple[str, ...] = ()
    output_ports: tuple[str, ...] = ()

    def initial_state(self, inputs: ModuleIO):
        raise NotImplementedError

    def prior_sample(self, t: int, state, inputs: ModuleIO, rng):
        raise NotImplementedError

    def prior_logpdf(self, t: int, state, inputs: ModuleIO, latent) -> float:
        raise NotImplementedError

    def obs_sample(self, t: int, state, inputs: ModuleIO, latent, rng):
        raise NotImplementedError

    def obs_log_weight(self, t: int, state, inputs: ModuleIO, latent, obs) -> float:
        raise NotImplementedError

    def advance_state(self, t: int, state, inputs: ModuleIO, latent, obs):
        raise NotImplementedError

    def finalize_extra(self, state, inputs: ModuleIO, rng):
        return None

    def pack_outputs(self, obs_list) -> ModuleIO:
        raise NotImplementedError

    def unpack_outputs(self, outputs: ModuleIO) -> list:
        raise NotImplementedError


@dataclass(frozen=True)
class Latents:
    """One full latent assignment: per-step values plus non-sequential extras."""

    steps: tuple
    extra: Any = None


@dataclass(frozen=True)
class MetaInferenceRecord:
    retained: tuple
    slots: tuple[int, ...]


@dataclass(frozen=True)
class ParticleSystem:
    """Everything a sweep did: values, weights, ancestry, selection, log Z-hat.

    latents[t][p] is the value particle p proposed at step t, after that
    step's resampling relabeled particles; ancestors[t][p] says which step
    t-1 particle it continued (ancestors[0] is the identity row).
    """

    num_particles: int
    latents: tuple[tuple, ...]
    log_weights: tuple[tuple[float, ...], ...]
    ancestors: tuple[tuple[int, ...], ...]
    selected: int
    log_z: float
    meta: MetaInferenceRecord | None = None


@dataclass(frozen=True)
class SmcAux:
    """Auxiliary record stored in the network: trajectory plus its sweep."""

    latents: Latents
    particles: ParticleSystem


def _weights_to_cumulative(log_w) -> list[float] | None:
    """Normalized cumulative weights, or None when everything is -inf."""
    m = max(log_w)
    if m == -math.inf:
        return None
    probs = [math.exp(w - m) for w in log_w]
    total = sum(probs)
    cum = []
    acc = 0.0
    for p in probs:
        acc += p / total
        cum.append(acc)
    cum[-1] = 1.0
    return cum


def _multinomial_row(cum, K, rng) -> list[int]:
    us = rng.random(K).tolist()
    return [min(bisect_right(cum, u), K - 1) for u in us]


def _uniform_row(K, rng) -> list[int]:
    return [int(a) for a in rng.integers(0, K, size=K)]


def smc_run(model: SequentialModel, inputs: ModuleIO, outputs: ModuleIO,
            num_particles: int, rng) -> tuple[Latents, ParticleSystem]:
    """One sweep conditioned on outputs; returns a selected trajectory and
    the particle system with its log normalizing-constant estimate.

    If every particle dies at some step the sweep keeps going under uniform
    resampling so a structurally valid trajectory still comes back, but
    log Z-hat is -inf.
    """
    K = int(num_particles)
    if K < 1:
        raise ValueError("need at least one particle")
    obs = model.unpack_outputs(outputs)
    T = model.num_steps
    if len(obs) != T:
        raise SchemaError(f"expected {T} observation steps, got {len(obs)}")

    log_k = math.log(K)
    state0 = model.initial_state(inputs)
    states = [state0] * K
    trajs: list[list] = [[] for _ in range(K)]
    lat_rows, w_rows, anc_rows = [], [], []
    log_z = 0.0
    prev_w: list[float] | None = None
    prior_sample = model.prior_sample
    obs_log_weight = model.obs_log_weight
    advance_state = model.advance_state

    for t in range(T):
        if t == 0:
            anc = list(range(K))
        else:
            cum = _weights_to_cumulative(prev_w)
            anc = _uniform_row(K, rng) if cum is None else _multinomial_row(cum, K, rng)
            states = [states[a] for a in anc]
            trajs = [list(trajs[a]) for a in anc]
        row_lat, row_w = [], []
        ob = obs[t]
        for p in range(K):
            st = states[p]
            lat = prior_sample(t, st, inputs, rng)
            row_lat.append(lat)
            row_w.append(obs_log_weight(t, st, inputs, lat, ob))
            states[p] = advance_state(t, st, inputs, lat, ob)
            trajs[p].append(lat)
        log_z += logsumexp(row_w) - log_k
        lat_rows.append(tuple(row_lat))
        w_rows.append(tuple(row_w))
        anc_rows.append(tuple(anc))
        prev_w = row_w

    cum = _weights_to_cumulative(prev_w)
    if cum is None:
        k = int(rng.integers(K))
    else:
        k = min(bisect_right(cum, rng.random()), K - 1)
    extra = model.finalize_extra(states[k], inputs, rng)
    v = Latents(tuple(trajs[k]), extra)
    ps = ParticleSystem(K, tuple(lat_rows), tuple(w_rows), tuple(anc_rows), k, log_z)
    return v, ps


def csmc_run(model: SequentialModel, inputs: ModuleIO, outputs: ModuleIO,
             pinned: Latents, num_particles: int, rng) -> ParticleSystem:
    """Conditional sweep: one slot, drawn uniformly once, replays the pinned
    trajectory at every step while the rest of the system runs as usual. The
    pinned lineage survives resampling by always keeping itself as ancestor,
    and is the selected trajectory of the returned system.
    """
    K = int(num_particles)
    if K < 1:
        raise ValueError("need at least one particle")
    obs = model.unpack_outputs(outputs)
    T = model.num_steps
    if len(obs) != T:
        raise SchemaError(f"expected {T} observation steps, got {len(obs)}")
    if len(pinned.steps) != T:
        raise SchemaError(f"pinned trajectory has {len(pinned.steps)} steps, want {T}")

    slot = int(rng.integers(K))
    log_k = math.log(K)
    states = [model.initial_state(inputs)] * K
    lat_rows, w_rows, anc_rows = [], [], []
    log_z = 0.0
    prev_w: list[float] | None = None

    for t in range(T):
        if t == 0:
            anc = list(range(K))
        else:
            cum = _weights_to_cumulative(prev_w)
            # K uniforms drawn either way; the pinned slot ignores its draw.
            if cum is None:
                anc = _uniform_row(K, rng)
            else:
                anc = _multinomial_row(cum, K, rng)
            anc[slot] = slot
            states = [states[a] for a in anc]
        row_lat, row_w = [], []
        ob = obs[t]
        for p in range(K):
            st = states[p]
            lat = pinned.steps[t] if p == slot else model.prior_sample(t, st, inputs, rng)
            row_lat.append(lat)
            row_w.append(model.obs_log_weight(t, st, inputs, lat, ob))
            states[p] = model.advance_state(t, st, inputs, lat, ob)
        log_z += logsumexp(row_w) - log_k
        lat_rows.append(tuple(row_lat))
        w_rows.append(tuple(row_w))
        anc_rows.append(tuple(anc))
        prev_w = row_w

    meta = MetaInferenceRecord(retained=tuple(pinned.steps), slots=(slot,) * T)
    return ParticleSystem(
        K, tuple(lat_rows), tuple(w_rows), tuple(anc_rows), slot, log_z, meta
    )


def recompute_log_z(model: SequentialModel, inputs: ModuleIO, outputs: ModuleIO,
                    ps: ParticleSystem) -> float:
    """Re-derive log Z-hat from a stored system by replaying states along the
    recorded ancestry. Exactly equal to ps.log_z for systems this module
    produced, because the arithmetic and reduction order are identical."""
    obs = model.unpack_outputs(outputs)
    K = ps.num_particles
    log_k = math.log(K)
    states = [model.initial_state(inputs)] * K
    log_z = 0.0
    for t in range(len(obs)):
        anc = ps.ancestors[t]
        if t > 0:
            states = [states[a] for a in anc]
        row_w = []
        ob = obs[t]
        for p in range(K):
            st = states[p]
            lat = ps.latents[t][p]
            row_w.append(model.obs_log_weight(t, st, inputs, lat, ob))
            states[p] = model.advance_state(t, st, inputs, lat, ob)
        log_z += logsumexp(row_w) - log_k
    return log_z


class SmcModule(ProbModule):
    """Module whose regenerate is an SMC sweep and whose simulate scores its
    own forward sample with a conditional sweep."""

    def __init__(self, model: SequentialModel, num_particles: int, name=None):
        if num_particles < 1:
            raise ValueError("need at least one particle")
        self.model = model
        self.num_particles = int(num_particles)
        self.input_ports = tuple(model.input_ports)
        self.output_ports = tuple(model.output_ports)
        if name:
            self.name = name

    def regenerate(self, inputs, outputs, rng):
        self.check_inputs(inputs)
        self.check_outputs(outputs)
        v, ps = smc_run(self.model, inputs, outputs, self.num_particles, rng)
        return ps.log_z, SmcAux(v, ps)

    def simulate(self, inputs, rng):
        self.check_inputs(inputs)
        m = self.model
        state = m.initial_state(inputs)
        steps, obs = [], []
        for t in range(m.num_steps):
            lat = m.prior_sample(t, state, inputs, rng)
            ob = m.obs_sample(t, state, inputs, lat, rng)
            state = m.advance_state(t, state, inputs, lat, ob)
            steps.append(lat)
            obs.append(ob)
        extra = m.finalize_extra(state, inputs, rng)
        v = Latents(tuple(steps), extra)
        outputs = m.pack_outputs(obs)
        self.check_outputs(outputs)
        ps = csmc_run(m, inputs, outputs, v, self.num_particles, rng)
        if ps.log_z == -math.inf:
            raise DegenerateTraceError("conditional sweep scored the forward sample at zero")
        return outputs, ps.log_z, SmcAux(v, ps)


def make_smc_module(model: SequentialModel, num_particles: int) -> ProbModule:
    return SmcModule(model, num_particles)


# -- serialization -----------------------------------------------------------
#
# Latent values must be JSON-representable (ints, floats, strings); that holds
# for every model shipped here. -inf is encoded as the string "-inf" to keep
# the documents valid standard JSON.


def _enc_float(x: float):
    return "-inf" if x == -math.inf else x


def _dec_float(x) -> float:
    return -math.inf if x == "-inf" else float(x)


def particle_system_to_json(ps: ParticleSystem) -> dict:
    doc = {
        "num_particles": ps.num_particles,
        "latents": [list(row) for row in ps.latents],
        "log_weights": [[_enc_float(w) for w in row] for row in ps.log_weights],
        "ancestors": [list(row) for row in ps.ancestors],
        "selected": ps.selected,
        "log_z": _enc_float(ps.log_z),
        "meta": None,
    }
    if ps.meta is not None:
        doc["meta"] = {"retained": list(ps.meta.retained), "slots": list(ps.meta.slots)}
    return doc


def particle_system_from_json(doc: dict) -> ParticleSystem:
    meta = None
    if doc.get("meta") is not None:
        meta = MetaInferenceRecord(
            retained=tuple(doc["meta"]["retained"]),
            slots=tuple(int(s) for s in doc["meta"]["slots"]),
        )
    return ParticleSystem(
        num_particles=int(doc["num_particles"]),
        latents=tuple(tuple(row) for row in doc["latents"]),
        log_weights=tuple(tuple(_dec_float(w) for w in row) for row in doc["log_weights"]),
        ancestors=tuple(tuple(int(a) for a in row) for row in doc["ancestors"]),
        selected=int(doc["selected"]),
        log_z=_dec_float(doc["log_z"]),
        meta=meta,
    )
