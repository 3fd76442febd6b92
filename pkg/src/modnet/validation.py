"""The acceptance suite: one function per numbered criterion.

Each criterion returns a CriterionResult carrying the measured value, the
bound it was held to, and a PASS/FAIL/SKIPPED verdict; run_all drives the
full battery. Statistical criteria use generators seeded from the PINNED
table below, so every verdict is reproducible bit for bit; reduced-budget
runs mark those criteria SKIPPED rather than silently weakening them.

Oracle targets come from a fixtures document (see outlier_oracle); pass
fixtures=None to recompute them in-process.
"""

from __future__ import annotations

import csv
import math
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import outlier_oracle as oo
from .experiment import parse_config, posterior_rate, run_experiment
from .interface import bernoulli_module, normal_module, table_module
from .inverse import exact_inverse, make_inverse_module, train_inverse
from .mh import SiteProposal, discrete_uniform_proposal, flip_proposal, mh_update, run_chain
from .network import EdgeSpec, NodeSpec, build_network
from .oracle import log_evidence, posterior
from .outlier_regression import (build_regression_module, default_dataset,
                                 load_constants, prior_line_state, switch_prior_spec)
from .reference_models import (BinaryHmm, chain3_network, chain3_oracle,
                               hmm_oracle_model, hmm_oracle_observation,
                               hmm_observation, switch_hmm_network)
from .smc import smc_run
from .values import discrete, real, real_vector

# One seed per stochastic criterion. Verdicts are deterministic given these.
PINNED = {
    "c2_inverse": 2001,
    "c2_sweep_k1": 2002,
    "c2_sweep_k30": 2003,
    "c2_hmm": 2004,
    "c3a": 3001,
    "c3b": 3002,
    "c4": 4001,
    "c5": 5003,
    "c7": 7001,
}

FULL_ITERATIONS = 50_000
FULL_CHAINS = 4


@dataclass
class CriterionResult:
    name: str
    passed: bool | None
    measured: str
    bound: str
    runtime_s: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.passed is None:
            return "SKIPPED"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return (f"criterion {self.name}: {self.measured} | bound {self.bound}"
                f" | {self.verdict} ({self.runtime_s:.1f}s)")


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.runtime_s = time.perf_counter() - t0
        return res
    return wrapper


def _skipped(name: str, bound: str) -> CriterionResult:
    return CriterionResult(name, None, "not run (reduced budget)", bound)


# -- criterion 1: exact modules reduce to their closed-form log-density ------


@_timed
def exact_reduction() -> CriterionResult:
    theta, mu, sigma, x = 0.37, 0.8, 1.6, -0.3
    rows = {(0,): (0.25, 0.75), (1,): (0.6, 0.4)}
    cases = [
        (bernoulli_module(theta), {}, {"z": discrete(1)}, math.log(theta)),
        (bernoulli_module(theta), {}, {"z": discrete(0)}, math.log(1.0 - theta)),
        (normal_module(mu, sigma), {}, {"z": real(x)},
         -0.5 * math.log(2.0 * math.pi * sigma * sigma)
         - (x - mu) ** 2 / (2.0 * sigma * sigma)),
        (table_module(("c",), rows), {"c": discrete(1)}, {"z": discrete(0)},
         math.log(rows[(1,)][0])),
    ]
    worst = 0.0
    deterministic = True
    for mod, inputs, outputs, closed in cases:
        lws = set()
        for s in range(8):
            rng = np.random.default_rng(s)
            lw, aux = mod.regenerate(inputs, outputs, rng)
            lws.add(struct.pack("<d", lw))
            if aux is not None:
                deterministic = False
            # no randomness may be consumed
            if rng.random() != np.random.default_rng(s).random():
                deterministic = False
        if len(lws) != 1:
            deterministic = False
        lw = struct.unpack("<d", lws.pop())[0]
        worst = max(worst, abs(lw - closed) / abs(closed))
    return CriterionResult(
        "1 exact reduction", deterministic and worst <= 1e-15,
        f"deterministic={deterministic}, max rel err {worst:.2e}",
        "bit-stable and rel err <= 1e-15",
    )


# -- criterion 2: exp(lw) is unbiased for the oracle evidence ----------------


def _mean_within_4se(draws: np.ndarray, truth: float) -> tuple[float, dict]:
    mean = float(draws.mean())
    se = float(draws.std(ddof=1) / math.sqrt(len(draws)))
    se = max(se, 1e-300)
    z = abs(mean - truth) / se
    return z, {"mean": mean, "truth": truth, "se": se, "z": z, "n": len(draws)}


@_timed
def unbiasedness(fixtures: dict) -> CriterionResult:
    parts: dict[str, dict] = {}
    zs = []

    rng = np.random.default_rng(PINNED["c2_inverse"])
    spec = switch_prior_spec()
    mod_a = make_inverse_module(spec, train_inverse(spec, 100_000, rng))
    out_a = {"a": discrete(1)}
    draws = np.fromiter(
        (math.exp(mod_a.regenerate({}, out_a, rng)[0]) for _ in range(100_000)),
        dtype=float, count=100_000)
    z, info = _mean_within_4se(draws, fixtures["switch_marginal"]["1"])
    zs.append(z)
    parts["module A (inverse)"] = info

    truth_b = math.exp(fixtures["log_evidence_by_switch"]["1"])
    in_b = {"a": discrete(1)}
    out_b = {"b": real_vector(default_dataset()["responses"])}
    for key, k, n in (("c2_sweep_k1", 1, 100_000), ("c2_sweep_k30", 30, 10_000)):
        rng = np.random.default_rng(PINNED[key])
        mod_b = build_regression_module(k)
        draws = np.fromiter(
            (math.exp(mod_b.regenerate(in_b, out_b, rng)[0]) for _ in range(n)),
            dtype=float, count=n)
        z, info = _mean_within_4se(draws, truth_b)
        zs.append(z)
        parts[f"module B (sweep, K={k})"] = info

    T, init, trans, emit = 4, 0.4, (0.25, 0.7), (0.15, 0.8)
    ys = (1, 0, 1, 1)
    truth_h = math.exp(log_evidence(hmm_oracle_model(T, init, trans, emit),
                                    hmm_oracle_observation(ys)))
    hmm = BinaryHmm(T, init, emit, trans=trans)
    outputs = hmm_observation(ys)
    rng = np.random.default_rng(PINNED["c2_hmm"])
    n = 30_000
    draws = np.fromiter(
        (math.exp(smc_run(hmm, {}, outputs, 5, rng)[1].log_z) for _ in range(n)),
        dtype=float, count=n)
    z, info = _mean_within_4se(draws, truth_h)
    zs.append(z)
    parts["discrete sequential model"] = info

    worst = max(zs)
    return CriterionResult(
        "2 unbiasedness", worst <= 4.0,
        f"worst |mean - oracle| = {worst:.2f} estimated SEs",
        "<= 4 SEs on every module", details=parts,
    )


# -- criterion 3: the chain targets the enumerated posterior -----------------


@_timed
def chain3_posterior(iterations: int = 200_000) -> CriterionResult:
    oracle = posterior(chain3_oracle(), {"x3": 1}, ("x1", "x2"))
    rng = np.random.default_rng(PINNED["c3a"])
    net = chain3_network()
    net.initialize(rng)
    counts: dict[tuple, int] = {}

    def sink(rec):
        key = (rec.site_values[1], rec.site_values[2])
        counts[key] = counts.get(key, 0) + 1

    run_chain(net, [flip_proposal(1, port="z"), flip_proposal(2, port="z")],
              iterations, rng, sink=sink)
    tv = 0.5 * sum(abs(counts.get(k, 0) / iterations - p) for k, p in oracle.items())
    return CriterionResult(
        "3a chain stationarity", tv < 0.01,
        f"TV distance {tv:.4f} at {iterations} iterations", "< 0.01",
        details={"empirical": {str(k): c / iterations for k, c in sorted(counts.items())},
                 "oracle": {str(k): v for k, v in sorted(oracle.items())}},
    )


@_timed
def app_posterior(fixtures: dict, out_dir, workers: int = 1,
                  chains: int = FULL_CHAINS,
                  iterations: int = FULL_ITERATIONS) -> CriterionResult:
    cfg = parse_config({
        "network": "outlier_regression",
        "seed": PINNED["c3b"],
        "chains": chains,
        "iterations": iterations,
        "particles": 30,
        "train_samples": 100_000,
        "workers": workers,
    })
    summary = run_experiment(cfg, out_dir)
    p_hat = posterior_rate(summary, "A", 1)
    target = fixtures["posterior_switch_one"]
    err = abs(p_hat - target)
    return CriterionResult(
        "3b app posterior", err < 0.02,
        f"|P-hat(a=1) - {target:.6f}| = {err:.4f} "
        f"({chains} chains x {iterations} iterations)",
        "< 0.02",
        details={"p_hat": p_hat, "target": target,
                 "acceptance": summary["combined"]["acceptance_rates"]},
    )


# -- criterion 4: sweep log-weights tighten toward the oracle density --------


@_timed
def sweep_convergence(runs: int = 1000) -> CriterionResult:
    T, init, trans, emit = 5, 0.45, (0.25, 0.75), (0.2, 0.8)
    ys = (1, 0, 1, 1, 0)
    truth = log_evidence(hmm_oracle_model(T, init, trans, emit),
                         hmm_oracle_observation(ys))
    hmm = BinaryHmm(T, init, emit, trans=trans)
    outputs = hmm_observation(ys)
    rng = np.random.default_rng(PINNED["c4"])

    ks = (1, 2, 5, 10, 30, 100)
    variances, gaps, means = [], [], []
    for k in ks:
        lws = np.fromiter(
            (smc_run(hmm, {}, outputs, k, rng)[1].log_z for _ in range(runs)),
            dtype=float, count=runs)
        variances.append(float(lws.var(ddof=1)))
        means.append(float(lws.mean()))
        gaps.append(max(truth - means[-1], 0.0))

    var_ok = all(variances[i + 1] <= 1.1 * variances[i] for i in range(len(ks) - 1))
    gap_ok = all(gaps[i + 1] <= 1.1 * gaps[i] + 1e-9 for i in range(len(ks) - 1))
    final_err = abs(means[-1] - truth)
    ok = var_ok and gap_ok and final_err < 0.05
    return CriterionResult(
        "4 sweep convergence", ok,
        f"var chain {'monotone' if var_ok else 'NOT monotone'}, "
        f"mean-gap chain {'monotone' if gap_ok else 'NOT monotone'}, "
        f"|mean lw(K=100) - log p| = {final_err:.4f}",
        "1.1x slack per step; final gap < 0.05",
        details={"K": list(ks), "variance": variances, "mean": means,
                 "gap": gaps, "log_p": truth},
    )


# -- criterion 5: more training data tightens the learned inverse ------------


@_timed
def inverse_limit() -> CriterionResult:
    spec = switch_prior_spec()
    rng = np.random.default_rng(PINNED["c5"])
    inv_small = train_inverse(spec, 100, rng)
    inv_big = train_inverse(spec, 1_000_000, rng)
    exact = exact_inverse(spec)

    table_err = 0.0
    for fl, fe in zip(inv_big.factors, exact.factors):
        for key, row in fl.table.items():
            for p_l, p_e in zip(row, fe.table[key]):
                table_err = max(table_err, abs(p_l - float(p_e)))

    out = {"a": discrete(1)}
    n = 20_000

    def lw_std(inv) -> float:
        mod = make_inverse_module(spec, inv)
        lws = np.fromiter((mod.regenerate({}, out, rng)[0] for _ in range(n)),
                          dtype=float, count=n)
        return float(lws.std(ddof=1))

    std_small = lw_std(inv_small)
    std_big = lw_std(inv_big)
    ok = std_big < std_small and table_err <= 0.005
    return CriterionResult(
        "5 inverse limit", ok,
        f"lw stddev {std_big:.5f} (n_train=1e6) vs {std_small:.5f} (n_train=1e2); "
        f"max table err {table_err:.5f}",
        "stddev strictly smaller; table err <= 0.005",
        details={"std_small": std_small, "std_big": std_big, "table_err": table_err},
    )


# -- criterion 6: total_lw fluctuates inside constant-a stretches ------------


def _constant_runs(values: list[str], totals: list[str]):
    """Maximal constant-value segments as (value, length, distinct totals)."""
    runs = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] != values[start]:
            runs.append((values[start], i - start, len(set(totals[start:i]))))
            start = i
    return runs


@_timed
def trace_variation(out_dir) -> CriterionResult:
    paths = sorted(Path(out_dir).glob("trace_chain*.csv"))
    if not paths:
        return CriterionResult("6 trace variation", False,
                               f"no trace files under {out_dir}", "see criterion")
    qualifying = 0
    worst_distinct = math.inf
    visits_ok = True
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            a_col, lw_col = [], []
            for row in reader:
                a_col.append(row["a"])
                lw_col.append(row["total_lw"])
        visits_ok = visits_ok and {"0", "1"} <= set(a_col)
        for _value, length, distinct in _constant_runs(a_col, lw_col):
            if length >= 10:
                qualifying += 1
                worst_distinct = min(worst_distinct, distinct)
    ok = visits_ok and qualifying > 0 and worst_distinct >= 2
    return CriterionResult(
        "6 trace variation", ok,
        f"{qualifying} constant-a runs of length >= 10, min distinct total_lw "
        f"{worst_distinct if qualifying else 'n/a'}, both values visited: {visits_ok}",
        ">= 2 distinct total_lw per run; a visits 0 and 1",
    )


# -- criterion 7: rejections change nothing; -inf always rejects -------------


def _state_fingerprint(net) -> list:
    fp = []
    for i in net.node_ids():
        fp.append((
            i,
            tuple((p, id(v)) for p, v in sorted(net.outputs_of(i).items())),
            struct.pack("<d", net.lookup_log_weight(i)),
            id(net.lookup_aux(i)),
            tuple((p, id(v)) for p, v in sorted(net.inputs_of(i).items())),
        ))
    return fp


class _FixedProposal(SiteProposal):
    """Always proposes the same value; used to force off-support moves."""

    def __init__(self, target, value, port=None):
        super().__init__(target=target, sample=lambda cur, rng: value,
                         log_density=lambda cand, cur: 0.0, port=port)


class _OneWayFlip(SiteProposal):
    """Flips 0 <-> 1 but claims it can never propose 0, so the reverse
    density of any 0 -> 1 move is -inf."""

    def __init__(self, target, port=None):
        def density(cand, cur):
            return -math.inf if cand.data == 0 else 0.0
        super().__init__(target=target,
                         sample=lambda cur, rng: discrete(1 - cur.data),
                         log_density=density, port=port)


@_timed
def reject_purity() -> CriterionResult:
    failures = []
    rng = np.random.default_rng(PINNED["c7"])

    # natural rejections on the 3-node chain leave every id and bit in place
    net = chain3_network()
    net.initialize(rng)
    schedule = [flip_proposal(1, port="z"), flip_proposal(2, port="z")]
    rejects = 0
    for it in range(600):
        before = _state_fingerprint(net)
        info = mh_update(net, schedule[it % 2], rng)
        if not info.accepted:
            rejects += 1
            if _state_fingerprint(net) != before:
                failures.append(f"natural rejection mutated state at step {it}")
    if rejects == 0:
        failures.append("no natural rejections observed")

    # off-support proposal at the inverse-backed site: target lw hits -inf
    net = switch_hmm_network(num_particles=4, train_samples=0, rng=rng)
    net.initialize(rng)
    bad = _FixedProposal(1, discrete(7), port="a")
    for _ in range(50):
        before = _state_fingerprint(net)
        info = mh_update(net, bad, rng)
        if info.accepted or not info.neg_inf_proposal or info.log_alpha != -math.inf:
            failures.append("off-support proposal was not forced to reject")
        if _state_fingerprint(net) != before:
            failures.append("off-support rejection mutated state")

    # zero-probability child row: flipping the parent kills the observed child
    dead = build_network(
        nodes=[NodeSpec(1, bernoulli_module(0.5), name="P"),
               NodeSpec(2, table_module(("x",), {(0,): (0.2, 0.8),
                                                 (1,): (1.0, 0.0)}), name="C")],
        edges=[EdgeSpec(1, "z", 2, "x")],
        observations={2: {"z": discrete(1)}},
    )
    dead.initialize(rng)
    if dead.outputs_of(1)["z"].data != 0:
        failures.append("initialization admitted a zero-probability child")
    for _ in range(50):
        before = _state_fingerprint(dead)
        info = mh_update(dead, flip_proposal(1, port="z"), rng)
        if info.accepted or not info.neg_inf_proposal:
            failures.append("zero-probability child did not force rejection")
        if _state_fingerprint(dead) != before:
            failures.append("child -inf rejection mutated state")

    # reverse proposal density of -inf also forces rejection
    net3 = chain3_network()
    net3.initialize(rng)
    one_way = _OneWayFlip(1, port="z")
    saw_reverse_block = False
    for _ in range(50):
        cur = net3.outputs_of(1)["z"].data
        before = _state_fingerprint(net3)
        info = mh_update(net3, one_way, rng)
        if cur == 0:
            # proposing 1 from 0; the reverse move has density zero
            saw_reverse_block = True
            if info.accepted or info.log_alpha != -math.inf:
                failures.append("reverse-density -inf move was accepted")
            if _state_fingerprint(net3) != before:
                failures.append("reverse-density rejection mutated state")
    if not saw_reverse_block:
        failures.append("never exercised the blocked direction")

    return CriterionResult(
        "7 reject purity", not failures,
        "all rejection paths state-preserving" if not failures
        else "; ".join(sorted(set(failures))),
        "bit-identical state, -inf always rejected",
        details={"natural_rejects": rejects},
    )


# -- criterion 8: the integrated line matches the batch closed form ----------


@_timed
def conjugate_correctness(fixtures: dict | None) -> CriterionResult:
    doc = load_constants()
    reg = doc["regression"]
    ds = default_dataset()
    xs, bs = ds["covariates"], ds["responses"]
    n = len(xs)
    s_in, s_out = reg["sigma_inlier"], reg["sigma_outlier"]

    def sequential(sigmas) -> float:
        st = prior_line_state(doc)
        total = 0.0
        for x, b, s in zip(xs, bs, sigmas):
            total += st.log_predictive(x, b, s)
            st = st.update(x, b, s)
        return total

    worst = 0.0
    for mask in range(1 << n):
        sigmas = [s_out if (mask >> i) & 1 else s_in for i in range(n)]
        batch = oo.conjugate_log_marginal(xs, bs, sigmas,
                                          reg["prior_mean"], reg["prior_var"])
        worst = max(worst, abs(sequential(sigmas) - batch))

    # equal noise levels: the indicator-prior-weighted mixture over all 2^n
    # configurations must collapse to the one Gaussian marginal, for both
    # outlier rates
    single = oo.conjugate_log_marginal(xs, bs, [s_in] * n,
                                       reg["prior_mean"], reg["prior_var"])
    collapse_err = 0.0
    for rate in (float(v) for v in reg["outlier_rate"].values()):
        terms = []
        for mask in range(1 << n):
            log_prior = 0.0
            for i in range(n):
                log_prior += math.log(rate if (mask >> i) & 1 else 1.0 - rate)
            terms.append(log_prior + single)
        m = max(terms)
        mixed = m + math.log(sum(math.exp(t - m) for t in terms))
        collapse_err = max(collapse_err, abs(mixed - single))

    fixture_err = 0.0
    if fixtures is not None:
        live = oo.compute_fixtures()
        for key in ("log_evidence_by_switch", "switch_marginal"):
            for k, v in live[key].items():
                fixture_err = max(fixture_err, abs(fixtures[key][k] - v))
        fixture_err = max(fixture_err, abs(
            fixtures["posterior_switch_one"] - live["posterior_switch_one"]))

    ok = worst <= 1e-10 and collapse_err <= 1e-10 and fixture_err <= 1e-9
    return CriterionResult(
        "8 conjugate recursion", ok,
        f"max |sequential - batch| {worst:.2e} over {1 << n} configs; "
        f"collapse err {collapse_err:.2e}; fixture drift {fixture_err:.2e}",
        "<= 1e-10 (fixture drift <= 1e-9)",
        details={"collapse_err": collapse_err},
    )


# -- driver -------------------------------------------------------------------


def run_all(fixtures: dict | None = None, out_dir=None, workers: int = 1,
            iterations: int | None = None,
            chains: int | None = None) -> list[CriterionResult]:
    """Run the battery. iterations/chains below the full budget switch the
    statistical criteria to SKIPPED; criteria 1, 7, and 8 always run."""
    if fixtures is None:
        fixtures = oo.compute_fixtures()
    iterations = FULL_ITERATIONS if iterations is None else iterations
    chains = FULL_CHAINS if chains is None else chains
    full = iterations >= FULL_ITERATIONS and chains >= FULL_CHAINS

    results = [exact_reduction()]
    if full:
        tmp = None
        if out_dir is None:
            tmp = tempfile.TemporaryDirectory(prefix="modnet-validate-")
            out_dir = tmp.name
        results.append(unbiasedness(fixtures))
        results.append(chain3_posterior())
        results.append(app_posterior(fixtures, out_dir, workers=workers,
                                     chains=chains, iterations=iterations))
        results.append(sweep_convergence())
        results.append(inverse_limit())
        results.append(trace_variation(out_dir))
        if tmp is not None:
            tmp.cleanup()
    else:
        results.append(_skipped("2 unbiasedness", "<= 4 SEs on every module"))
        results.append(_skipped("3a chain stationarity", "< 0.01"))
        results.append(_skipped("3b app posterior", "< 0.02"))
        results.append(_skipped("4 sweep convergence",
                                "1.1x slack per step; final gap < 0.05"))
        results.append(_skipped("5 inverse limit",
                                "stddev strictly smaller; table err <= 0.005"))
        results.append(_skipped("6 trace variation",
                                ">= 2 distinct total_lw per run; a visits 0 and 1"))
    results.append(reject_purity())
    results.append(conjugate_correctness(fixtures))
    return results
