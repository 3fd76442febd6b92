import math

import numpy as np
import pytest
from scipy import stats

from modnet.interface import SchemaError, bernoulli_module, table_module, wrap_exact
from modnet.mh import (
    SiteProposal,
    acceptance_stats,
    discrete_uniform_proposal,
    flip_proposal,
    gaussian_walk_proposal,
    mh_update,
    resolve_port,
    run_chain,
)
from modnet.network import EdgeSpec, NodeSpec, build_network
from modnet.oracle import posterior
from modnet.reference_models import CHAIN3, chain3_network, chain3_oracle
from modnet.values import discrete, real


class CountingRng:
    """Pass-through rng that counts uniform draws."""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.random_calls = 0

    def random(self):
        self.random_calls += 1
        return self._rng.random()

    def __getattr__(self, name):
        return getattr(self._rng, name)


def _bern_lw(p1, v):
    return math.log(p1) if v == 1 else math.log1p(-p1)


def _row_lw(p1, v):
    # matches a stored CPT row (1.0 - p1, p1)
    return math.log(p1) if v == 1 else math.log(1.0 - p1)


# -- proposal library ----------------------------------------------------------

def test_flip_proposal_is_deterministic_and_symmetric():
    prop = flip_proposal(1)
    rng = np.random.default_rng(0)
    assert prop.sample(discrete(0), rng).data == 1
    assert prop.sample(discrete(1), rng).data == 0
    assert prop.log_density(discrete(1), discrete(0)) == 0.0
    assert prop.log_density(discrete(0), discrete(0)) == -math.inf
    with pytest.raises(SchemaError):
        prop.sample(discrete(2), rng)
    with pytest.raises(SchemaError):
        prop.sample(real(0.5), rng)


def test_discrete_uniform_proposal_density_and_frequencies():
    with pytest.raises(ValueError):
        discrete_uniform_proposal(1, [])
    with pytest.raises(ValueError):
        discrete_uniform_proposal(1, [0, 0, 1])
    prop = discrete_uniform_proposal(1, [0, 1, 2])
    assert prop.log_density(discrete(2), discrete(0)) == pytest.approx(
        -math.log(3), rel=1e-15
    )
    assert prop.log_density(discrete(7), discrete(0)) == -math.inf
    rng = np.random.default_rng(42)
    n = 3000
    draws = [prop.sample(discrete(0), rng).data for _ in range(n)]
    assert set(draws) <= {0, 1, 2}
    se = math.sqrt((1 / 3) * (2 / 3) / n)
    for v in (0, 1, 2):
        assert abs(draws.count(v) / n - 1 / 3) < 4 * se


def test_gaussian_walk_proposal_matches_normal_density():
    with pytest.raises(ValueError):
        gaussian_walk_proposal(1, 0.0)
    prop = gaussian_walk_proposal(1, 0.7)
    for old, new in ((0.0, 0.3), (-1.2, 2.5), (4.0, 4.0)):
        want = stats.norm.logpdf(new, loc=old, scale=0.7)
        assert prop.log_density(real(new), real(old)) == pytest.approx(
            want, rel=1e-12
        )
    rng = np.random.default_rng(9)
    draws = [prop.sample(real(2.0), rng).data for _ in range(4000)]
    assert np.mean(draws) == pytest.approx(2.0, abs=4 * 0.7 / math.sqrt(4000))
    with pytest.raises(SchemaError):
        prop.sample(discrete(0), rng)


# -- port resolution and guard rails --------------------------------------------

def test_resolve_port():
    two_port = wrap_exact(
        lambda inputs, rng: {"a": discrete(0), "b": discrete(0)},
        lambda inputs, outputs: 0.0,
        output_ports=("a", "b"),
    )
    net = build_network([NodeSpec(1, two_port)], [], {})
    noop = lambda *args: None
    assert resolve_port(net, SiteProposal(1, noop, noop, port="b")) == "b"
    with pytest.raises(SchemaError, match="no output port"):
        resolve_port(net, SiteProposal(1, noop, noop, port="c"))
    with pytest.raises(SchemaError, match="must name one"):
        resolve_port(net, SiteProposal(1, noop, noop))
    single = chain3_network()
    assert resolve_port(single, flip_proposal(1)) == "z"


def test_update_refuses_observed_site():
    net = chain3_network()
    net.initialize(np.random.default_rng(0))
    with pytest.raises(SchemaError, match="observed"):
        mh_update(net, flip_proposal(3), np.random.default_rng(1))


def test_run_chain_input_validation():
    net = chain3_network()
    net.initialize(np.random.default_rng(0))
    with pytest.raises(ValueError, match="schedule is empty"):
        run_chain(net, [], 10, np.random.default_rng(1))
    with pytest.raises(ValueError, match="unknown scan mode"):
        run_chain(net, [flip_proposal(1)], 10, np.random.default_rng(1),
                  scan="sweep")
    with pytest.raises(SchemaError, match="observed"):
        run_chain(net, [flip_proposal(3)], 10, np.random.default_rng(1))


# -- exact agreement with a hand-rolled chain ------------------------------------

def _reference_chain3(seed, iterations):
    """Plain single-site MH on the three-node chain, written from scratch.

    Consumes the rng exactly like initialize + run_chain(scan="cyclic") with
    flip proposals: two uniforms to initialize, then one per update.
    """
    p1, t2, t3 = CHAIN3["x1_p1"], CHAIN3["x2_p1"], CHAIN3["x3_p1"]
    rng = np.random.default_rng(seed)
    x1 = 1 if rng.random() < p1 else 0
    x2 = 0 if rng.random() < 1.0 - t2[x1] else 1
    lw1 = _bern_lw(p1, x1)
    lw2 = _row_lw(t2[x1], x2)
    lw3 = _row_lw(t3[x2], 1)
    states = []
    for it in range(iterations):
        if it % 2 == 0:
            new = 1 - x1
            n1 = _bern_lw(p1, new)
            n2 = _row_lw(t2[new], x2)
            log_alpha = 0.0 - 0.0 + ((n1 - lw1) + (n2 - lw2))
            if math.log(rng.random()) <= log_alpha:
                x1, lw1, lw2 = new, n1, n2
        else:
            new = 1 - x2
            n2 = _row_lw(t2[x1], new)
            n3 = _row_lw(t3[new], 1)
            log_alpha = 0.0 - 0.0 + ((n2 - lw2) + (n3 - lw3))
            if math.log(rng.random()) <= log_alpha:
                x2, lw2, lw3 = new, n2, n3
        states.append((x1, x2))
    return states


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_cyclic_chain_matches_reference_implementation_exactly(seed):
    net = chain3_network()
    rng = np.random.default_rng(seed)
    net.initialize(rng)
    got = []
    run_chain(
        net, [flip_proposal(1), flip_proposal(2)], 300, rng,
        sink=lambda r: got.append((r.site_values[1], r.site_values[2])),
        scan="cyclic",
    )
    assert got == _reference_chain3(seed, 300)


# -- record semantics -------------------------------------------------------------

def test_records_report_the_evaluated_configuration():
    p1, t2, t3 = CHAIN3["x1_p1"], CHAIN3["x2_p1"], CHAIN3["x3_p1"]
    net = chain3_network()
    rng = np.random.default_rng(31)
    net.initialize(rng)
    cur = {1: net.outputs_of(1)["z"].data, 2: net.outputs_of(2)["z"].data}
    records = []
    run_chain(net, [flip_proposal(1), flip_proposal(2)], 400, rng,
              sink=records.append, scan="random")
    for r in records:
        v = r.proposed_value
        if r.site == 1:
            want = {1: _bern_lw(p1, v),
                    2: _row_lw(t2[v], cur[2]),
                    3: _row_lw(t3[cur[2]], 1)}
        else:
            want = {1: _bern_lw(p1, cur[1]),
                    2: _row_lw(t2[cur[1]], v),
                    3: _row_lw(t3[v], 1)}
        assert r.log_weights == want
        assert r.total_log_weight == want[1] + want[2] + want[3]
        assert not r.neg_inf_proposal
        if r.accepted:
            cur[r.site] = v
        assert r.site_values == cur
    assert records[-1].site_values == {
        1: net.outputs_of(1)["z"].data, 2: net.outputs_of(2)["z"].data
    }


def test_rejected_rows_keep_the_log_weight_series_moving():
    net = chain3_network()
    rng = np.random.default_rng(5)
    net.initialize(rng)
    records = []
    run_chain(net, [flip_proposal(1), flip_proposal(2)], 200, rng,
              sink=records.append, scan="cyclic")
    rejected = [r for r in records if not r.accepted]
    assert rejected, "expected some rejections in 200 iterations"
    for r in rejected:
        # the row carries the discarded proposal, not the retained state
        assert r.site_values[r.site] == 1 - r.proposed_value


# -- zero-probability proposals ----------------------------------------------------

def _dead_end_network():
    return build_network(
        [NodeSpec(1, bernoulli_module(0.5)),
         NodeSpec(2, table_module(("x",), {(0,): (0.5, 0.5), (1,): (1.0, 0.0)}))],
        [EdgeSpec(1, "z", 2, "x")],
        {2: {"z": discrete(1)}},
    )


def test_impossible_proposal_is_rejected_without_raising():
    net = _dead_end_network()
    net.initialize(np.random.default_rng(1))
    assert net.outputs_of(1)["z"].data == 0
    rng = CountingRng(8)
    info = mh_update(net, flip_proposal(1), rng)
    assert info.neg_inf_proposal
    assert not info.accepted
    assert info.log_alpha == -math.inf
    assert info.regen_log_weights[2] == -math.inf
    assert math.isfinite(info.regen_log_weights[1])
    # the accept uniform is still drawn, keeping the stream aligned
    assert rng.random_calls == 1
    # and the chain state is untouched
    assert net.outputs_of(1)["z"].data == 0
    assert math.isfinite(net.total_log_weight())


def test_forced_rejection_leaves_stored_weights_intact():
    net = _dead_end_network()
    net.initialize(np.random.default_rng(1))
    before = {j: net.lookup_log_weight(j) for j in net.node_ids()}
    mh_update(net, flip_proposal(1), np.random.default_rng(2))
    assert {j: net.lookup_log_weight(j) for j in net.node_ids()} == before


# -- distributional correctness ------------------------------------------------------

def test_chain_recovers_enumerated_posterior():
    net = chain3_network()
    rng = np.random.default_rng(202)
    net.initialize(rng)
    records = []
    run_chain(net, [flip_proposal(1), flip_proposal(2)], 30_000, rng,
              sink=records.append, scan="random")
    burn = 500
    xs1 = [r.site_values[1] for r in records[burn:]]
    xs2 = [r.site_values[2] for r in records[burn:]]
    post = posterior(chain3_oracle(), {"x3": 1}, ("x1", "x2"))
    p_x1 = post[(1, 0)] + post[(1, 1)]
    p_x2 = post[(0, 1)] + post[(1, 1)]
    assert np.mean(xs1) == pytest.approx(p_x1, abs=0.03)
    assert np.mean(xs2) == pytest.approx(p_x2, abs=0.03)


def test_empirical_acceptance_matches_analytic_ratio():
    p1, t2 = CHAIN3["x1_p1"], CHAIN3["x2_p1"]
    net = chain3_network()
    rng = np.random.default_rng(77)
    net.initialize(rng)
    cur = {1: net.outputs_of(1)["z"].data, 2: net.outputs_of(2)["z"].data}
    trials = {}
    wins = {}
    records = []
    run_chain(net, [flip_proposal(1), flip_proposal(2)], 20_000, rng,
              sink=records.append, scan="random")
    for r in records:
        if r.site == 1:
            key = (cur[1], cur[2])
            trials[key] = trials.get(key, 0) + 1
            wins[key] = wins.get(key, 0) + int(r.accepted)
        if r.accepted:
            cur[r.site] = r.proposed_value
    for (x1, x2), n in trials.items():
        num = _bern_lw(p1, 1 - x1) + _row_lw(t2[1 - x1], x2)
        den = _bern_lw(p1, x1) + _row_lw(t2[x1], x2)
        alpha = min(1.0, math.exp(num - den))
        se = math.sqrt(max(alpha * (1 - alpha), 1e-12) / n)
        assert abs(wins[(x1, x2)] / n - alpha) < 5 * se + 1e-9


# -- summaries ---------------------------------------------------------------------

def test_summary_and_stats_agree_with_records():
    net = chain3_network()
    rng = np.random.default_rng(13)
    net.initialize(rng)
    records = []
    summary = run_chain(net, [flip_proposal(1), flip_proposal(2)], 500, rng,
                        sink=records.append, scan="random")
    assert summary.iterations == 500
    assert sum(summary.proposals.values()) == 500
    for site in (1, 2):
        manual = [r.accepted for r in records if r.site == site]
        assert summary.proposals[site] == len(manual)
        assert summary.acceptance_rate(site) == pytest.approx(
            sum(manual) / len(manual), abs=0.0
        )
    stats_doc = acceptance_stats(records)
    assert stats_doc["iterations"] == 500
    assert stats_doc["proposals"] == summary.proposals
    assert stats_doc["neg_inf_proposals"] == sum(
        r.neg_inf_proposal for r in records
    )
    lw3 = [r.log_weights[3] for r in records]
    assert stats_doc["log_weight_stats"][3]["mean"] == pytest.approx(
        sum(lw3) / len(lw3), rel=1e-12
    )
    assert math.isnan(summary.acceptance_rate(99))
    with pytest.raises(ValueError):
        acceptance_stats([])
