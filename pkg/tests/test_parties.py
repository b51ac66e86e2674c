from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from xswap.checker import (
    OutcomeClass,
    classify,
    default_corpus,
    deviation_runs,
    leaving_implies_entering,
    signature_first_use,
    two_leader_four,
    uniformity_violations,
)
from xswap.contract import ContractState
from xswap.graph import SwapDigraph, feedback_vertex_set
from xswap.parties import (
    FakeHashlock,
    NoTrigger,
    Phase,
    Role,
    SilentCrash,
    WithholdSecret,
    deviation_catalog,
    make_strategy,
    simulate,
)
from xswap.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def states(r):
    return {arc: c.state for arc, c in r.contracts.items()}


def test_golden_trace():
    r = load_scenario(ROOT / "scenarios" / "three_cycle.json").run()
    assert r.trace.to_jsonl() == (ROOT / "tests" / "golden" / "three_cycle_trace.jsonl").read_text()


@pytest.mark.parametrize("backend", ["test", "real"])
def test_deterministic_runs(tri, backend):
    a = simulate(tri, latency="seeded", seed=7, backend=backend)
    b = simulate(tri, latency="seeded", seed=7, backend=backend)
    assert a.trace.to_jsonl() == b.trace.to_jsonl()


def test_real_backend_completes(tri):
    r = simulate(tri, backend="real")
    assert all(s is ContractState.TRIGGERED for s in states(r).values())


def test_roles(k3):
    r = simulate(k3, latency="unit")
    roles = [ps.role for ps in r.states.values()]
    assert roles.count(Role.TOP_LEADER) == 1
    assert r.states[2].role is Role.SUB_LEADER and r.states[3].role is Role.FOLLOWER


def test_follower_publishes_after_entering(tri):
    r = simulate(tri)
    pubs = {rec.target: rec for rec in r.trace.of("publish")}
    # Bob sees Alice's contract at 1010 and publishes within Δ
    assert pubs["1->2"].at == 1010
    assert pubs["2->3"].issued_at == 1010 and pubs["2->3"].at <= 1010 + 1000


def test_sub_leader_forwards_two_signatures(k3):
    r = simulate(k3, latency="unit")
    top = [rec for rec in r.trace.of("transfer") if rec.actor == 1]
    assert {dict(rec.detail)["x"] for rec in top} == {1}
    sub = [rec for rec in r.trace.of("transfer") if rec.actor == 2]
    assert sub and all(dict(rec.detail)["x"] == 2 for rec in sub)
    assert {rec.target for rec in sub} == {"1->2", "3->2"}


def test_top_leader_missing_secret_regains():
    g = two_leader_four()
    r = simulate(g, {3: WithholdSecret()})
    assert r.trace.of("transfer") == []
    assert r.states[1].phase is Phase.HALTED
    assert all(s is ContractState.REFUNDED for s in states(r).values())


def test_fake_hashlock_followers_never_publish(tri):
    r = simulate(tri, {1: FakeHashlock()})
    assert set(r.contracts) == {(1, 2)}
    assert r.contracts[(1, 2)].state is ContractState.REFUNDED
    assert all(classify(p, r) is OutcomeClass.NO_DEAL for p in (2, 3))


def test_no_trigger_everything_refunds(tri):
    r = simulate(tri, {1: NoTrigger()})
    assert r.trace.of("transfer") == []
    assert all(s is ContractState.REFUNDED for s in states(r).values())


def test_follower_crash_refunds(tri):
    r = simulate(tri, {3: SilentCrash(Phase.P2)})
    assert set(r.contracts) == {(1, 2), (2, 3)}
    assert all(s is ContractState.REFUNDED for s in states(r).values())


def _wave_depth(g, leaders):
    """Longest path from a leader to each party that passes through followers only."""
    import networkx as nx
    h = g.to_networkx()
    # split leaders so paths may start at them but not pass through them
    dag = nx.DiGraph()
    dag.add_nodes_from(("in", v) if v in leaders else v for v in g.parties)
    for u, v in h.edges:
        dag.add_edge(u if u not in leaders else ("out", u), v if v not in leaders else ("in", v))
    assert nx.is_directed_acyclic_graph(dag)
    depth = {}
    for node in nx.topological_sort(dag):
        preds = list(dag.predecessors(node))
        depth[node] = max((depth.get(p, 0) + 1 for p in preds), default=0)
    out = {l: 0 for l in leaders}
    out.update({v: depth[v] for v in g.parties if v not in leaders})
    return out


def test_phase2_wavefront():
    for e in default_corpus():
        r = simulate(e.g)
        depth = _wave_depth(e.g, set(r.leaders))
        assert max(depth.values()) <= r.proto.diam
        for rec in r.trace.of("publish"):
            tail = int(rec.target.split("->")[0])
            assert rec.at <= 10 + (depth[tail] + 1) * 1000, (e.id, rec)


def test_wavefront_not_bounded_by_nearest_leader():
    # party 2 is one hop from the leader but also waits on the 1->3->2 chain
    g = SwapDigraph.from_pairs(3, [(1, 2), (1, 3), (2, 1), (3, 2)])
    r = simulate(g)
    pub = {rec.target: rec.at for rec in r.trace.of("publish")}
    assert pub["2->1"] == 10 + 3 * 1000


def test_catalog_by_role(k3):
    ls = feedback_vertex_set(k3)
    names = lambda p: {s.name for s in deviation_catalog(k3, ls, p)}
    assert "FakeHashlock" in names(1) and "WithholdSecret" not in names(1)
    assert "WithholdSecret" in names(2)
    assert "FakeHashlock" not in names(3) and "RevealSecretEarly" not in names(3)
    assert {"SilentCrash", "FakePublicKey", "WithholdPublish", "NoTrigger", "EagerTimeout",
            "ForwardOnlySome"} <= names(3)


def test_make_strategy():
    assert make_strategy("SilentCrash", at_phase="P3").at_phase is Phase.P3
    assert make_strategy("WithholdPublish", arcs=[(1, 2)]).label() == "WithholdPublish(arcs=[1->2])"
    with pytest.raises(ValueError):
        make_strategy("Teleport")


def test_simulate_validation(tri):
    with pytest.raises(ValueError):
        simulate(tri, epsilon=1000, delta=1000)
    with pytest.raises(ValueError):
        simulate(tri, {7: NoTrigger()})


@pytest.mark.parametrize("latency", ["max", "unit", "seeded"])
def test_trace_properties_over_corpus(latency):
    for e in default_corpus():
        for sid, r in deviation_runs(e.g, latency=latency, seed=3):
            assert r.trace.quiescent, sid
            assert leaving_implies_entering(r, sid) == []
            assert signature_first_use(r, sid) == []
            assert uniformity_violations(r, sid) == []


def test_coalition_pools_secrets():
    g = two_leader_four()
    # leader 3 holds back its secret but shares it with coalition partner 1
    r = simulate(g, {3: WithholdSecret(), 1: make_strategy("EagerTrigger")}, coalitions=[{1, 3}],
                 latency="unit")
    assert r.triggered((2, 1)) or r.triggered((4, 1))
    for p in r.conforming:
        assert classify(p, r) is not OutcomeClass.UNDER_WATER


@st.composite
def deviated(draw):
    n = draw(st.integers(2, 4))
    pairs = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    extra = draw(st.lists(st.sampled_from(pairs), unique=True))
    g = SwapDigraph.from_pairs(n, sorted(set(extra) | {(i, i % n + 1) for i in range(1, n + 1)}))
    ls = feedback_vertex_set(g)
    p = draw(st.sampled_from(list(g.parties)))
    s = draw(st.sampled_from(deviation_catalog(g, ls, p)))
    lat = draw(st.sampled_from(["max", "unit", "seeded"]))
    return g, p, s, lat, draw(st.integers(0, 50))


@settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(deviated())
def test_single_deviation_never_hurts_conforming(case):
    g, p, s, lat, seed = case
    r = simulate(g, {p: s}, latency=lat, seed=seed)
    assert r.trace.quiescent
    assert uniformity_violations(r) == []
    assert leaving_implies_entering(r) == []


def test_deep_follower_chain_aborts_safely_under_max():
    # leader 1; follower 4 waits on 1->2->4 but 3->2 forces 2 to wait on 1->3 first
    g = SwapDigraph.from_pairs(4, [(1, 2), (1, 3), (2, 1), (2, 4), (3, 1), (3, 2), (4, 1)])
    r = simulate(g)
    assert max(_wave_depth(g, set(r.leaders)).values()) == 3 > r.proto.diam == 2
    assert not any(r.triggered(a.key) for a in g.arcs)
    assert uniformity_violations(r) == []
    done = simulate(g, latency="unit")
    assert all(done.triggered(a.key) for a in g.arcs)
