"""Verdicts over simulation results: outcome classes, payoffs, uniformity,
trace-level safety properties and the coalition equilibrium search."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import networkx as nx

from .contract import ContractState
from .graph import PartyId, SwapDigraph
from .ledger import arc_id
from .parties import SimResult, Strategy, deviation_catalog, simulate

NEG_INF = float("-inf")
Payoff = Fraction | float


class OutcomeClass(enum.Enum):
    DEAL = "DEAL"
    NO_DEAL = "NO_DEAL"
    FREE_RIDE = "FREE_RIDE"
    DISCOUNT = "DISCOUNT"
    UNDER_WATER = "UNDER_WATER"


PAYOFF_MODELS = ("plain", "herlihy")


def _require_quiescent(r: SimResult) -> None:
    if not r.trace.quiescent:
        raise ValueError("trace is not quiescent (horizon reached)")


def classify(p: PartyId, r: SimResult) -> OutcomeClass:
    """Exactly one class per party, from which incident arcs triggered.

    Checked in the order DEAL, NO_DEAL, UNDER_WATER, FREE_RIDE, DISCOUNT.
    A party with every entering arc triggered and no leaving arc triggered
    counts as FREE_RIDE.
    """
    ent = [r.triggered(a.key) for a in r.g.entering(p)]
    lea = [r.triggered(a.key) for a in r.g.leaving(p)]
    if all(ent) and all(lea):
        return OutcomeClass.DEAL
    if not any(ent) and not any(lea):
        return OutcomeClass.NO_DEAL
    if not all(ent) and any(lea):
        return OutcomeClass.UNDER_WATER
    if not any(lea):
        return OutcomeClass.FREE_RIDE
    return OutcomeClass.DISCOUNT


def payoff(p: PartyId, r: SimResult, model: str = "plain") -> Payoff:
    _require_quiescent(r)
    if model not in PAYOFF_MODELS:
        raise ValueError(f"unknown payoff model {model!r}")
    total = Fraction(0)
    for a in r.g.entering(p):
        if r.triggered(a.key):
            total += a.value_to_head
    for a in r.g.leaving(p):
        if r.triggered(a.key):
            total -= a.value_to_tail
    if model == "herlihy" and classify(p, r) is OutcomeClass.UNDER_WATER:
        return NEG_INF
    return total


def coalition_payoff(members: Iterable[PartyId], r: SimResult, model: str) -> Payoff:
    vals = [payoff(p, r, model) for p in members]
    if any(v == NEG_INF for v in vals):
        return NEG_INF
    return sum(vals, Fraction(0))


def fmt_payoff(v: Payoff) -> str:
    return "-inf" if v == NEG_INF else str(v)


# -- uniformity ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    scenario: str
    party: PartyId | None
    arc: str | None
    reason: str

    def __str__(self) -> str:
        where = []
        if self.party is not None:
            where.append(f"party {self.party}")
        if self.arc is not None:
            where.append(f"arc {self.arc}")
        return f"[{self.scenario}] {', '.join(where)}: {self.reason}"


@dataclass
class UniformityVerdict:
    clause_a: bool
    clause_b: bool
    runs: int
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.clause_a and self.clause_b


def uniformity_violations(r: SimResult, scenario: str = "") -> list[Violation]:
    """Clause (b) for one run: no conforming party under water, and every
    published but untriggered leaving contract of a conforming party refunded."""
    _require_quiescent(r)
    sid = scenario or r.describe()
    out = []
    for p in r.conforming:
        if classify(p, r) is OutcomeClass.UNDER_WATER:
            out.append(Violation(sid, p, None, "conforming party UNDER_WATER"))
        for a in r.g.leaving(p):
            st = r.state_of(a.key)
            if st is ContractState.PUBLISHED:
                out.append(Violation(sid, p, arc_id(a.key), "leaving contract never refunded"))
    return out


def check_uniformity(results: Sequence[tuple[str, SimResult]]) -> UniformityVerdict:
    """(a) every all-conforming run triggers every arc; (b) holds in every run."""
    v = UniformityVerdict(True, True, len(results))
    for sid, r in results:
        _require_quiescent(r)
        if not r.deviators:
            missing = [a for a in r.g.arcs if not r.triggered(a.key)]
            if missing:
                v.clause_a = False
                v.violations.append(
                    Violation(sid, None, arc_id(missing[0].key),
                              f"all-conforming run left {len(missing)} arc(s) untriggered")
                )
        bad = uniformity_violations(r, sid)
        if bad:
            v.clause_b = False
            v.violations.extend(bad)
    return v


# -- trace-level properties ---------------------------------------------------


def resolution_bound(r: SimResult) -> int:
    """Every conforming party's contracts must resolve strictly before this."""
    p = r.proto
    return p.start + (p.diam + p.n + 2) * p.delta + 2 * p.epsilon


def resolution_time(r: SimResult, arc) -> int | None:
    c = r.contracts.get(arc)
    if c is None:
        return None
    if c.state is ContractState.TRIGGERED:
        return c.trigger_record.time
    if c.state is ContractState.REFUNDED:
        return c.refund_time
    return None


def late_resolutions(r: SimResult, scenario: str = "") -> list[Violation]:
    sid = scenario or r.describe()
    bound = resolution_bound(r)
    out = []
    for p in r.conforming:
        for a in r.g.leaving(p):
            if a.key not in r.contracts:
                continue
            t = resolution_time(r, a.key)
            if t is None or not t < bound:
                out.append(Violation(sid, p, arc_id(a.key),
                                     f"resolved at {t}, bound is strictly before {bound}"))
    return out


def leaving_implies_entering(r: SimResult, scenario: str = "") -> list[Violation]:
    """A conforming party with a triggered leaving arc has every entering arc triggered."""
    sid = scenario or r.describe()
    out = []
    for p in r.conforming:
        if any(r.triggered(a.key) for a in r.g.leaving(p)):
            for a in r.g.entering(p):
                if not r.triggered(a.key):
                    out.append(Violation(sid, p, arc_id(a.key),
                                         "leaving arc triggered but this entering arc is not"))
    return out


def signature_first_use(r: SimResult, scenario: str = "") -> list[Violation]:
    """A conforming party's signature first shows up in its own transfer call."""
    sid = scenario or r.describe()
    out = []
    conforming = set(r.conforming)
    seen: dict[PartyId, int] = {}
    # trigger records are only readable after a successful transfer
    events = sorted(
        (c.trigger_record.time, arc, c) for arc, c in r.contracts.items()
        if c.trigger_record is not None
    )
    for t, arc, c in events:
        for s in c.trigger_record.signatures:
            if s.signer in conforming and s.signer not in seen:
                seen[s.signer] = t
                if c.counterparty != s.signer:
                    out.append(Violation(sid, s.signer, arc_id(arc),
                                         "signature first revealed by another party"))
    return out


def verify_op_violations(r: SimResult, scenario: str = "") -> list[Violation]:
    sid = scenario or r.describe()
    k, n = r.leaders.k, r.g.n
    out = []
    for rec in r.trace.of("transfer"):
        d = dict(rec.detail)
        if not d.get("ok"):
            continue
        if d["hash_checks"] != k or d["sig_checks"] > n or d["hash_checks"] + d["sig_checks"] > 2 * n:
            out.append(Violation(sid, rec.actor, rec.target,
                                 f"hash_checks={d['hash_checks']} sig_checks={d['sig_checks']}"))
    return out


# -- equilibrium --------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumWitness:
    coalition: tuple[PartyId, ...]
    strategies: tuple[tuple[PartyId, str], ...]
    gain: Payoff
    baseline: Payoff

    def __str__(self) -> str:
        strat = " ".join(f"{p}:{s}" for p, s in self.strategies)
        return (f"coalition {{{','.join(map(str, self.coalition))}}} playing {strat} gets "
                f"{fmt_payoff(self.gain)} > {fmt_payoff(self.baseline)}")


@dataclass
class EquilibriumVerdict:
    ok: bool
    complete: bool
    runs: int
    coalitions_covered: int
    coalitions_total: int
    witnesses: list[EquilibriumWitness] = field(default_factory=list)
    note: str = ""

    def status(self) -> str:
        if not self.ok:
            return "fail"
        return "pass" if self.complete else "partial"


Catalog = Callable[[SwapDigraph, object, PartyId], list[Strategy]]


def check_equilibrium(
    g: SwapDigraph,
    model: str = "plain",
    coalition_size_limit: int = 1,
    catalog: Catalog | None = deviation_catalog,
    max_runs: int = 50_000,
    stop_at_first: bool = False,
    **sim_kwargs,
) -> EquilibriumVerdict:
    """Exhaustive coalition search over the deviation catalog.

    Members outside the coalition conform. Each coalition member picks from
    its own catalog (or conforms), at least one member deviates, and
    members of a multi-party coalition pool secrets and keys. The verdict
    fails when some run gives the coalition a total payoff strictly above
    its all-conforming total.
    """
    base = simulate(g, **sim_kwargs)
    _require_quiescent(base)
    sim_kwargs = dict(sim_kwargs, leaders=base.leaders)
    coalitions = [c for size in range(1, coalition_size_limit + 1)
                  for c in itertools.combinations(g.parties, size)]
    verdict = EquilibriumVerdict(True, True, 1, 0, len(coalitions))
    leaders = base.leaders
    menus = {p: ([Strategy()] + (catalog(g, leaders, p) if catalog else [])) for p in g.parties}
    for c in coalitions:
        combos = [menus[p] for p in c]
        count = 1
        for m in combos:
            count *= len(m)
        if verdict.runs + count - 1 > max_runs:
            verdict.complete = False
            verdict.note = (f"run budget {max_runs} reached after {verdict.coalitions_covered} "
                            f"of {len(coalitions)} coalitions")
            break
        baseline = coalition_payoff(c, base, model)
        for joint in itertools.product(*combos):
            if all(type(s) is Strategy for s in joint):
                continue
            r = simulate(g, dict(zip(c, joint)), coalitions=[c] if len(c) > 1 else (),
                         **sim_kwargs)
            verdict.runs += 1
            if not r.trace.quiescent:
                verdict.ok = False
                verdict.note = f"non-quiescent run: {r.describe()}"
                continue
            got = coalition_payoff(c, r, model)
            if got > baseline:
                verdict.ok = False
                verdict.witnesses.append(EquilibriumWitness(
                    c, tuple((p, s.label()) for p, s in zip(c, joint)), got, baseline))
                if stop_at_first:
                    return verdict
        verdict.coalitions_covered += 1
    return verdict


# -- sweep corpus -------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    g: SwapDigraph


# every party in the corpus must net a positive amount, including the
# two-in two-out vertices, so receiving is worth three times giving
CORPUS_VALUES = (1, 3)


def _with_values(g: SwapDigraph, values=CORPUS_VALUES) -> SwapDigraph:
    return SwapDigraph.from_pairs(g.n, [a.key for a in g.arcs], *values)


def strongly_connected_classes(n: int) -> list[SwapDigraph]:
    """All strongly connected digraphs on ``n`` parties up to isomorphism.

    Enumerates every arc subset and keeps the first representative of each
    isomorphism class in subset order, so the output is deterministic.
    """
    pairs = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    reps: list[nx.DiGraph] = []
    out = []
    for size in range(n, len(pairs) + 1):
        for sub in itertools.combinations(pairs, size):
            h = nx.DiGraph()
            h.add_nodes_from(range(1, n + 1))
            h.add_edges_from(sub)
            if not nx.is_strongly_connected(h):
                continue
            if any(nx.is_isomorphic(h, r) for r in reps):
                continue
            reps.append(h)
            out.append(SwapDigraph.from_pairs(n, sub))
    return out


def three_cycle() -> SwapDigraph:
    return SwapDigraph.from_pairs(3, [(1, 2), (2, 3), (3, 1)])


def complete_three() -> SwapDigraph:
    return SwapDigraph.from_pairs(3, [(u, v) for u in (1, 2, 3) for v in (1, 2, 3) if u != v])


def two_leader_four() -> SwapDigraph:
    # two disjoint 2-cycles joined into a 4-cycle; no single vertex breaks every cycle
    return SwapDigraph.from_pairs(4, [(1, 2), (2, 1), (3, 4), (4, 3), (2, 3), (4, 1)])


def ring(n: int) -> SwapDigraph:
    return SwapDigraph.from_pairs(n, [(i, i % n + 1) for i in range(1, n + 1)])


def default_corpus() -> list[CorpusEntry]:
    out = []
    for n in (2, 3):
        for i, g in enumerate(strongly_connected_classes(n), start=1):
            out.append(CorpusEntry(f"sc{n}-{i}-a{len(g.arcs)}", _with_values(g)))
    out.append(CorpusEntry("three-cycle", _with_values(three_cycle())))
    out.append(CorpusEntry("complete3", _with_values(complete_three())))
    out.append(CorpusEntry("two-leader-4", _with_values(two_leader_four())))
    return out


def deviation_runs(g: SwapDigraph, **sim_kwargs) -> list[tuple[str, SimResult]]:
    """The all-conforming run plus one run per single-party catalog deviation."""
    base = simulate(g, **sim_kwargs)
    runs = [("all-conforming", base)]
    sim_kwargs = dict(sim_kwargs, leaders=base.leaders)
    for p in g.parties:
        for s in deviation_catalog(g, base.leaders, p):
            r = simulate(g, {p: s}, **sim_kwargs)
            runs.append((f"{p}:{s.label()}", r))
    return runs
