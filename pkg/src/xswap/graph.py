"""Swap digraphs: parties, arcs, valuations and the graph algorithms the
protocol relies on (distances, strong connectivity, feedback vertex sets).

Parties are identified by integers ``1..n``; the integer order is the
canonical order every party uses to pick leaders, so two parties holding
equal digraphs always compute the same leader list.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import networkx as nx

PartyId = int

EXACT_FVS_LIMIT = 12
VALIDATION_ARC_LIMIT = 10
GREEDY_CYCLE_CAP = 200_000


class GraphError(ValueError):
    """Raised for malformed or unsupported swap digraphs."""


@dataclass(frozen=True)
class Arc:
    tail: PartyId
    head: PartyId
    chain: str = ""
    value_to_tail: Fraction = Fraction(1)
    value_to_head: Fraction = Fraction(2)

    @property
    def key(self) -> tuple[PartyId, PartyId]:
        return (self.tail, self.head)

    def __str__(self) -> str:
        return f"{self.tail}->{self.head}"


@dataclass(frozen=True)
class SwapDigraph:
    n: int
    arcs: tuple[Arc, ...]
    names: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphError("a swap needs at least one party")
        seen = set()
        for a in self.arcs:
            if a.tail == a.head:
                raise GraphError(f"self-loop on party {a.tail}")
            if not (1 <= a.tail <= self.n and 1 <= a.head <= self.n):
                raise GraphError(f"arc {a} references a party outside 1..{self.n}")
            if a.key in seen:
                raise GraphError(f"parallel arc {a}")
            if a.value_to_tail < 0 or a.value_to_head < 0:
                raise GraphError(f"negative valuation on arc {a}")
            seen.add(a.key)
        # canonical arc order keeps every derived quantity deterministic
        object.__setattr__(self, "arcs", tuple(sorted(self.arcs, key=lambda a: a.key)))
        if not self.names:
            object.__setattr__(self, "names", tuple(str(i) for i in self.parties))

    @classmethod
    def from_pairs(
        cls,
        n: int,
        pairs: Iterable[tuple[int, int]],
        value_to_tail=1,
        value_to_head=2,
    ) -> "SwapDigraph":
        arcs = tuple(
            Arc(u, v, f"chain-{u}-{v}", Fraction(value_to_tail), Fraction(value_to_head))
            for u, v in pairs
        )
        return cls(n, arcs)

    @property
    def parties(self) -> range:
        return range(1, self.n + 1)

    def name(self, p: PartyId) -> str:
        return self.names[p - 1]

    def arc(self, tail: PartyId, head: PartyId) -> Arc:
        for a in self.arcs:
            if a.tail == tail and a.head == head:
                return a
        raise KeyError((tail, head))

    def entering(self, v: PartyId) -> list[Arc]:
        """Entering arcs of ``v`` in local label order (by tail)."""
        return [a for a in self.arcs if a.head == v]

    def leaving(self, v: PartyId) -> list[Arc]:
        return [a for a in self.arcs if a.tail == v]

    def successors(self, v: PartyId) -> list[PartyId]:
        return [a.head for a in self.arcs if a.tail == v]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.parties)
        g.add_edges_from(a.key for a in self.arcs)
        return g


@dataclass(frozen=True)
class LeaderSet:
    leaders: tuple[PartyId, ...]

    @property
    def top(self) -> PartyId:
        return self.leaders[0]

    @property
    def k(self) -> int:
        return len(self.leaders)

    def __contains__(self, p: object) -> bool:
        return p in self.leaders

    def __iter__(self) -> Iterator[PartyId]:
        return iter(self.leaders)


def _bfs_distances(g: SwapDigraph, source: PartyId) -> dict[PartyId, int]:
    adj = {v: g.successors(v) for v in g.parties}
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def unreachable_pair(g: SwapDigraph) -> tuple[PartyId, PartyId] | None:
    """First ordered pair ``(u, v)`` with ``v`` unreachable from ``u``, or None."""
    for u in g.parties:
        dist = _bfs_distances(g, u)
        for v in g.parties:
            if v not in dist:
                return (u, v)
    return None


def is_strongly_connected(g: SwapDigraph) -> bool:
    return unreachable_pair(g) is None


def diameter(g: SwapDigraph) -> int:
    """Largest shortest-path distance over ordered pairs of distinct parties."""
    best = 0
    for u in g.parties:
        dist = _bfs_distances(g, u)
        if len(dist) != g.n:
            missing = min(set(g.parties) - set(dist))
            raise GraphError(
                f"diameter undefined: party {g.name(missing)} unreachable from {g.name(u)}"
            )
        best = max(best, max(dist.values()))
    return best


def has_cycle(g: SwapDigraph, removed: Iterable[PartyId] = ()) -> bool:
    """Iterative three-colour DFS over ``g`` minus ``removed``."""
    gone = set(removed)
    adj = {v: [w for w in g.successors(v) if w not in gone] for v in g.parties if v not in gone}
    colour = dict.fromkeys(adj, 0)
    for root in adj:
        if colour[root]:
            continue
        stack = [(root, iter(adj[root]))]
        colour[root] = 1
        while stack:
            v, it = stack[-1]
            for w in it:
                if colour[w] == 1:
                    return True
                if colour[w] == 0:
                    colour[w] = 1
                    stack.append((w, iter(adj[w])))
                    break
            else:
                colour[v] = 2
                stack.pop()
    return False


def _greedy_fvs(g: SwapDigraph) -> list[PartyId]:
    chosen: list[PartyId] = []
    while has_cycle(g, chosen):
        h = g.to_networkx()
        h.remove_nodes_from(chosen)
        counts = dict.fromkeys(h.nodes, 0)
        for i, cyc in enumerate(nx.simple_cycles(h)):
            if i >= GREEDY_CYCLE_CAP:
                break
            for v in cyc:
                counts[v] += 1
        # ties (including the all-zero case) go to the smallest id
        best = max(sorted(counts), key=lambda v: counts[v])
        chosen.append(best)
    return chosen


def feedback_vertex_set(g: SwapDigraph, exact_limit: int = EXACT_FVS_LIMIT) -> LeaderSet:
    """Deterministic feedback vertex set; the top leader is its smallest member.

    Up to ``exact_limit`` parties, subsets are tried by size and then
    lexicographically, so the result is the lexicographically-first
    minimum set. Larger graphs use greedy removal of the vertex lying on the
    most simple cycles.
    """
    if g.n <= exact_limit:
        for size in range(0, g.n + 1):
            for cand in itertools.combinations(g.parties, size):
                if not has_cycle(g, cand):
                    if not cand:
                        raise GraphError("acyclic swap digraph has no leaders")
                    return LeaderSet(tuple(cand))
        raise AssertionError("unreachable: removing every vertex is acyclic")
    chosen = _greedy_fvs(g)
    if not chosen:
        raise GraphError("acyclic swap digraph has no leaders")
    return LeaderSet(tuple(sorted(chosen)))


def check_leader_set(g: SwapDigraph, leaders: Sequence[PartyId]) -> LeaderSet:
    """Validate an explicit leader override."""
    if not leaders:
        raise GraphError("leader override is empty")
    if len(set(leaders)) != len(leaders) or any(not 1 <= p <= g.n for p in leaders):
        raise GraphError(f"invalid leader override {list(leaders)}")
    if has_cycle(g, leaders):
        raise GraphError(f"leader override {list(leaders)} is not a feedback vertex set")
    return LeaderSet(tuple(sorted(leaders)))


# -- valuations ---------------------------------------------------------------


def benefit(g: SwapDigraph, arcs: Iterable[Arc], v: PartyId) -> Fraction:
    """value^+ minus value^- for ``v`` over the given arc set."""
    total = Fraction(0)
    for a in arcs:
        if a.head == v:
            total += a.value_to_head
        if a.tail == v:
            total -= a.value_to_tail
    return total


def weakly_connected(arcs: Sequence[Arc]) -> bool:
    if not arcs:
        return False
    nodes = {a.tail for a in arcs} | {a.head for a in arcs}
    parent = {v: v for v in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in arcs:
        parent[find(a.tail)] = find(a.head)
    return len({find(v) for v in nodes}) == 1


@dataclass(frozen=True)
class SubswapWitness:
    arcs: tuple[tuple[PartyId, PartyId], ...]
    coalition: tuple[PartyId, ...]
    coalition_gain: Fraction


@dataclass(frozen=True)
class ValidationReport:
    status: str  # "valid", "invalid" or "skipped"
    participation_ok: bool
    participation_failures: tuple[PartyId, ...] = ()
    subswap_ok: bool | None = None
    witness: SubswapWitness | None = None
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.status == "valid"


def validate_swap_values(g: SwapDigraph, max_arcs: int = VALIDATION_ARC_LIMIT) -> ValidationReport:
    """Check participation and the no-better-subswap assumption.

    A sub-swap ``D'`` is any weakly connected arc subset. For fixed ``D'``
    the best coalition must contain every party that loses by moving to
    ``D'`` (otherwise the outsider clause fails), so a violating coalition
    exists iff the summed gain over all of ``V'`` is positive.
    """
    if not is_strongly_connected(g):
        u, v = unreachable_pair(g)
        raise GraphError(f"party {g.name(v)} unreachable from {g.name(u)}")
    base = {v: benefit(g, g.arcs, v) for v in g.parties}
    bad = tuple(v for v in g.parties if base[v] <= 0)
    if len(g.arcs) > max_arcs:
        return ValidationReport(
            "skipped",
            participation_ok=not bad,
            participation_failures=bad,
            reason=f"check skipped: {len(g.arcs)} arcs exceeds limit {max_arcs}",
        )
    witness = None
    arcs = g.arcs
    for r in range(1, len(arcs) + 1):
        for sub in itertools.combinations(arcs, r):
            if not weakly_connected(sub):
                continue
            nodes = sorted({a.tail for a in sub} | {a.head for a in sub})
            gains = {v: benefit(g, sub, v) - base[v] for v in nodes}
            total = sum(gains.values(), Fraction(0))
            if total > 0:
                coalition = tuple(v for v in nodes if gains[v] != 0) or tuple(nodes)
                witness = SubswapWitness(tuple(a.key for a in sub), coalition, total)
                break
        if witness:
            break
    ok = not bad and witness is None
    return ValidationReport(
        "valid" if ok else "invalid",
        participation_ok=not bad,
        participation_failures=bad,
        subswap_ok=witness is None,
        witness=witness,
    )
