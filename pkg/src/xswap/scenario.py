"""Scenario files: a JSON tree describing the swap, the strategies and the
run knobs. Errors carry the file name and the line of the offending value.

Two kinds exist. ``"kind": "swap"`` (the default) describes a digraph to
simulate; ``"kind": "trace"`` describes a hand-built final ledger state used
as a negative control for the verdict code.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .contract import ContractState, SwapContract
from .crypto import Hashlock, get_backend
from .graph import (
    Arc,
    GraphError,
    LeaderSet,
    SwapDigraph,
    check_leader_set,
    diameter,
    feedback_vertex_set,
    unreachable_pair,
)
from .ledger import EventTrace, LatencyPolicy
from .parties import (
    STRATEGY_TYPES,
    Protocol,
    SimResult,
    Strategy,
    make_strategy,
    simulate,
)

KNOWN_KEYS = {
    "id", "kind", "parties", "arcs", "leaders", "strategies", "coalitions", "delta",
    "epsilon", "latency", "seed", "payoff", "crypto", "checks", "final_states", "conforming",
    "description",
}
RUN_CHECKS = ("uniformity", "properties", "resolution", "completion", "equilibrium")
DEFAULT_CHECKS = ("uniformity", "properties", "resolution", "completion")


class ScenarioError(ValueError):
    def __init__(self, path: str, line: int, msg: str) -> None:
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line
        self.msg = msg


@dataclass
class ScenarioSpec:
    id: str
    kind: str
    g: SwapDigraph
    leaders: LeaderSet | None = None
    strategies: dict[int, Strategy] = field(default_factory=dict)
    coalitions: list[frozenset[int]] = field(default_factory=list)
    delta: int = 1000
    epsilon: int = 10
    latency: str = "max"
    seed: int = 0
    payoff: str = "plain"
    crypto: str = "test"
    checks: tuple[str, ...] = DEFAULT_CHECKS
    final_states: dict[tuple[int, int], ContractState] = field(default_factory=dict)
    conforming: frozenset[int] | None = None
    path: str = ""

    def with_overrides(self, **kw) -> "ScenarioSpec":
        d = dict(self.__dict__)
        d.update({k: v for k, v in kw.items() if v is not None})
        return ScenarioSpec(**d)

    def sim_kwargs(self) -> dict:
        return dict(leaders=self.leaders, delta=self.delta, epsilon=self.epsilon,
                    latency=self.latency, seed=self.seed, backend=self.crypto)

    def run(self) -> SimResult:
        if self.kind == "trace":
            return constructed_result(self)
        return simulate(self.g, self.strategies, self.coalitions, **self.sim_kwargs())


class _Locator:
    """Maps a JSON value back to a line by searching the raw text."""

    def __init__(self, path: str, text: str) -> None:
        self.path = path
        self.text = text

    def line_of(self, *needles: Any) -> int:
        pos = 0
        for needle in needles:
            token = json.dumps(needle)
            i = self.text.find(token, pos)
            if i < 0:
                break
            pos = i
        return self.text.count("\n", 0, pos) + 1

    def fail(self, msg: str, *needles: Any) -> ScenarioError:
        return ScenarioError(self.path, self.line_of(*needles) if needles else 1, msg)


def _fraction(v, loc: _Locator, *where) -> Fraction:
    try:
        if isinstance(v, bool):
            raise ValueError
        if isinstance(v, float):
            return Fraction(str(v))
        return Fraction(v)
    except (ValueError, TypeError, ZeroDivisionError):
        raise loc.fail(f"valuation {v!r} is not a rational number", *where) from None


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = str(path)
    text = Path(path).read_text()
    return parse_scenario(text, path)


def parse_scenario(text: str, path: str = "<scenario>") -> ScenarioSpec:
    loc = _Locator(path, text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(path, e.lineno, f"invalid JSON: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(path, 1, "top level must be an object")
    for k in doc:
        if k not in KNOWN_KEYS:
            raise loc.fail(f"unknown key {k!r}", k)
    kind = doc.get("kind", "swap")
    if kind not in ("swap", "trace"):
        raise loc.fail(f"unknown scenario kind {kind!r}", "kind")
    sid = doc.get("id") or Path(path).stem

    parties = doc.get("parties")
    if not isinstance(parties, list) or not parties:
        raise loc.fail("'parties' must be a non-empty list of names", "parties")
    names = [str(p) for p in parties]
    if len(set(names)) != len(names):
        dup = next(p for p in names if names.count(p) > 1)
        raise loc.fail(f"duplicate party {dup!r}", "parties", dup, dup)
    index = {name: i for i, name in enumerate(names, start=1)}

    def party(name, *where) -> int:
        if str(name) not in index:
            raise loc.fail(f"unknown party {name!r}", *where)
        return index[str(name)]

    raw_arcs = doc.get("arcs")
    if not isinstance(raw_arcs, list) or not raw_arcs:
        raise loc.fail("'arcs' must be a non-empty list", "arcs")
    arcs = []
    for i, a in enumerate(raw_arcs):
        if isinstance(a, list) and len(a) == 2:
            a = {"from": a[0], "to": a[1]}
        if not isinstance(a, dict) or "from" not in a or "to" not in a:
            raise loc.fail(f"arc #{i + 1} needs 'from' and 'to'", "arcs")
        u = party(a["from"], "arcs", a["from"])
        v = party(a["to"], "arcs", a["from"], a["to"])
        chain = str(a.get("chain", f"chain-{a['from']}-{a['to']}"))
        arcs.append(Arc(
            u, v, chain,
            _fraction(a.get("value_to_tail", 1), loc, "arcs", a["from"], a["to"]),
            _fraction(a.get("value_to_head", 2), loc, "arcs", a["from"], a["to"]),
        ))
    try:
        g = SwapDigraph(len(names), tuple(arcs), tuple(names))
    except GraphError as e:
        raise loc.fail(str(e), "arcs") from None
    bad = unreachable_pair(g)
    if bad is not None:
        u, v = bad
        raise loc.fail(
            f"swap digraph is not strongly connected: {names[v - 1]} is unreachable "
            f"from {names[u - 1]}", "arcs")

    spec = ScenarioSpec(sid, kind, g, path=path)
    if "leaders" in doc:
        ids = [party(p, "leaders", p) for p in doc["leaders"]]
        try:
            spec.leaders = check_leader_set(g, ids)
        except GraphError as e:
            raise loc.fail(str(e), "leaders") from None

    for key, typ in (("delta", int), ("epsilon", int), ("seed", int)):
        if key in doc:
            if not isinstance(doc[key], typ) or isinstance(doc[key], bool):
                raise loc.fail(f"{key!r} must be an integer", key)
            setattr(spec, key, doc[key])
    if not 0 < spec.epsilon < spec.delta:
        raise loc.fail(f"need 0 < epsilon < delta (epsilon={spec.epsilon}, delta={spec.delta})",
                       "epsilon")
    if "latency" in doc:
        if doc["latency"] not in LatencyPolicy.NAMES:
            raise loc.fail(f"unknown latency policy {doc['latency']!r}", "latency")
        spec.latency = doc["latency"]
    if "payoff" in doc:
        if doc["payoff"] not in ("plain", "herlihy"):
            raise loc.fail(f"unknown payoff model {doc['payoff']!r}", "payoff")
        spec.payoff = doc["payoff"]
    if "crypto" in doc:
        if doc["crypto"] not in ("real", "test"):
            raise loc.fail(f"unknown crypto backend {doc['crypto']!r}", "crypto")
        spec.crypto = doc["crypto"]
    if "checks" in doc:
        for c in doc["checks"]:
            if c not in RUN_CHECKS:
                raise loc.fail(f"unknown check {c!r}", "checks", c)
        spec.checks = tuple(doc["checks"])

    def strategy_of(name, body, *where) -> Strategy:
        if isinstance(body, str):
            body = {"name": body}
        if not isinstance(body, dict) or "name" not in body:
            raise loc.fail(f"strategy for {name!r} needs a 'name'", *where)
        sname = body["name"]
        if sname not in STRATEGY_TYPES:
            raise loc.fail(f"unknown strategy {sname!r}", *where, sname)
        params = {k: v for k, v in body.items() if k != "name"}
        if "arcs" in params:
            params["arcs"] = [
                (party(x, *where, x), party(y, *where, y)) for x, y in params["arcs"]
            ]
        try:
            return make_strategy(sname, **params)
        except (TypeError, ValueError) as e:
            raise loc.fail(f"bad parameters for {sname}: {e}", *where, sname) from None

    for name, body in (doc.get("strategies") or {}).items():
        spec.strategies[party(name, "strategies", name)] = strategy_of(name, body, "strategies", name)
    for block in doc.get("coalitions") or []:
        members = block.get("members") if isinstance(block, dict) else None
        if not members:
            raise loc.fail("coalition block needs 'members'", "coalitions")
        ids = frozenset(party(m, "coalitions", m) for m in members)
        for c in spec.coalitions:
            if c & ids:
                raise loc.fail("a party may belong to one coalition only", "coalitions")
        spec.coalitions.append(ids)
        for name, body in (block.get("strategies") or {}).items():
            p = party(name, "coalitions", name)
            if p not in ids:
                raise loc.fail(f"{name!r} is not a member of this coalition", "coalitions", name)
            spec.strategies[p] = strategy_of(name, body, "coalitions", name)

    if kind == "trace":
        states = doc.get("final_states")
        if not isinstance(states, dict):
            raise loc.fail("trace scenario needs 'final_states'", "final_states")
        for k, v in states.items():
            m = re.fullmatch(r"\s*(.+?)\s*->\s*(.+?)\s*", k)
            if not m:
                raise loc.fail(f"arc key {k!r} must look like 'A->B'", "final_states", k)
            arc = (party(m.group(1), "final_states", k), party(m.group(2), "final_states", k))
            if arc not in {a.key for a in g.arcs}:
                raise loc.fail(f"no arc {k!r} in the swap", "final_states", k)
            try:
                spec.final_states[arc] = ContractState(v)
            except ValueError:
                raise loc.fail(f"unknown contract state {v!r}", "final_states", k) from None
        if "conforming" in doc:
            spec.conforming = frozenset(party(p, "conforming", p) for p in doc["conforming"])
    return spec


class _Constructed(Strategy):
    name = "Constructed"


def constructed_result(spec: ScenarioSpec) -> SimResult:
    """A SimResult whose final contract states are given directly."""
    g = spec.g
    leaders = spec.leaders or feedback_vertex_set(g)
    backend = get_backend(spec.crypto)
    proto = Protocol(g, leaders, diameter(g), spec.delta, spec.epsilon, backend)
    contracts = {}
    for arc, st in spec.final_states.items():
        c = SwapContract(arc[0], arc[1], g.arc(*arc).chain,
                         tuple(Hashlock(bytes(32)) for _ in leaders), (), 0,
                         proto.diam, g.n, spec.delta, spec.epsilon, state=st)
        contracts[arc] = c
    conforming = spec.conforming if spec.conforming is not None else frozenset(g.parties)
    strategies = {p: Strategy() if p in conforming else _Constructed() for p in g.parties}
    return SimResult(g, proto, EventTrace(), contracts, strategies, (), {}, spec.latency, spec.seed)


def write_scenario(path: str | Path, sid: str, g: SwapDigraph, **extra) -> None:
    doc = {"id": sid, "parties": list(g.names), "arcs": []}
    for a in g.arcs:
        doc["arcs"].append({
            "from": g.name(a.tail), "to": g.name(a.head), "chain": a.chain,
            "value_to_tail": str(a.value_to_tail), "value_to_head": str(a.value_to_head),
        })
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
