"""Party behaviours: the conforming phase machine and the deviation catalog.

Each party holds a ``PartyState`` and a strategy. The conforming strategy
runs the four phases for its role (top leader, sub-leader, follower) and a
final regain step; deviations subclass it and override one hook each, so
every deviation differs from the protocol in exactly the named way.
"""
from __future__ import annotations

import enum
import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .contract import ContractState, SwapContract
from .crypto import (
    Backend,
    Hashlock,
    KeyPair,
    Secret,
    TupleSignature,
    gen_secret,
    get_backend,
    make_hashlock,
    sign_tuple,
    verify_hashlock,
    verify_tuple_sig,
)
from .graph import Arc, LeaderSet, PartyId, SwapDigraph, diameter, feedback_vertex_set
from .ledger import ArcKey, EventTrace, LatencyPolicy, Ledger, PartyContext, SimClock


class Role(enum.Enum):
    TOP_LEADER = "TopLeader"
    SUB_LEADER = "SubLeader"
    FOLLOWER = "Follower"


class Phase(enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    REGAIN = "Regain"
    HALTED = "Halted"


@dataclass(frozen=True)
class Protocol:
    """Swap-wide constants every party derives from the same digraph."""

    g: SwapDigraph
    leaders: LeaderSet
    diam: int
    delta: int
    epsilon: int
    backend: Backend
    start: int = 0

    @property
    def n(self) -> int:
        return self.g.n

    @property
    def phase1_deadline(self) -> int:
        return self.start + self.epsilon

    @property
    def publish_deadline(self) -> int:
        # followers give up once now > this
        return self.start + (self.diam + 1) * self.delta + self.epsilon

    @property
    def secret_deadline(self) -> int:
        return self.start + (self.diam + 1) * self.delta + 2 * self.epsilon

    @property
    def refund_deadline(self) -> int:
        return self.start + (self.diam + self.n + 1) * self.delta + 2 * self.epsilon

    def role(self, p: PartyId) -> Role:
        if p == self.leaders.top:
            return Role.TOP_LEADER
        if p in self.leaders:
            return Role.SUB_LEADER
        return Role.FOLLOWER


@dataclass
class Coalition:
    """Members share secrets and signing ability instantly."""

    members: frozenset[PartyId]
    secrets: dict[PartyId, Secret] = field(default_factory=dict)
    keys: dict[PartyId, KeyPair] = field(default_factory=dict)

    def __contains__(self, p: object) -> bool:
        return p in self.members


@dataclass
class PartyState:
    id: PartyId
    role: Role
    keys: KeyPair
    own_secret: Secret | None = None
    phase: Phase = Phase.P1
    known_hashlocks: dict[PartyId, Hashlock] = field(default_factory=dict)
    known_keys: dict[PartyId, bytes] = field(default_factory=dict)
    collected_secrets: dict[PartyId, Secret] = field(default_factory=dict)
    observed_trigger: tuple[ArcKey, int] | None = None
    own_signature: TupleSignature | None = None
    broadcast_done: bool = False
    called: set[ArcKey] = field(default_factory=set)
    coalition: Coalition | None = None


def setup_parties(proto: Protocol, seed: int) -> dict[PartyId, PartyState]:
    states = {}
    for p in proto.g.parties:
        keys = proto.backend.keypair(p, seed)
        ps = PartyState(p, proto.role(p), keys)
        if p in proto.leaders:
            ps.own_secret = gen_secret(_secret_seed(seed, p))
            ps.known_hashlocks[p] = make_hashlock(ps.own_secret, proto.backend)
        ps.known_keys[p] = keys.public_key
        states[p] = ps
    return states


def _secret_seed(seed: int, p: PartyId) -> int:
    # str hashing is salted per process, so derive the seed explicitly
    return int.from_bytes(hashlib.sha256(b"xswap-secret|%d|%d" % (seed, p)).digest()[:8], "big")


# -- conforming behaviour -----------------------------------------------------


class Strategy:
    """The conforming protocol behaviour; deviations override the hooks."""

    name = "Conforming"

    def __init__(self, **params) -> None:
        self.params = params

    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.name}({inner})"

    def __repr__(self) -> str:
        return self.label()

    # hooks -------------------------------------------------------------

    def key_to_send(self, ps: PartyState, proto: Protocol, to: PartyId) -> bytes:
        return ps.keys.public_key

    def hashlock_to_send(self, ps: PartyState, proto: Protocol, to: PartyId) -> Hashlock:
        return ps.known_hashlocks[ps.id]

    def arcs_to_publish(self, ps: PartyState, arcs: list[Arc]) -> list[Arc]:
        return arcs

    def arcs_to_trigger(self, ps: PartyState, arcs: list[Arc]) -> list[Arc]:
        return arcs

    def share_secret(self, ps: PartyState, proto: Protocol, ctx: PartyContext) -> None:
        ctx.send(proto.leaders.top, ("secret", ps.own_secret))

    def extra_broadcast(self, ps: PartyState, proto: Protocol, ctx: PartyContext) -> None:
        pass

    def before_phase(self, ps: PartyState, proto: Protocol, ctx: PartyContext) -> None:
        """Runs ahead of the phase handler; may halt the party."""

    def overlay(self, ps: PartyState, proto: Protocol, ctx: PartyContext) -> None:
        """Runs every tick regardless of phase (used by eager deviations)."""

    # driver ------------------------------------------------------------

    def step(self, ps: PartyState, proto: Protocol, ctx: PartyContext) -> None:
        self.absorb(ps, proto, ctx)
        self.overlay(ps, proto, ctx)
        handlers = {
            Phase.P1: self.phase1,
            Phase.P2: self.phase2,
            Phase.P3: self.phase3,
            Phase.P4: self.phase4,
            Phase.REGAIN: self.regain,
        }
        while ps.phase is not Phase.HALTED:
            before = ps.phase
            self.before_phase(ps, proto, ctx)
            if ps.phase is Phase.HALTED:
                break
            handlers[ps.phase](ps, proto, ctx)
            if ps.phase is before:
                break

    def absorb(self, ps: PartyState, proto: Protocol, ctx: PartyContext) -> None:
        for frm, msg in ctx.take_inbox():
            kind, value = msg
            if kind == "key":
                ps.known_keys.setdefault(frm, value)
            elif kind == "hashlock" and frm in proto.leaders:
                ps.known_hashlocks.setdefault(frm, value)
            elif kind == "secret" and frm in proto.leaders and frm != ps.id:
                ps.collected_secrets.setdefault(frm, value)

    # phases ------------------------------------------------------------

    def phase1(self, ps, proto, ctx) -> None:
        if not ps.broadcast_done:
            ps.broadcast_done = True
            for to in proto.g.parties:
                ctx.send(to, ("key", self.key_to_send(ps, proto, to)))
                if ps.role is not Role.FOLLOWER:
                    ctx.send(to, ("hashlock", self.hashlock_to_send(ps, proto, to)))
            self.extra_broadcast(ps, proto, ctx)
            ctx.wake_at(proto.phase1_deadline)
        complete = len(ps.known_keys) == proto.n and all(
            l in ps.known_hashlocks for l in proto.leaders
        )
        if complete:
            ps.phase = Phase.P2
        elif ctx.now >= proto.phase1_deadline:
            ps.phase = Phase.HALTED  # cannot build contracts: quit

    def phase2(self, ps, proto, ctx) -> None:
        if ps.role is not Role.FOLLOWER:
            self.publish_leaving(ps, proto, ctx)
            ps.phase = Phase.P3
            return
        status = self.entering_status(ps, proto, ctx)
        if status == "inconsistent":
            ps.phase = Phase.REGAIN
        elif status == "ready":
            if ctx.now > proto.publish_deadline:
                ps.phase = Phase.REGAIN
            else:
                self.publish_leaving(ps, proto, ctx)
                ps.phase = Phase.P4
        elif ctx.now > proto.publish_deadline:
            ps.phase = Phase.REGAIN
        else:
            ctx.wake_at(proto.publish_deadline + 1)

    def phase3(self, ps, proto, ctx) -> None:
        if ps.role is Role.FOLLOWER:
            ps.phase = Phase.P4
            return
        status = self.entering_status(ps, proto, ctx)
        if ps.role is Role.SUB_LEADER:
            if status == "inconsistent":
                ps.phase = Phase.REGAIN
            elif status == "ready":
                if ctx.now > proto.secret_deadline:
                    ps.phase = Phase.REGAIN
                else:
                    self.share_secret(ps, proto, ctx)
                    ps.phase = Phase.P4
            elif ctx.now > proto.secret_deadline:
                ps.phase = Phase.REGAIN
            else:
                ctx.wake_at(proto.secret_deadline + 1)
            return
        # top leader
        bad_secret = any(
            not verify_hashlock(s, ps.known_hashlocks[l], proto.backend)
            for l, s in ps.collected_secrets.items()
        )
        have_all = all(l in ps.collected_secrets for l in proto.leaders.leaders[1:])
        if bad_secret or status == "inconsistent" or ctx.now >= proto.secret_deadline:
            ps.phase = Phase.REGAIN
        elif have_all and status == "ready":
            self.top_trigger(ps, proto, ctx)
            ps.phase = Phase.REGAIN
        else:
            ctx.wake_at(proto.secret_deadline)

    def phase4(self, ps, proto, ctx) -> None:
        # top leader never reaches here; it triggers from phase3
        for a in proto.g.leaving(ps.id):
            c = ctx.view.get(a.key)
            if c is not None and c.state is ContractState.TRIGGERED:
                rec = c.trigger_record
                ps.observed_trigger = (a.key, ctx.now)
                sig = self.my_signature(ps, proto, rec.secrets)
                sigs = tuple(s for s in rec.signatures if s.signer != ps.id) + (sig,)
                for e in self.arcs_to_trigger(ps, proto.g.entering(ps.id)):
                    ps.called.add(e.key)
                    ctx.transfer(e.key, rec.secrets, sigs)
                ps.phase = Phase.REGAIN
                return
        if ctx.now > proto.refund_deadline:
            ps.phase = Phase.REGAIN
        else:
            ctx.wake_at(proto.refund_deadline + 1)

    def regain(self, ps, proto, ctx) -> None:
        if ctx.now > proto.refund_deadline:
            for a in proto.g.leaving(ps.id):
                c = ctx.view.get(a.key)
                if c is not None and c.party == ps.id and c.state is ContractState.PUBLISHED:
                    ctx.timeout(a.key)
            ps.phase = Phase.HALTED
        else:
            ctx.wake_at(proto.refund_deadline + 1)

    # helpers -----------------------------------------------------------

    def expected_terms(self, ps: PartyState, proto: Protocol, a: Arc) -> tuple:
        return (
            a.tail,
            a.head,
            tuple(ps.known_hashlocks[l] for l in proto.leaders),
            tuple(ps.known_keys[p] for p in proto.g.parties),
            proto.start,
            proto.diam,
            proto.n,
            proto.delta,
            proto.epsilon,
        )

    def build_contract(self, ps: PartyState, proto: Protocol, a: Arc) -> SwapContract:
        tail, head, hashlocks, keys, start, diam, n, delta, eps = self.expected_terms(ps, proto, a)
        return SwapContract(tail, head, a.chain, hashlocks, keys, start, diam, n, delta, eps)

    def publish_leaving(self, ps, proto, ctx) -> None:
        for a in self.arcs_to_publish(ps, proto.g.leaving(ps.id)):
            ctx.publish(self.build_contract(ps, proto, a))

    def entering_status(self, ps, proto, ctx) -> str:
        """'inconsistent', 'ready' (all published and consistent) or 'waiting'."""
        waiting = False
        for a in proto.g.entering(ps.id):
            c = ctx.view.get(a.key)
            if c is None:
                waiting = True
            elif c.terms() != self.expected_terms(ps, proto, a):
                return "inconsistent"
        return "waiting" if waiting else "ready"

    def my_signature(self, ps, proto, secrets: Sequence[Secret]) -> TupleSignature:
        if ps.own_signature is None or ps.own_signature.payload != tuple(secrets):
            ps.own_signature = sign_tuple(ps.keys, secrets, proto.backend)
        return ps.own_signature

    def top_trigger(self, ps, proto, ctx) -> None:
        secrets = tuple(
            ps.own_secret if l == ps.id else ps.collected_secrets[l] for l in proto.leaders
        )
        sig = self.my_signature(ps, proto, secrets)
        for e in self.arcs_to_trigger(ps, proto.g.entering(ps.id)):
            ps.called.add(e.key)
            ctx.transfer(e.key, secrets, (sig,))


Conforming = Strategy


def _fmt(v) -> str:
    if isinstance(v, tuple) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return f"{v[0]}->{v[1]}"
    if isinstance(v, (tuple, list, frozenset, set)):
        return "[" + ";".join(_fmt(x) for x in sorted(v)) + "]"
    if isinstance(v, Phase):
        return v.value
    return str(v)


# -- deviations ---------------------------------------------------------------


class SilentCrash(Strategy):
    """Stops acting for good upon entering ``at_phase``."""

    name = "SilentCrash"

    def __init__(self, at_phase: Phase) -> None:
        super().__init__(at_phase=at_phase)
        self.at_phase = at_phase

    def before_phase(self, ps, proto, ctx) -> None:
        if ps.phase is self.at_phase:
            ps.phase = Phase.HALTED


class FakeHashlock(Strategy):
    """Leader broadcasts the hashlock of a different secret, publishes the real one."""

    name = "FakeHashlock"

    def hashlock_to_send(self, ps, proto, to):
        if to == ps.id:
            return ps.known_hashlocks[ps.id]
        return make_hashlock(Secret(b"fake" + ps.own_secret.value[4:]), proto.backend)


class FakePublicKey(Strategy):
    name = "FakePublicKey"

    def key_to_send(self, ps, proto, to):
        if to == ps.id:
            return ps.keys.public_key
        return proto.backend.keypair(ps.id + 7919, seed=ps.id).public_key


class WithholdSecret(Strategy):
    """Sub-leader that never sends its secret to the top leader."""

    name = "WithholdSecret"

    def share_secret(self, ps, proto, ctx) -> None:
        pass


class WithholdPublish(Strategy):
    name = "WithholdPublish"

    def __init__(self, arcs: Iterable[ArcKey]) -> None:
        arcs = frozenset(tuple(a) for a in arcs)
        super().__init__(arcs=arcs)
        self.arcs = arcs

    def arcs_to_publish(self, ps, arcs):
        return [a for a in arcs if a.key not in self.arcs]


class NoTrigger(Strategy):
    name = "NoTrigger"

    def arcs_to_trigger(self, ps, arcs):
        return []


class ForwardOnlySome(Strategy):
    name = "ForwardOnlySome"

    def __init__(self, arcs: Iterable[ArcKey]) -> None:
        arcs = frozenset(tuple(a) for a in arcs)
        super().__init__(arcs=arcs)
        self.arcs = arcs

    def arcs_to_trigger(self, ps, arcs):
        return [a for a in arcs if a.key in self.arcs]


class EagerTimeout(Strategy):
    """Also fires timeout on its leaving arcs around the refund boundary:
    one call timed to land at the first legal tick under maximal latency and
    one issued at the deadline tick itself."""

    name = "EagerTimeout"

    def overlay(self, ps, proto, ctx) -> None:
        shots = (proto.refund_deadline - proto.delta + 1, proto.refund_deadline)
        for t in shots:
            if ctx.now < t:
                ctx.wake_at(t)
            elif ctx.now == t:
                for a in proto.g.leaving(ps.id):
                    c = ctx.view.get(a.key)
                    if c is not None and c.state is ContractState.PUBLISHED:
                        ctx.timeout(a.key)


class RevealSecretEarly(Strategy):
    """Leader broadcasts its secret to every party during Phase 1."""

    name = "RevealSecretEarly"

    def extra_broadcast(self, ps, proto, ctx) -> None:
        for to in proto.g.parties:
            if to != ps.id:
                ctx.send(to, ("secret", ps.own_secret))


class EagerTrigger(Strategy):
    """Triggers entering arcs as soon as every leader secret is known.

    Secrets come from its own role, messages, the coalition pool, or any
    triggered contract on any chain. Signatures used: every coalition
    member's plus any valid ones already visible on chain, which pushes the
    transfer deadline as late as possible. Publishing follows the protocol.
    """

    name = "EagerTrigger"

    def known_secrets(self, ps, proto, ctx) -> tuple[Secret, ...] | None:
        pool: dict[PartyId, Secret] = dict(ps.collected_secrets)
        if ps.own_secret is not None:
            pool[ps.id] = ps.own_secret
        if ps.coalition is not None:
            pool.update(ps.coalition.secrets)
        out = []
        for l in proto.leaders:
            s = pool.get(l)
            if s is None:
                for c in ctx.view.triggered():
                    s = c.trigger_record.secrets[proto.leaders.leaders.index(l)]
                    break
            if s is None:
                return None
            out.append(s)
        return tuple(out)

    def overlay(self, ps, proto, ctx) -> None:
        secrets = self.known_secrets(ps, proto, ctx)
        if secrets is None:
            return
        for e in self.arcs_to_trigger(ps, proto.g.entering(ps.id)):
            c = ctx.view.get(e.key)
            if e.key in ps.called or c is None or c.state is not ContractState.PUBLISHED:
                continue
            sigs = self.gather_signatures(ps, proto, ctx, c, secrets)
            ps.called.add(e.key)
            ctx.transfer(e.key, secrets, sigs)

    def gather_signatures(self, ps, proto, ctx, c: SwapContract, secrets) -> tuple:
        signers = {ps.id: ps.keys}
        if ps.coalition is not None:
            signers.update(ps.coalition.keys)
        sigs = {p: sign_tuple(k, secrets, proto.backend) for p, k in signers.items()}
        for other in ctx.view.triggered():
            for s in other.trigger_record.signatures:
                if s.signer not in sigs and s.payload == secrets and verify_tuple_sig(
                    c.public_keys[s.signer - 1], s, proto.backend
                ):
                    sigs[s.signer] = s
        return tuple(sigs[p] for p in sorted(sigs))


STRATEGY_TYPES: dict[str, type[Strategy]] = {
    cls.name: cls
    for cls in (
        Strategy,
        SilentCrash,
        FakeHashlock,
        FakePublicKey,
        WithholdSecret,
        WithholdPublish,
        NoTrigger,
        ForwardOnlySome,
        EagerTimeout,
        RevealSecretEarly,
        EagerTrigger,
    )
}


def make_strategy(name: str, **params) -> Strategy:
    try:
        cls = STRATEGY_TYPES[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}") from None
    if "at_phase" in params and not isinstance(params["at_phase"], Phase):
        params["at_phase"] = Phase(params["at_phase"])
    return cls(**params)


def _subsets(items: Sequence, proper: bool) -> list[tuple]:
    out = []
    top = len(items) - 1 if proper else len(items)
    for r in range(1, top + 1):
        out.extend(itertools.combinations(items, r))
    return out


def deviation_catalog(
    g: SwapDigraph, leaders: LeaderSet, p: PartyId, subset_limit: int = 4
) -> list[Strategy]:
    """Every single-party deviation the sweeps try for party ``p``.

    Arc-subset parameters are enumerated exhaustively when the party has at
    most ``subset_limit`` arcs on that side, else only singletons.
    """
    role = Role.TOP_LEADER if p == leaders.top else Role.SUB_LEADER if p in leaders else Role.FOLLOWER
    out: list[Strategy] = [SilentCrash(ph) for ph in (Phase.P1, Phase.P2, Phase.P3, Phase.P4,
                                                        Phase.REGAIN)]
    if role is not Role.FOLLOWER:
        out.append(FakeHashlock())
        out.append(RevealSecretEarly())
    out.append(FakePublicKey())
    if role is Role.SUB_LEADER:
        out.append(WithholdSecret())
    leaving = [a.key for a in g.leaving(p)]
    entering = [a.key for a in g.entering(p)]
    for sub in (_subsets(leaving, False) if len(leaving) <= subset_limit else
                [(a,) for a in leaving]):
        out.append(WithholdPublish(sub))
    out.append(NoTrigger())
    for sub in (_subsets(entering, True) if len(entering) <= subset_limit else
                [(a,) for a in entering]):
        out.append(ForwardOnlySome(sub))
    out.append(EagerTimeout())
    out.append(EagerTrigger())
    return out


# -- actor glue ---------------------------------------------------------------


class PartyActor:
    def __init__(self, state: PartyState, strategy: Strategy, proto: Protocol) -> None:
        self.state = state
        self.strategy = strategy
        self.proto = proto

    def step(self, ctx: PartyContext) -> None:
        self.strategy.step(self.state, self.proto, ctx)


@dataclass
class SimResult:
    g: SwapDigraph
    proto: Protocol
    trace: EventTrace
    contracts: dict[ArcKey, SwapContract]
    strategies: dict[PartyId, Strategy]
    coalitions: tuple[frozenset[PartyId], ...]
    states: dict[PartyId, PartyState]
    latency: str
    seed: int

    @property
    def leaders(self) -> LeaderSet:
        return self.proto.leaders

    @property
    def deviators(self) -> frozenset[PartyId]:
        out = {p for p, s in self.strategies.items() if type(s) is not Strategy}
        for c in self.coalitions:
            out |= c
        return frozenset(out)

    @property
    def conforming(self) -> list[PartyId]:
        return [p for p in self.g.parties if p not in self.deviators]

    def state_of(self, arc: ArcKey) -> ContractState | None:
        c = self.contracts.get(arc)
        return None if c is None else c.state

    def triggered(self, arc: ArcKey) -> bool:
        return self.state_of(arc) is ContractState.TRIGGERED

    def describe(self) -> str:
        """Replayable label: the deviating strategies, coalitions and run knobs."""
        devs = [f"{p}:{self.strategies[p].label()}" for p in sorted(self.strategies)
                if type(self.strategies[p]) is not Strategy]
        co = ["{" + ",".join(map(str, sorted(c))) + "}" for c in self.coalitions]
        parts = [" ".join(devs) or "all-conforming"]
        if co:
            parts.append("coalition " + " ".join(co))
        parts.append(f"latency={self.latency} seed={self.seed}")
        return "; ".join(parts)


def simulation_horizon(proto: Protocol) -> int:
    return proto.refund_deadline + 2 * proto.delta


def simulate(
    g: SwapDigraph,
    strategies: dict[PartyId, Strategy] | None = None,
    coalitions: Sequence[Iterable[PartyId]] = (),
    leaders: LeaderSet | None = None,
    delta: int = 1000,
    epsilon: int = 10,
    latency: str = "max",
    seed: int = 0,
    backend: Backend | str = "test",
) -> SimResult:
    """Run one swap to quiescence (or the horizon) and return everything observed."""
    if isinstance(backend, str):
        backend = get_backend(backend)
    if not 0 < epsilon < delta:
        raise ValueError(f"need 0 < epsilon < delta, got epsilon={epsilon} delta={delta}")
    if leaders is None:
        leaders = feedback_vertex_set(g)
    proto = Protocol(g, leaders, diameter(g), delta, epsilon, backend)
    strategies = dict(strategies or {})
    for p in strategies:
        if p not in g.parties:
            raise ValueError(f"strategy assigned to unknown party {p}")
    full = {p: strategies.get(p, Strategy()) for p in g.parties}
    states = setup_parties(proto, seed)
    groups = tuple(frozenset(c) for c in coalitions)
    for members in groups:
        pool = Coalition(members)
        for m in sorted(members):
            if m not in states:
                raise ValueError(f"coalition names unknown party {m}")
            if states[m].own_secret is not None:
                pool.secrets[m] = states[m].own_secret
            pool.keys[m] = states[m].keys
            states[m].coalition = pool
    ledger = Ledger(g, backend, LatencyPolicy(latency, delta, epsilon, seed), SimClock(delta, epsilon))
    actors = {p: PartyActor(states[p], full[p], proto) for p in g.parties}
    trace = ledger.run(actors, simulation_horizon(proto), PartyContext)
    return SimResult(g, proto, trace, dict(ledger.contracts), full, groups, states, latency, seed)
