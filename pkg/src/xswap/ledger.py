"""Discrete-event simulation of the chains and the off-chain channel.

Every action is submitted at some tick and takes effect ``latency`` ticks
later, atomically. On-chain latency is in ``[1, Δ]``; off-chain delivery is
in ``[1, ε]``. Effects become visible to every party at their effect tick
(act-and-detect is folded into one latency).

Events at the same tick are applied in ``(kind rank, issuing party,
submission sequence)`` order; after all effects of a tick are applied every
actor is stepped once, in party order, against the resulting ledger.
"""
from __future__ import annotations

import enum
import heapq
import json
import random
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping, Protocol

from .contract import ContractState, SwapContract, TriggerCall
from .crypto import Backend, Secret, TupleSignature
from .graph import SwapDigraph

ChainId = str
ArcKey = tuple[int, int]


class EventKind(enum.IntEnum):
    # value is the tie-break rank at equal timestamps
    PUBLISH_CONTRACT = 0
    CALL_TRANSFER = 1
    CALL_TIMEOUT = 2
    SEND_MESSAGE = 3
    DELIVER_OBSERVATION = 4


ACTION_NAMES = {
    EventKind.PUBLISH_CONTRACT: "publish",
    EventKind.CALL_TRANSFER: "transfer",
    EventKind.CALL_TIMEOUT: "timeout",
    EventKind.SEND_MESSAGE: "message",
}


@dataclass(order=True)
class SimEvent:
    at: int
    rank: int
    issuer: int
    seq: int
    kind: EventKind = field(compare=False)
    issued_at: int = field(compare=False)
    payload: Any = field(compare=False, default=None)


@dataclass
class SimClock:
    delta: int
    epsilon: int
    now: int = 0

    def advance(self, t: int) -> None:
        if t < self.now:
            raise RuntimeError(f"clock moved backwards: {t} < {self.now}")
        self.now = t


class LatencyPolicy:
    """``max`` (Δ and ε), ``unit`` (1 tick) or ``seeded`` (uniform, seeded)."""

    NAMES = ("max", "unit", "seeded")

    def __init__(self, name: str, delta: int, epsilon: int, seed: int = 0) -> None:
        if name not in self.NAMES:
            raise ValueError(f"unknown latency policy {name!r}")
        self.name = name
        self.delta = delta
        self.epsilon = epsilon
        self._rng = random.Random(seed)

    def onchain(self) -> int:
        if self.name == "max":
            return self.delta
        if self.name == "unit":
            return 1
        return self._rng.randint(1, self.delta)

    def offchain(self) -> int:
        if self.name == "max":
            return self.epsilon
        if self.name == "unit":
            return 1
        return self._rng.randint(1, self.epsilon)


@dataclass(frozen=True)
class LedgerView:
    now: int
    contracts: Mapping[ArcKey, SwapContract]

    def get(self, arc: ArcKey) -> SwapContract | None:
        return self.contracts.get(arc)

    def triggered(self) -> list[SwapContract]:
        return [c for _, c in sorted(self.contracts.items()) if c.state is ContractState.TRIGGERED]


@dataclass(frozen=True)
class TraceRecord:
    at: int
    issued_at: int
    actor: int
    action: str
    target: str
    result: str
    detail: tuple[tuple[str, Any], ...] = ()

    def as_dict(self) -> dict:
        d = {
            "at": self.at,
            "issued_at": self.issued_at,
            "actor": self.actor,
            "action": self.action,
            "target": self.target,
            "result": self.result,
        }
        d.update(self.detail)
        return d

    def to_line(self) -> str:
        return json.dumps(self.as_dict(), separators=(",", ":"))


@dataclass
class EventTrace:
    records: list[TraceRecord] = field(default_factory=list)
    horizon: int = 0
    horizon_reached: bool = False

    @property
    def quiescent(self) -> bool:
        return not self.horizon_reached

    def to_jsonl(self) -> str:
        return "".join(r.to_line() + "\n" for r in self.records)

    def of(self, action: str) -> list[TraceRecord]:
        return [r for r in self.records if r.action == action]


class Actor(Protocol):
    def step(self, ctx: "PartyContext") -> None: ...


def arc_id(arc: ArcKey) -> str:
    return f"{arc[0]}->{arc[1]}"


class Ledger:
    """All chains, the off-chain channel and the event queue."""

    def __init__(
        self, g: SwapDigraph, backend: Backend, latency: LatencyPolicy, clock: SimClock
    ) -> None:
        self.g = g
        self.backend = backend
        self.latency = latency
        self.clock = clock
        self.contracts: dict[ArcKey, SwapContract] = {}
        self.inboxes: dict[int, list[tuple[int, Any]]] = {p: [] for p in g.parties}
        self.trace = EventTrace()
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._wakes: set[tuple[int, int]] = set()
        self._arcs = {a.key: a for a in g.arcs}

    # -- submission -------------------------------------------------------

    def _push(self, kind: EventKind, issuer: int, issued_at: int, at: int, payload) -> SimEvent:
        if issued_at < self.clock.now:
            raise ValueError(f"action issued in the past ({issued_at} < {self.clock.now})")
        self._seq += 1
        ev = SimEvent(at, int(kind), issuer, self._seq, kind, issued_at, payload)
        heapq.heappush(self._queue, ev)
        return ev

    def submit(self, kind: EventKind, issuer: int, payload, issued_at: int) -> SimEvent:
        """Schedule an on-chain action; returns the event carrying its effect time."""
        if kind is EventKind.PUBLISH_CONTRACT:
            c = payload
            if not isinstance(c, SwapContract):
                raise ValueError("publish needs a SwapContract")
            if c.arc not in self._arcs:
                raise ValueError(f"no arc {arc_id(c.arc)} in the swap")
            if c.party != issuer:
                raise ValueError(f"party {issuer} cannot publish on arc {arc_id(c.arc)}")
        elif kind is EventKind.CALL_TRANSFER:
            arc, secrets, sigs = payload
            if arc not in self._arcs:
                raise ValueError(f"no arc {arc_id(arc)} in the swap")
            if not all(isinstance(s, Secret) for s in secrets):
                raise ValueError("transfer secrets must be Secret values")
            if not all(isinstance(s, TupleSignature) for s in sigs):
                raise ValueError("transfer signatures must be TupleSignature values")
        elif kind is EventKind.CALL_TIMEOUT:
            if payload not in self._arcs:
                raise ValueError(f"no arc {arc_id(payload)} in the swap")
        else:
            raise ValueError(f"{kind.name} is not an on-chain action")
        return self._push(kind, issuer, issued_at, issued_at + self.latency.onchain(), payload)

    def send_offchain(self, frm: int, to: int, payload, now: int) -> SimEvent:
        if to not in self.inboxes:
            raise ValueError(f"unknown recipient {to}")
        return self._push(
            EventKind.SEND_MESSAGE, frm, now, now + self.latency.offchain(), (to, payload)
        )

    def wake(self, party: int, at: int) -> None:
        if at >= self.clock.now and (party, at) not in self._wakes:
            self._wakes.add((party, at))
            self._push(EventKind.DELIVER_OBSERVATION, party, self.clock.now, at, None)

    def observe(self, p: int, now: int | None = None) -> LedgerView:
        """Public view: every effect with effect time <= now."""
        if now is not None and now != self.clock.now:
            raise ValueError("the ledger can only be observed at the current tick")
        return LedgerView(self.clock.now, MappingProxyType(self.contracts))

    # -- application ------------------------------------------------------

    def _record(self, ev: SimEvent, target: str, result: str, **detail) -> None:
        self.trace.records.append(
            TraceRecord(ev.at, ev.issued_at, ev.issuer, ACTION_NAMES[ev.kind], target, result,
                        tuple(detail.items()))
        )

    def apply(self, ev: SimEvent) -> None:
        now = ev.at
        if ev.kind is EventKind.PUBLISH_CONTRACT:
            c: SwapContract = ev.payload
            if c.arc in self.contracts:
                self._record(ev, arc_id(c.arc), "DuplicateContract")
                return
            self.contracts[c.arc] = c
            self._record(ev, arc_id(c.arc), "Published", bits=c.storage_bits())
        elif ev.kind is EventKind.CALL_TRANSFER:
            arc, secrets, sigs = ev.payload
            c = self.contracts.get(arc)
            if c is None:
                self._record(ev, arc_id(arc), "NoContract")
                return
            res = c.transfer(TriggerCall(ev.issuer, tuple(secrets), tuple(sigs), now), self.backend)
            self._record(ev, arc_id(arc), str(res), ok=res.ok, x=res.x,
                         hash_checks=res.hash_checks, sig_checks=res.sig_checks)
        elif ev.kind is EventKind.CALL_TIMEOUT:
            c = self.contracts.get(ev.payload)
            if c is None:
                self._record(ev, arc_id(ev.payload), "NoContract")
                return
            res = c.timeout(ev.issuer, now)
            self._record(ev, arc_id(ev.payload), str(res), ok=res.ok)
        elif ev.kind is EventKind.SEND_MESSAGE:
            to, payload = ev.payload
            self.inboxes[to].append((ev.issuer, payload))
            self._record(ev, str(to), "Delivered", kind=payload[0])
        # DELIVER_OBSERVATION only makes the actor step at this tick

    def run(self, actors: Mapping[int, Actor], horizon: int,
            make_ctx: Callable[["Ledger", int], "PartyContext"]) -> EventTrace:
        """Event loop to quiescence or ``horizon``."""
        self.trace.horizon = horizon
        self._step_all(actors, make_ctx)
        while self._queue:
            t = self._queue[0].at
            if t > horizon:
                self.trace.horizon_reached = True
                break
            self.clock.advance(t)
            while self._queue and self._queue[0].at == t:
                self.apply(heapq.heappop(self._queue))
            self._step_all(actors, make_ctx)
        return self.trace

    def _step_all(self, actors, make_ctx) -> None:
        for p in sorted(actors):
            actors[p].step(make_ctx(self, p))


class PartyContext:
    """What an actor may do at the current tick."""

    def __init__(self, ledger: Ledger, party: int) -> None:
        self._ledger = ledger
        self.party = party
        self.now = ledger.clock.now
        self.view = ledger.observe(party, self.now)

    def take_inbox(self) -> list[tuple[int, Any]]:
        box = self._ledger.inboxes[self.party]
        msgs, box[:] = list(box), []
        return msgs

    def publish(self, contract: SwapContract) -> SimEvent:
        return self._ledger.submit(EventKind.PUBLISH_CONTRACT, self.party, contract, self.now)

    def transfer(self, arc: ArcKey, secrets, sigs) -> SimEvent:
        return self._ledger.submit(
            EventKind.CALL_TRANSFER, self.party, (arc, tuple(secrets), tuple(sigs)), self.now
        )

    def timeout(self, arc: ArcKey) -> SimEvent:
        return self._ledger.submit(EventKind.CALL_TIMEOUT, self.party, arc, self.now)

    def send(self, to: int, payload) -> SimEvent:
        return self._ledger.send_offchain(self.party, to, payload, self.now)

    def wake_at(self, t: int) -> None:
        self._ledger.wake(self.party, t)
