"""The per-arc swap contract.

A contract stores the leaders' hashlocks, every party's public key, the two
endpoints of its arc and the integers ``start``, ``diam``, ``n`` together
with the time unit parameters. It stores no topology. Time is integer ticks.

Deadlines (both strict):

* transfer with ``x`` distinct valid signers: ``now < start + (diam + x + 1)·Δ + 2ε``
* timeout by the owner: ``now > start + (diam + n + 1)·Δ + 2ε``
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Sequence

from .crypto import Backend, Hashlock, Secret, TupleSignature, canonical_payload

STATE_CODES = {"PUBLISHED": 0, "TRIGGERED": 1, "REFUNDED": 2}


class ContractState(enum.Enum):
    PUBLISHED = "Published"
    TRIGGERED = "Triggered"
    REFUNDED = "Refunded"


class Failure(enum.Enum):
    CALLER_NOT_COUNTERPARTY = "CallerNotCounterparty"
    CALLER_NOT_OWNER = "CallerNotOwner"
    BAD_SECRET = "BadSecret"
    NO_VALID_SIGNATURE = "NoValidSignature"
    DEADLINE_PASSED = "DeadlinePassed"
    TOO_EARLY = "TooEarly"
    INVALID_STATE = "InvalidState"


@dataclass(frozen=True)
class TriggerCall:
    caller: int
    secrets: tuple[Secret, ...]
    signatures: tuple[TupleSignature, ...]
    now: int


@dataclass(frozen=True)
class TriggerRecord:
    secrets: tuple[Secret, ...]
    signatures: tuple[TupleSignature, ...]
    time: int


@dataclass(frozen=True)
class TransferResult:
    ok: bool
    failure: Failure | None = None
    index: int | None = None  # 1-based secret index for BadSecret
    x: int = 0
    hash_checks: int = 0
    sig_checks: int = 0

    def __str__(self) -> str:
        if self.ok:
            return f"Triggered(x={self.x})"
        if self.failure is Failure.BAD_SECRET:
            return f"BadSecret({self.index})"
        if self.failure is Failure.DEADLINE_PASSED:
            return f"DeadlinePassed({self.x})"
        return self.failure.value


@dataclass(frozen=True)
class RefundResult:
    ok: bool
    failure: Failure | None = None

    def __str__(self) -> str:
        return "Refunded" if self.ok else self.failure.value


@dataclass
class SwapContract:
    party: int
    counterparty: int
    chain: str
    hashlocks: tuple[Hashlock, ...]
    public_keys: tuple[bytes, ...]
    start: int
    diam: int
    n: int
    delta: int
    epsilon: int
    state: ContractState = ContractState.PUBLISHED
    trigger_record: TriggerRecord | None = None
    refund_time: int | None = field(default=None, compare=False)

    @property
    def arc(self) -> tuple[int, int]:
        return (self.party, self.counterparty)

    def transfer_deadline(self, x: int) -> int:
        return self.start + (self.diam + x + 1) * self.delta + 2 * self.epsilon

    @property
    def refund_deadline(self) -> int:
        return self.start + (self.diam + self.n + 1) * self.delta + 2 * self.epsilon

    def terms(self) -> tuple:
        """Everything a party compares when checking consistency."""
        return (
            self.party,
            self.counterparty,
            self.hashlocks,
            self.public_keys,
            self.start,
            self.diam,
            self.n,
            self.delta,
            self.epsilon,
        )

    def transfer(self, call: TriggerCall, backend: Backend) -> TransferResult:
        if self.state is not ContractState.PUBLISHED:
            return TransferResult(False, Failure.INVALID_STATE)
        if call.caller != self.counterparty:
            return TransferResult(False, Failure.CALLER_NOT_COUNTERPARTY)
        hash_checks = 0
        if len(call.secrets) != len(self.hashlocks):
            return TransferResult(False, Failure.BAD_SECRET, index=len(call.secrets) + 1)
        for i, (s, h) in enumerate(zip(call.secrets, self.hashlocks), start=1):
            hash_checks += 1
            if backend.hash(s.value) != h.digest:
                return TransferResult(False, Failure.BAD_SECRET, index=i, hash_checks=hash_checks)
        # one candidate per signer id (first occurrence), invalid ones ignored
        message = canonical_payload(call.secrets)
        accepted: list[TupleSignature] = []
        seen: set[int] = set()
        sig_checks = 0
        for sig in call.signatures:
            if sig.signer in seen or not 1 <= sig.signer <= self.n:
                continue
            seen.add(sig.signer)
            if sig.payload != call.secrets:
                continue
            sig_checks += 1
            if backend.verify(self.public_keys[sig.signer - 1], message, sig.sig_bytes):
                accepted.append(sig)
        x = len(accepted)
        if x == 0:
            return TransferResult(
                False, Failure.NO_VALID_SIGNATURE, hash_checks=hash_checks, sig_checks=sig_checks
            )
        if not call.now < self.transfer_deadline(x):
            return TransferResult(
                False, Failure.DEADLINE_PASSED, x=x, hash_checks=hash_checks, sig_checks=sig_checks
            )
        self.state = ContractState.TRIGGERED
        self.trigger_record = TriggerRecord(tuple(call.secrets), tuple(accepted), call.now)
        return TransferResult(True, x=x, hash_checks=hash_checks, sig_checks=sig_checks)

    def timeout(self, caller: int, now: int) -> RefundResult:
        if self.state is not ContractState.PUBLISHED:
            return RefundResult(False, Failure.INVALID_STATE)
        if caller != self.party:
            return RefundResult(False, Failure.CALLER_NOT_OWNER)
        if not now > self.refund_deadline:
            return RefundResult(False, Failure.TOO_EARLY)
        self.state = ContractState.REFUNDED
        self.refund_time = now
        return RefundResult(True)

    # -- serialization ------------------------------------------------------

    def serialize(self) -> bytes:
        """Canonical big-endian encoding of the stored fields."""
        out = [_lp_list([h.digest for h in self.hashlocks]), _lp_list(list(self.public_keys))]
        out.append(struct.pack(">IIQIIQQ", self.party, self.counterparty, self.start,
                               self.diam, self.n, self.delta, self.epsilon))
        out.append(struct.pack(">B", STATE_CODES[self.state.name]))
        rec = self.trigger_record
        if rec is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            out.append(_lp_list([s.value for s in rec.secrets]))
            out.append(struct.pack(">I", len(rec.signatures)))
            for sig in rec.signatures:
                out.append(struct.pack(">I", sig.signer))
                out.append(_lp(sig.sig_bytes))
            out.append(struct.pack(">Q", rec.time))
        return b"".join(out)

    def storage_bits(self) -> int:
        return 8 * len(self.serialize())


def _lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def _lp_list(items: Sequence[bytes]) -> bytes:
    return struct.pack(">I", len(items)) + b"".join(_lp(b) for b in items)
