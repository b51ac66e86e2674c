"""Space, local-time and completion-time measurements for a finished run,
plus the analytic order-of-growth comparison figures."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .contract import ContractState, SwapContract
from .graph import SwapDigraph
from .parties import SimResult


@dataclass(frozen=True)
class ComplexityReport:
    n: int
    arcs: int
    k: int
    published_bits: dict[tuple[int, int], int]  # as stored when published
    final_bits: dict[tuple[int, int], int]  # including trigger records
    total_space_bits: int
    max_hash_checks: int
    max_sig_checks: int
    max_verify_ops: int
    completion_ticks: int | None
    delta: int
    baselines: dict[str, int] = field(default_factory=dict)

    @property
    def completion_delta_units(self) -> Fraction | None:
        if self.completion_ticks is None:
            return None
        return Fraction(self.completion_ticks, self.delta)

    def row(self, graph_id: str) -> dict:
        return {
            "graph": graph_id,
            "n": self.n,
            "arcs": self.arcs,
            "k": self.k,
            "space_bits": self.total_space_bits,
            "max_hash_checks": self.max_hash_checks,
            "max_sig_checks": self.max_sig_checks,
            "max_ops": self.max_verify_ops,
            "completion_ticks": "" if self.completion_ticks is None else self.completion_ticks,
        }


def measure(r: SimResult, contracts: dict[tuple[int, int], SwapContract] | None = None) -> ComplexityReport:
    """Measure one quiescent run.

    Space is the published size of every contract on every chain. Verify
    ops come from the successful transfer evaluations recorded in the trace.
    Completion is the last trigger effect time minus the start time, or
    None when nothing triggered.
    """
    if not r.trace.quiescent:
        raise ValueError("trace is not quiescent (horizon reached)")
    contracts = r.contracts if contracts is None else contracts
    published = {}
    for rec in r.trace.of("publish"):
        if rec.result == "Published":
            a, b = rec.target.split("->")
            published[(int(a), int(b))] = dict(rec.detail)["bits"]
    final = {arc: c.storage_bits() for arc, c in sorted(contracts.items())}
    hashes = sigs = ops = 0
    for rec in r.trace.of("transfer"):
        d = dict(rec.detail)
        if d.get("ok"):
            hashes = max(hashes, d["hash_checks"])
            sigs = max(sigs, d["sig_checks"])
            ops = max(ops, d["hash_checks"] + d["sig_checks"])
    times = [c.trigger_record.time for c in contracts.values()
             if c.state is ContractState.TRIGGERED]
    completion = max(times) - r.proto.start if times else None
    return ComplexityReport(
        n=r.g.n,
        arcs=len(r.g.arcs),
        k=r.leaders.k,
        published_bits=published,
        final_bits=final,
        total_space_bits=sum(published.values()),
        max_hash_checks=hashes,
        max_sig_checks=sigs,
        max_verify_ops=ops,
        completion_ticks=completion,
        delta=r.proto.delta,
        baselines=baselines(r.g, r.leaders.k),
    )


def completion_bound(r: SimResult) -> int:
    p = r.proto
    return 2 * (p.diam + 1) * p.delta + 2 * p.epsilon


def baselines(g: SwapDigraph, k: int) -> dict[str, int]:
    """Order-of-growth figures instantiated for ``g``; not measurements.

    ``herlihy_space`` |A|², ``herlihy_local`` |V|·|L|, ``ours_space``
    |A|·|V|, ``ours_local`` |V|.
    """
    a, v = len(g.arcs), g.n
    return {
        "herlihy_space": a * a,
        "ours_space": a * v,
        "herlihy_local": v * k,
        "ours_local": v,
    }


def ratio_table(g: SwapDigraph, k: int) -> dict[str, Fraction]:
    b = baselines(g, k)
    return {
        "space": Fraction(b["ours_space"], b["herlihy_space"]),
        "local": Fraction(b["ours_local"], b["herlihy_local"]),
    }
