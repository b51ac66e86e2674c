"""Report figures, rendered to PNG files with the Agg backend."""
from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .checker import OutcomeClass  # noqa: E402
from .contract import ContractState  # noqa: E402
from .parties import SimResult  # noqa: E402

_META = {"Software": None}  # keeps repeated renders byte-identical


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def timeline(r: SimResult, path: Path) -> Path:
    """One row per arc: publish, trigger or refund effect times plus deadlines."""
    fig, ax = plt.subplots(figsize=(8, 0.5 * len(r.g.arcs) + 1.5))
    pub = {rec.target: rec.at for rec in r.trace.of("publish") if rec.result == "Published"}
    labels = []
    for row, a in enumerate(r.g.arcs):
        label = f"{r.g.name(a.tail)}->{r.g.name(a.head)}"
        labels.append(label)
        key = f"{a.tail}->{a.head}"
        c = r.contracts.get(a.key)
        if key in pub:
            end = pub[key]
            if c.state is ContractState.TRIGGERED:
                end = c.trigger_record.time
            elif c.state is ContractState.REFUNDED:
                end = c.refund_time
            colour = {"Triggered": "tab:green", "Refunded": "tab:orange"}.get(c.state.value, "tab:red")
            ax.plot([pub[key], end], [row, row], color=colour, linewidth=4)
            ax.plot([pub[key]], [row], "k|", markersize=12)
    ax.axvline(r.proto.refund_deadline, color="grey", linestyle="--", label="refund deadline")
    ax.axvline(r.proto.secret_deadline, color="grey", linestyle=":", label="secret deadline")
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("tick")
    ax.set_title("contract lifetimes (green triggered, orange refunded, red open)")
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def space_scaling(rows: Sequence[tuple[int, int]], c1: int, c2: int, path: Path) -> Path:
    """Per-contract bits against party count with the fitted line."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = [n for n, _ in rows]
    ax.plot(ns, [b for _, b in rows], "o", label="measured")
    ax.plot(ns, [c1 + c2 * n for n in ns], "-", label=f"{c1} + {c2}·n")
    ax.set_xlabel("parties n (ring)")
    ax.set_ylabel("bits per contract")
    ax.legend()
    return _save(fig, path)


def completion_vs_bound(rows: Sequence[tuple[str, int | None, int]], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(rows)), 4))
    xs = range(len(rows))
    ax.bar([x - 0.2 for x in xs], [c or 0 for _, c, _ in rows], width=0.4, label="all-conforming completion")
    ax.bar([x + 0.2 for x in xs], [b for _, _, b in rows], width=0.4, label="bound")
    ax.set_xticks(list(xs), [sid for sid, _, _ in rows], rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("ticks")
    ax.legend(fontsize=8)
    return _save(fig, path)


def outcome_classes(counts: dict[str, Counter], path: Path) -> Path:
    """Stacked bars of conforming-party outcome classes per scenario."""
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(counts)), 4))
    ids = list(counts)
    bottom = [0] * len(ids)
    for cls in OutcomeClass:
        vals = [counts[i].get(cls.value, 0) for i in ids]
        ax.bar(range(len(ids)), vals, bottom=bottom, label=cls.value)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_xticks(range(len(ids)), ids, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("conforming party outcomes")
    ax.legend(fontsize=7)
    return _save(fig, path)
