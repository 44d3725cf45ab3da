"""Aggregate a trace into latency, traffic and idleness figures."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

from ..simnet import Trace

METRICS_SCHEMA = "wavelace-metrics/1"
MESSAGE_KINDS = ("ordinary", "nack", "inform", "coronate")


@dataclass(frozen=True)
class BlockLatency:
    instance: str
    epoch: int
    wave: int
    creator: str
    issued: int
    finalised: int
    latency: Fraction  # in units of the actual network delay bound


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    delta_actual: int
    latencies: list[BlockLatency] = field(default_factory=list)
    messages: dict[str, int] = field(default_factory=dict)
    transactions: int = 0
    waves: int = 0
    quiescent_intervals: list[tuple[int, int]] = field(default_factory=list)
    epoch_transitions: list[dict[str, Any]] = field(default_factory=list)
    horizon: int = 0

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())

    @property
    def messages_per_tx(self) -> Optional[Fraction]:
        if not self.transactions:
            return None
        return Fraction(self.total_messages, self.transactions)

    @property
    def max_latency(self) -> Optional[Fraction]:
        return max((x.latency for x in self.latencies), default=None)

    @property
    def idle_tail(self) -> int:
        if self.quiescent_intervals and self.quiescent_intervals[-1][1] == self.horizon:
            s, e = self.quiescent_intervals[-1]
            return e - s
        return 0

    def to_dict(self) -> dict[str, Any]:
        mpt = self.messages_per_tx
        return {
            "schema": METRICS_SCHEMA,
            "scenario": self.scenario,
            "seed": self.seed,
            "delta_actual": self.delta_actual,
            "horizon": self.horizon,
            "latency": {
                "blocks": [
                    {
                        "instance": x.instance,
                        "epoch": x.epoch,
                        "wave": x.wave,
                        "creator": x.creator,
                        "issued": x.issued,
                        "finalised": x.finalised,
                        "latency": str(x.latency),
                    }
                    for x in self.latencies
                ],
                "max": None if self.max_latency is None else str(self.max_latency),
            },
            "messages": dict(self.messages),
            "total_messages": self.total_messages,
            "transactions": self.transactions,
            "messages_per_tx": None if mpt is None else str(mpt),
            "messages_per_tx_float": None if mpt is None else round(float(mpt), 6),
            "waves": self.waves,
            "quiescent_intervals": [list(iv) for iv in self.quiescent_intervals],
            "idle_tail": self.idle_tail,
            "epoch_transitions": self.epoch_transitions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render_text(self) -> str:
        lines = [f"scenario {self.scenario} seed {self.seed} horizon {self.horizon}"]
        ml = self.max_latency
        lines.append(
            f"  finalised leader blocks: {len(self.latencies)}"
            + ("" if ml is None else f", max latency {ml} x delta")
        )
        counts = ", ".join(f"{k} {self.messages.get(k, 0)}" for k in MESSAGE_KINDS)
        lines.append(f"  messages: {counts} (total {self.total_messages})")
        mpt = self.messages_per_tx
        lines.append(
            f"  transactions ordered: {self.transactions}"
            + ("" if mpt is None else f", messages per tx {float(mpt):.3f}")
        )
        lines.append(f"  final waves: {self.waves}, idle tail: {self.idle_tail} ticks")
        for t in self.epoch_transitions:
            lines.append(
                f"  epoch {t['epoch']} of {t['instance']}: coronate at {t['first_coronate']}, "
                f"started {t['first_start']}..{t['last_start']} by {t['starters']} agents"
            )
        return "\n".join(lines) + "\n"


def _busy_intervals(trace: Trace) -> list[tuple[int, int]]:
    """Intervals during which some message is in flight, merged."""
    pending: dict[tuple, list[int]] = {}
    spans: list[tuple[int, int]] = []
    for t, iid, a, kind, f in trace.records:
        if kind == "send":
            pending.setdefault((iid, a, f["to"], f["block"]), []).append(t)
        elif kind == "deliver":
            q = pending.get((iid, f["frm"], a, f["block"]))
            if q:
                spans.append((q.pop(0), t))
    for q in pending.values():
        for s in q:
            spans.append((s, trace.scenario.horizon))
    spans.sort()
    merged: list[tuple[int, int]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            if e > merged[-1][1]:
                merged[-1] = (merged[-1][0], e)
        else:
            merged.append((s, e))
    return merged


def emit_metrics(trace: Trace) -> MetricsReport:
    sc = trace.scenario
    dact = sc.network.delta_actual
    rep = MetricsReport(sc.name, trace.seed, dact, horizon=sc.horizon)
    rep.messages = {k: 0 for k in MESSAGE_KINDS}
    issued: dict[bytes, tuple[int, str]] = {}
    first_final: dict[bytes, tuple[int, str, int, int]] = {}
    epoch_at: dict[tuple[str, str], int] = {}
    final_waves: set[tuple[str, int, int]] = set()
    ordered: set[tuple[str, bytes]] = set()
    transitions: dict[tuple[str, int], dict[str, Any]] = {}

    for t, iid, a, kind, f in trace.records:
        key = (iid, a)
        if kind == "send":
            rep.messages[f["kind"]] = rep.messages.get(f["kind"], 0) + 1
        elif kind == "epoch-start":
            epoch_at[key] = f["index"]
            if f["index"] > 1:
                tr = transitions.setdefault((iid, f["index"]), {"starts": [], "coronates": []})
                tr["starts"].append(t)
        elif kind == "coronate":
            tr = transitions.setdefault((iid, f["index"]), {"starts": [], "coronates": []})
            tr["coronates"].append(t)
        elif kind == "issue":
            issued.setdefault(f["block"], (t, a))
        elif kind == "final" and key in trace.correct:
            ep = epoch_at.get(key, 1)
            if f["block"] not in first_final:
                first_final[f["block"]] = (t, iid, f["wave"], ep)
            final_waves.add((iid, ep, f["wave"]))
        elif kind == "output" and key in trace.correct:
            ordered.add((iid, f["tx"]))

    for blk, (tf, iid, wave, ep) in sorted(first_final.items(), key=lambda x: (x[1][1], x[1][3], x[1][2])):
        if blk not in issued:
            continue
        ti, creator = issued[blk]
        if (iid, creator) not in trace.correct:
            continue
        rep.latencies.append(
            BlockLatency(iid, ep, wave, creator, ti, tf, Fraction(tf - ti, dact))
        )
    rep.transactions = len(ordered)
    rep.waves = len(final_waves)

    busy = _busy_intervals(trace)
    idle: list[tuple[int, int]] = []
    cursor = 0
    for s, e in busy:
        if s > cursor:
            idle.append((cursor, s))
        cursor = max(cursor, e)
    if cursor < sc.horizon:
        idle.append((cursor, sc.horizon))
    rep.quiescent_intervals = idle

    for (iid, idx), tr in sorted(transitions.items()):
        rep.epoch_transitions.append(
            {
                "instance": iid,
                "epoch": idx,
                "first_coronate": min(tr["coronates"]) if tr["coronates"] else None,
                "first_start": min(tr["starts"]) if tr["starts"] else None,
                "last_start": max(tr["starts"]) if tr["starts"] else None,
                "starters": len(tr["starts"]),
            }
        )
    return rep
