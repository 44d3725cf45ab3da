"""Deterministic discrete-event simulation of agents over a partially synchronous network.

Time is an integer tick count.  Events are ordered by (time, enqueue counter),
so a (scenario, seed) pair always produces the same trace.  Before GST a
message delay is sampled freely but clamped so the message arrives by
``gst + delta_actual``; from GST on, delays lie in ``[1, delta_actual]``.

Adversaries are filters over the outgoing messages of an otherwise honest
engine: equivocation, partial dissemination, silence and a slow leader.
Outages model a correct agent that is unreachable for a while: events aimed
at it are held until the outage ends, and ordinary blocks may be held longer.
"""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Iterator, Optional

from .blocklace import (
    DEFAULT_SIGNER,
    AgentId,
    Block,
    BlockStore,
    Constitution,
    PayloadTag,
    Transactions,
    make_block,
    round_in_wave,
    wave_of,
)
from .engine import Agent, Message, OutputKind
from .governance import AmendmentDecision, Vote, found_instance
from .kernels import bit_list

TRACE_FORMAT = "wavelace-trace"
TRACE_VERSION = 1


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class NetworkModel:
    gst: int = 0
    delta_actual: int = 1
    pre_gst_max_delay: int = 1

    def delay(self, rng: random.Random, now: int) -> int:
        if now >= self.gst:
            return rng.randint(1, self.delta_actual)
        d = rng.randint(1, max(1, self.pre_gst_max_delay))
        latest = self.gst + self.delta_actual
        return min(d, latest - now)


class Behavior(str, Enum):
    EQUIVOCATE = "equivocate"
    PARTIAL = "partial-disseminate"
    SILENT = "silent"
    SLOW_LEADER = "slow-leader"


@dataclass(frozen=True)
class AdversarySpec:
    agent: AgentId
    behavior: Behavior
    recipients: tuple[AgentId, ...] = ()  # equivocation group A, or dissemination subset
    start: int = 0
    extra_delay: int = 0


@dataclass(frozen=True)
class Outage:
    agent: AgentId
    start: int
    end: int
    ordinary_extra: int = 0


@dataclass
class InstanceSpec:
    instance_id: str
    constitution: Constitution
    extra_agents: tuple[AgentId, ...] = ()
    workload: list[tuple[int, AgentId, bytes]] = field(default_factory=list)
    votes: list[tuple[int, AgentId, Vote]] = field(default_factory=list)
    deadlines: list[int] = field(default_factory=list)
    adversaries: list[AdversarySpec] = field(default_factory=list)

    def agents(self) -> list[AgentId]:
        names = set(self.constitution.participants) | set(self.extra_agents)
        names |= {a for _, a, _ in self.workload}
        names |= {h for _, h, _ in self.votes}
        return sorted(names)

    def faulty(self) -> set[AgentId]:
        return {a.agent for a in self.adversaries}


@dataclass(frozen=True)
class Expectations:
    good_case: bool = False
    liveness: bool = False
    amendment: bool = False
    quiescent: bool = False


@dataclass
class Scenario:
    name: str
    instances: list[InstanceSpec]
    network: NetworkModel
    horizon: int
    outages: list[Outage] = field(default_factory=list)
    expect: Expectations = field(default_factory=Expectations)


# ---------------------------------------------------------------- trace


def _jsonable(v: Any) -> Any:
    if isinstance(v, bytes):
        return v.hex()
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Enum):
        return v.value
    return v


@dataclass
class Trace:
    scenario: Scenario
    seed: int
    records: list[tuple[int, str, AgentId, str, dict]] = field(default_factory=list)
    agents: dict[tuple[str, AgentId], Agent] = field(default_factory=dict)
    correct: set[tuple[str, AgentId]] = field(default_factory=set)
    inputs: dict[tuple[str, AgentId], list[bytes]] = field(default_factory=dict)
    stores: dict[str, BlockStore] = field(default_factory=dict)
    founding: dict[str, AmendmentDecision] = field(default_factory=dict)
    in_flight_at_horizon: int = 0

    def header(self, instance: Optional[str] = None) -> dict:
        h = {"format": TRACE_FORMAT, "version": TRACE_VERSION, "seed": self.seed}
        if instance is None:
            h["scenario"] = self.scenario.name
        else:
            h["instance"] = instance
        return h

    def lines(self, instance: Optional[str] = None) -> Iterator[str]:
        yield json.dumps(self.header(instance), sort_keys=True)
        n = 0
        for t, inst, agent, kind, fields in self.records:
            if instance is not None and inst != instance:
                continue
            rec = {"n": n, "t": t, "i": inst, "a": agent, "ev": kind}
            for k, v in fields.items():
                rec[k] = _jsonable(v)
            n += 1
            yield json.dumps(rec, sort_keys=True)

    def text(self, instance: Optional[str] = None) -> str:
        return "\n".join(self.lines(instance)) + "\n"

    def export(self, path: str, instance: Optional[str] = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.text(instance))

    def outputs(self, instance: str, agent: AgentId) -> list:
        return self.agents[(instance, agent)].state.output

    def events(self, kind: str, instance: Optional[str] = None) -> list[tuple[int, str, AgentId, str, dict]]:
        return [r for r in self.records if r[3] == kind and (instance is None or r[1] == instance)]


# ---------------------------------------------------------------- adversaries


@dataclass
class AdversaryContext:
    agent: Agent
    now: int
    spec: AdversarySpec
    constitution: Optional[Constitution]


def adversary_step(spec: AdversarySpec, ctx: AdversaryContext, messages: list[Message]) -> list[tuple[int, Message]]:
    """Rewrite the honest outbox of a faulty agent; returns (extra delay, message) pairs."""
    if ctx.now < spec.start:
        return [(0, m) for m in messages]
    if spec.behavior is Behavior.SILENT:
        return []
    out: list[tuple[int, Message]] = []
    own = spec.agent
    if spec.behavior is Behavior.PARTIAL:
        allowed = set(spec.recipients)
        for m in messages:
            if m.block.creator == own and m.block.is_ordinary and m.recipient not in allowed:
                continue
            out.append((0, m))
        return out
    if spec.behavior is Behavior.EQUIVOCATE:
        group = set(spec.recipients)
        twins: dict[bytes, Block] = {}
        for m in messages:
            b = m.block
            if b.creator == own and b.is_ordinary and m.recipient not in group:
                twin = twins.get(b.digest)
                if twin is None:
                    twin = make_block(
                        own,
                        Transactions((b"equivocation:" + b.digest.hex().encode(),)),
                        b.refs,
                        b.epoch,
                        ctx.agent.signer,
                    )
                    twins[b.digest] = twin
                out.append((0, Message(m.sender, m.recipient, twin)))
            else:
                out.append((0, m))
        return out
    if spec.behavior is Behavior.SLOW_LEADER:
        c = ctx.constitution
        for m in messages:
            b = m.block
            extra = 0
            if b.creator == own and b.is_ordinary and c is not None:
                d = ctx.agent.store.depth[ctx.agent.store.index[b.digest]] if b.digest in ctx.agent.store.index else 0
                if d > 0 and round_in_wave(d) == 1 and c.leader(wave_of(d)) == own:
                    extra = spec.extra_delay
            out.append((extra, m))
        return out
    return [(0, m) for m in messages]


# ---------------------------------------------------------------- simulator


_DELIVER, _TIMER, _INPUT, _VOTE, _DEADLINE = range(5)


def message_kind(block: Block) -> str:
    tag = block.payload.tag
    if tag is PayloadTag.NACK:
        return "nack"
    if tag is PayloadTag.INFORM:
        return "inform"
    if tag is PayloadTag.CORONATE:
        return "coronate"
    return "ordinary"


class Simulator:
    def __init__(self, scenario: Scenario, seed: int) -> None:
        self.scenario = scenario
        self.seed = seed
        self.network = scenario.network
        self.trace = Trace(scenario, seed)
        self.queue: list[tuple[int, int, int, str, AgentId, Any]] = []
        self.counter = 0
        self.agents: dict[tuple[str, AgentId], Agent] = {}
        self.adversaries: dict[tuple[str, AgentId], AdversarySpec] = {}
        self.rngs: dict[str, random.Random] = {}
        self.timers: dict[tuple[str, AgentId], set[int]] = {}
        self.outages = {o.agent: o for o in scenario.outages}
        self.raw: list[tuple[int, str, Message]] = []
        for inst in scenario.instances:
            self._setup(inst)

    def _setup(self, inst: InstanceSpec) -> None:
        iid = inst.instance_id
        store = BlockStore()
        self.trace.stores[iid] = store
        founding = found_instance(iid, inst.constitution, DEFAULT_SIGNER)
        self.trace.founding[iid] = founding
        self.rngs[iid] = random.Random(f"{self.seed}:{iid}")
        faulty = inst.faulty()
        for a in inst.agents():
            agent = Agent(a, founding, store)
            key = (iid, a)
            self.agents[key] = agent
            self.trace.agents[key] = agent
            self.trace.inputs[key] = []
            if a not in faulty:
                self.trace.correct.add(key)
            self._collect(iid, agent, 0)
        for spec in inst.adversaries:
            self.adversaries[(iid, spec.agent)] = spec
        for t, a, tx in sorted(inst.workload, key=lambda x: x[0]):
            self._push(t, _INPUT, iid, a, tx)
        for t, holder, vote in sorted(inst.votes, key=lambda x: x[0]):
            self._push(t, _VOTE, iid, holder, vote)
        for t in sorted(inst.deadlines):
            for a in inst.agents():
                self._push(t, _DEADLINE, iid, a, None)

    def _push(self, t: int, kind: int, iid: str, agent: AgentId, data: Any) -> None:
        heapq.heappush(self.queue, (t, self.counter, kind, iid, agent, data))
        self.counter += 1

    def record(self, t: int, iid: str, agent: AgentId, event: str, **fields: Any) -> None:
        self.trace.records.append((t, iid, agent, event, fields))

    def inject_raw(self, t: int, iid: str, sender: AgentId, recipient: AgentId, block: Block) -> None:
        """Deliver an arbitrary block at time ``t`` (malformed-block tests)."""
        self._push(t, _DELIVER, iid, recipient, Message(sender, recipient, block))

    def _held_until(self, agent: AgentId, t: int, ordinary: bool) -> int:
        o = self.outages.get(agent)
        if o is None or not (o.start <= t < o.end):
            return t
        return o.end + (o.ordinary_extra if ordinary else 0)

    def _collect(self, iid: str, agent: Agent, now: int, messages: Optional[list[Message]] = None) -> None:
        for t, kind, fields in agent.drain_events():
            self.record(t, iid, agent.id, kind, **fields)
        msgs = messages if messages is not None else agent.drain()
        key = (iid, agent.id)
        spec = self.adversaries.get(key)
        if spec is not None:
            e = agent.epoch
            ctx = AdversaryContext(agent, now, spec, e.constitution if e is not None else None)
            plan = adversary_step(spec, ctx, msgs)
        else:
            plan = [(0, m) for m in msgs]
        rng = self.rngs[iid]
        for extra, m in plan:
            send_at = now + extra
            arrive = send_at + self.network.delay(rng, send_at)
            self._check_bound(send_at, arrive)
            self.record(now, iid, m.sender, "send", to=m.recipient, kind=message_kind(m.block), block=m.block.digest)
            self._push(arrive, _DELIVER, iid, m.recipient, m)
        wake = agent.next_wakeup(now)
        if wake is not None:
            pending = self.timers.setdefault(key, set())
            if wake not in pending:
                pending.add(wake)
                self._push(wake, _TIMER, iid, agent.id, None)

    def _check_bound(self, send_at: int, arrive: int) -> None:
        net = self.network
        if send_at >= net.gst:
            assert 0 < arrive - send_at <= net.delta_actual, "post-GST delay bound violated"
        else:
            assert send_at < arrive <= max(net.gst + net.delta_actual, send_at + 1), "pre-GST clamp violated"

    def run(self) -> Trace:
        horizon = self.scenario.horizon
        while self.queue and self.queue[0][0] <= horizon:
            t, _, kind, iid, a, data = heapq.heappop(self.queue)
            key = (iid, a)
            agent = self.agents.get(key)
            if agent is None:
                continue
            held = self._held_until(a, t, kind == _DELIVER and data.block.is_ordinary)
            if held != t:
                self._push(held, kind, iid, a, data)
                continue
            if kind == _DELIVER:
                self.record(t, iid, a, "deliver", frm=data.sender, kind=message_kind(data.block), block=data.block.digest)
                msgs = agent.on_receive(data.block, data.sender, t)
            elif kind == _TIMER:
                self.timers.get(key, set()).discard(t)
                msgs = agent.on_timer(t)
            elif kind == _INPUT:
                self.trace.inputs[key].append(data)
                msgs = agent.on_input(data, t)
            elif kind == _VOTE:
                msgs = agent.on_vote(data, t)
            else:
                msgs = agent.on_deadline(t)
            self._collect(iid, agent, t, msgs)
        self.trace.in_flight_at_horizon = sum(1 for e in self.queue if e[2] == _DELIVER)
        return self.trace


def run(scenario: Scenario, seed: int) -> Trace:
    return Simulator(scenario, seed).run()


# ---------------------------------------------------------------- invariants


@dataclass
class InvariantResult:
    name: str
    ok: bool
    detail: str = ""
    pointer: Optional[dict] = None


@dataclass
class InvariantReport:
    results: dict[str, InvariantResult]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results.values())

    def failures(self) -> list[InvariantResult]:
        return [r for r in self.results.values() if not r.ok]


INVARIANTS = (
    "consistency",
    "validity",
    "ratified-uniqueness",
    "no-equivocation",
    "liveness",
    "amendment-liveness",
    "good-case-silence",
    "issuance",
    "quiescence",
)


def _correct_agents(trace: Trace, iid: str) -> list[AgentId]:
    return sorted(a for (i, a) in trace.correct if i == iid)


def _segments(items: list) -> dict[int, list]:
    seg: dict[int, list] = {}
    for it in items:
        if it.kind is OutputKind.TRANSACTION:
            seg.setdefault(it.epoch_index, []).append(it.value)
    return seg


def _check_consistency(trace: Trace) -> InvariantResult:
    for inst in trace.scenario.instances:
        iid = inst.instance_id
        agents = _correct_agents(trace, iid)
        segs = {a: _segments(trace.outputs(iid, a)) for a in agents}
        for x in range(len(agents)):
            for y in range(x + 1, len(agents)):
                a, b = agents[x], agents[y]
                for ep in sorted(set(segs[a]) & set(segs[b])):
                    sa, sb = segs[a][ep], segs[b][ep]
                    m = min(len(sa), len(sb))
                    for k in range(m):
                        if sa[k] != sb[k]:
                            return InvariantResult(
                                "consistency",
                                False,
                                f"{a} and {b} diverge in epoch {ep} at index {k}",
                                {"instance": iid, "agents": [a, b], "epoch": ep, "index": k},
                            )
    return InvariantResult("consistency", True)


def _epoch_constitutions(trace: Trace, iid: str) -> dict[int, Constitution]:
    out = {1: trace.founding[iid].new}
    for (i, _a), agent in trace.agents.items():
        if i == iid:
            for idx, d in agent.state.registry.decisions.items():
                out.setdefault(idx, d.new)
    return out


def _check_validity(trace: Trace) -> InvariantResult:
    for inst in trace.scenario.instances:
        iid = inst.instance_id
        consts = _epoch_constitutions(trace, iid)
        for a in _correct_agents(trace, iid):
            for k, it in enumerate(trace.outputs(iid, a)):
                c = consts.get(it.epoch_index)
                if c is None or a not in c.participants:
                    return InvariantResult(
                        "validity", False, f"{a} output for epoch {it.epoch_index} without membership",
                        {"instance": iid, "agent": a, "index": k},
                    )
    return InvariantResult("validity", True)


def union_mask(trace: Trace, iid: str, genesis: bytes) -> int:
    mask = 0
    for (i, a) in trace.correct:
        if i != iid:
            continue
        agent = trace.agents[(i, a)]
        rec = agent.state.registry.by_genesis.get(genesis)
        if rec is not None and rec.blocklace is not None:
            mask |= rec.blocklace.mask
    return mask


def ratified_per_wave(store: BlockStore, mask: int) -> dict[int, set[int]]:
    out: dict[int, set[int]] = {}
    for x in bit_list(mask):
        d = store.depth[x]
        if d > 0 and round_in_wave(d) == 3:
            ts = store.ratified_targets(x)
            if ts:
                out.setdefault(wave_of(d), set()).update(ts)
    return out


def _geneses(trace: Trace, iid: str) -> set[bytes]:
    gs: set[bytes] = set()
    for (i, _a), agent in trace.agents.items():
        if i == iid:
            gs |= set(agent.state.registry.by_genesis)
    return gs


def _check_ratified(trace: Trace) -> InvariantResult:
    for inst in trace.scenario.instances:
        iid = inst.instance_id
        store = trace.stores[iid]
        for g in sorted(_geneses(trace, iid)):
            mask = union_mask(trace, iid, g)
            for w, ts in sorted(ratified_per_wave(store, mask).items()):
                if len(ts) > 1:
                    return InvariantResult(
                        "ratified-uniqueness", False, f"wave {w} has {len(ts)} ratified blocks",
                        {"instance": iid, "wave": w, "blocks": [store.blocks[t].digest.hex() for t in sorted(ts)]},
                    )
    return InvariantResult("ratified-uniqueness", True)


def _check_no_equivocation(trace: Trace) -> InvariantResult:
    seen: dict[tuple, bytes] = {}
    for t, iid, a, kind, f in trace.records:
        if kind == "issue" and (iid, a) in trace.correct:
            store = trace.stores[iid]
            blk = store.blocks[store.index[f["block"]]]
            key = (iid, a, blk.epoch, f["depth"])
            if key in seen and seen[key] != f["block"]:
                return InvariantResult("no-equivocation", False, f"{a} issued twice at depth {f['depth']}", {"time": t})
            seen[key] = f["block"]
    return InvariantResult("no-equivocation", True)


def _final_members(trace: Trace, iid: str) -> set[AgentId]:
    consts = _epoch_constitutions(trace, iid)
    return set(consts[max(consts)].participants)


def _check_liveness(trace: Trace) -> InvariantResult:
    """Every correct input is output by each correct member of the epoch that ordered it."""
    for inst in trace.scenario.instances:
        iid = inst.instance_id
        agents = _correct_agents(trace, iid)
        consts = _epoch_constitutions(trace, iid)
        wanted: list[bytes] = []
        for a in agents:
            wanted.extend(x for x in trace.inputs[(iid, a)] if isinstance(x, bytes))
        ordered_in: dict[bytes, int] = {}
        got: dict[AgentId, set[bytes]] = {}
        for a in agents:
            got[a] = set()
            for it in trace.outputs(iid, a):
                if it.kind is OutputKind.TRANSACTION:
                    got[a].add(it.value)
                    ordered_in.setdefault(it.value, it.epoch_index)
        last = _final_members(trace, iid)
        for a in agents:
            missing = []
            for x in wanted:
                ep = ordered_in.get(x)
                members = last if ep is None else set(consts[ep].participants)
                if a in members and x not in got[a]:
                    missing.append(x)
            if missing:
                return InvariantResult(
                    "liveness", False, f"{a} lacks {len(missing)} transactions, first {missing[0]!r}",
                    {"instance": iid, "agent": a, "missing": len(missing)},
                )
    return InvariantResult("liveness", True)


def _check_amendment(trace: Trace) -> InvariantResult:
    for inst in trace.scenario.instances:
        iid = inst.instance_id
        decisions: dict[int, AmendmentDecision] = {}
        for (i, a) in trace.correct:
            if i == iid:
                decisions.update(trace.agents[(i, a)].state.registry.decisions)
        for idx, d in sorted(decisions.items()):
            if d.old is None:
                continue
            for (i, a) in sorted(trace.correct):
                if i != iid:
                    continue
                reg = trace.agents[(i, a)].state.registry
                if a in d.old.participants and idx not in reg.coronated:
                    return InvariantResult("amendment-liveness", False, f"{a} never coronated epoch {idx}",
                                           {"instance": iid, "agent": a, "epoch": idx})
                if a in d.new.participants and idx not in reg.started:
                    return InvariantResult("amendment-liveness", False, f"{a} never started epoch {idx}",
                                           {"instance": iid, "agent": a, "epoch": idx})
    return InvariantResult("amendment-liveness", True)


def _check_silence(trace: Trace) -> InvariantResult:
    for t, iid, a, kind, f in trace.records:
        if kind == "send" and f["kind"] in ("nack", "inform"):
            return InvariantResult("good-case-silence", False, f"{a} sent {f['kind']} at {t}", {"time": t, "agent": a})
    return InvariantResult("good-case-silence", True)


def _check_issuance(trace: Trace) -> InvariantResult:
    for inst in trace.scenario.instances:
        iid = inst.instance_id
        store = trace.stores[iid]
        carried: dict[AgentId, set[bytes]] = {}
        for b in store.blocks:
            if isinstance(b.payload, Transactions):
                carried.setdefault(b.creator, set()).update(e for e in b.payload.entries if isinstance(e, bytes))
        for a in _correct_agents(trace, iid):
            for tx in trace.inputs[(iid, a)]:
                if isinstance(tx, bytes) and tx not in carried.get(a, set()):
                    return InvariantResult("issuance", False, f"{a} never issued {tx!r}", {"instance": iid, "agent": a})
    return InvariantResult("issuance", True)


def _check_quiescence(trace: Trace) -> InvariantResult:
    """At the horizon every active correct agent rests after a quiescent wave."""
    for (iid, a) in sorted(trace.correct):
        e = trace.agents[(iid, a)].epoch
        if e is None:
            continue
        B = e.blocklace
        r = B.max_advanced_round()
        if r and round_in_wave(r) != 3 or not B.is_quiescent_wave(wave_of(r)):
            return InvariantResult("quiescence", False, f"{a} is not quiescent at the horizon (round {r})",
                                   {"instance": iid, "agent": a, "round": r})
    return InvariantResult("quiescence", True)


def check_invariants(trace: Trace, checks: Optional[Iterable[str]] = None) -> InvariantReport:
    """Evaluate the run-level invariants; expectation-gated ones apply only when declared."""
    exp = trace.scenario.expect
    if checks is None:
        wanted = ["consistency", "validity", "ratified-uniqueness", "no-equivocation", "issuance"]
        if exp.liveness:
            wanted.append("liveness")
        if exp.amendment:
            wanted.append("amendment-liveness")
        if exp.good_case:
            wanted.append("good-case-silence")
        if exp.quiescent:
            wanted.append("quiescence")
    else:
        wanted = list(checks)
        unknown = [c for c in wanted if c not in INVARIANTS]
        if unknown:
            raise ValueError(f"unknown invariant(s): {', '.join(unknown)}")
    table = {
        "consistency": _check_consistency,
        "validity": _check_validity,
        "ratified-uniqueness": _check_ratified,
        "no-equivocation": _check_no_equivocation,
        "liveness": _check_liveness,
        "amendment-liveness": _check_amendment,
        "good-case-silence": _check_silence,
        "issuance": _check_issuance,
        "quiescence": _check_quiescence,
    }
    return InvariantReport({name: table[name](trace) for name in wanted})
