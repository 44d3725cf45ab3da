"""Per-agent protocol state machine.

An :class:`Agent` is a deterministic event handler.  Each entry point
(``on_input``, ``on_receive``, ``on_timer``, ...) updates the state, then
re-applies the protocol rules until none fires, and returns the messages to
send.  ``next_wakeup`` tells the scheduler when a timer (Δ, 2Δ or 9Δ) would
next change the outcome.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from . import epochs
from .blocklace import (
    DEFAULT_SIGNER,
    EMPTY,
    AgentId,
    Block,
    Blocklace,
    BlockStore,
    Constitution,
    Decision,
    Inform,
    Nack,
    PayloadTag,
    Signer,
    Transactions,
    make_block,
    round_in_wave,
    verify_block,
    wave_of,
)
from .kernels import bit_list
from .governance import (
    Aggregator,
    AmendmentDecision,
    Vote,
    VoteSetTransaction,
    make_amendment_decision,
)


def leader_of(participants: tuple[AgentId, ...] | list[AgentId], first_round_depth: int) -> AgentId:
    """Round-robin formal leader of the wave whose first round is at ``first_round_depth``."""
    if not participants:
        raise ValueError("empty participant set")
    if first_round_depth < 1 or round_in_wave(first_round_depth) != 1:
        raise ValueError("not a first-round depth")
    ordered = sorted(participants)
    return ordered[(wave_of(first_round_depth) - 1) % len(ordered)]


class OutputKind(str, Enum):
    TRANSACTION = "tx"
    NEW_CONSTITUTION = "constitution"


@dataclass(frozen=True)
class OutputItem:
    kind: OutputKind
    value: Any
    epoch_index: int


@dataclass(frozen=True)
class Message:
    sender: AgentId
    recipient: AgentId
    block: Block


@dataclass
class EpochState:
    """Protocol state for one epoch (one blocklace)."""

    index: int
    decision: AmendmentDecision
    blocklace: Blocklace
    issued_rounds: set[int] = field(default_factory=set)
    max_issued: int = 0
    advanced_at: dict[int, int] = field(default_factory=dict)
    informed: set[int] = field(default_factory=set)
    nacked: set[bytes] = field(default_factory=set)
    inform_nacks: set[frozenset] = field(default_factory=set)
    last_final: Optional[int] = None
    last_final_depth: int = 0
    seen_final: set[int] = field(default_factory=set)
    output_blocks: set[int] = field(default_factory=set)
    aggregator: Optional[Aggregator] = None
    pending_decision: Optional[AmendmentDecision] = None
    ended: bool = False

    @property
    def constitution(self) -> Constitution:
        return self.blocklace.constitution

    @property
    def genesis(self) -> Block:
        return self.blocklace.genesis


@dataclass
class AgentState:
    agent_id: AgentId
    instance_id: str
    epoch: Optional[EpochState]
    D: dict[bytes, tuple[Block, int]] = field(default_factory=dict)
    payload: list[Any] = field(default_factory=list)
    sent: dict[AgentId, set[bytes]] = field(default_factory=dict)
    output: list[OutputItem] = field(default_factory=list)
    clock: int = 0
    known_votes: dict[AgentId, Vote] = field(default_factory=dict)
    registry: epochs.EpochRegistry = None  # type: ignore[assignment]


class Agent:
    """One participant's protocol engine across epochs of one instance."""

    def __init__(
        self,
        agent_id: AgentId,
        founding: AmendmentDecision,
        store: Optional[BlockStore] = None,
        signer: Signer = DEFAULT_SIGNER,
    ) -> None:
        self.signer = signer
        self.store = store if store is not None else BlockStore()
        self.state = AgentState(agent_id, founding.instance_id, None)
        self.state.registry = epochs.EpochRegistry(founding.instance_id)
        self.events: list[tuple[int, str, dict]] = []
        self.outbox: list[Message] = []
        self.order_key = None  # set only by fault-injection tests
        if agent_id in founding.new.participants:
            epochs.start_epoch(self, founding, ())

    # -- convenience

    @property
    def id(self) -> AgentId:
        return self.state.agent_id

    @property
    def epoch(self) -> Optional[EpochState]:
        return self.state.epoch

    def log(self, kind: str, **fields: Any) -> None:
        self.events.append((self.state.clock, kind, fields))

    def send(self, recipient: AgentId, block: Block) -> None:
        if recipient == self.id:
            return
        self.outbox.append(Message(self.id, recipient, block))
        if block.is_ordinary:
            self.state.sent.setdefault(recipient, set()).add(block.digest)

    def drain(self) -> list[Message]:
        out, self.outbox = self.outbox, []
        return out

    def drain_events(self) -> list[tuple[int, str, dict]]:
        out, self.events = self.events, []
        return out

    # -- entry points

    def on_input(self, tx: Any, now: int) -> list[Message]:
        self.state.clock = now
        self.state.payload.append(tx)
        self.log("input", tx=tx if isinstance(tx, bytes) else "vote-set")
        self.run(now)
        return self.drain()

    def on_vote(self, vote: Vote, now: int) -> list[Message]:
        """Learn a signed vote (own or relayed)."""
        self.state.clock = now
        if vote.verify(self.signer):
            cur = self.state.known_votes.get(vote.voter)
            if cur is None or vote.seq > cur.seq:
                self.state.known_votes[vote.voter] = vote
        return self.drain()

    def on_deadline(self, now: int) -> list[Message]:
        """Propose the latest known votes as a vote-set transaction."""
        self.state.clock = now
        e = self.epoch
        if e is None or e.ended or e.pending_decision is not None:
            return self.drain()
        tx = VoteSetTransaction.propose(self.id, e.index, self.state.known_votes.values(), self.signer)
        return self.on_input(tx, now)

    def on_timer(self, now: int) -> list[Message]:
        self.state.clock = now
        self.run(now)
        return self.drain()

    def on_receive(self, block: Block, sender: AgentId, now: int) -> list[Message]:
        self.state.clock = now
        if not verify_block(block, self.signer):
            self.log("drop", block=block.digest, reason="bad-signature")
            return self.drain()
        tag = block.payload.tag
        e = self.epoch
        if tag is PayloadTag.NACK:
            if e is not None and not e.ended and block.epoch == e.genesis.digest:
                if sender in e.constitution.participants:
                    self.judicious_send(e.blocklace, block.refs, sender)
            else:
                epochs.respond_belated_nack(self, block, sender)
        elif tag is PayloadTag.INFORM:
            if e is not None and not e.ended and block.epoch == e.genesis.digest:
                if sender in e.constitution.participants:
                    missing = e.blocklace.missing_refs(block)
                    key = frozenset(missing)
                    if missing and key not in e.inform_nacks:
                        e.inform_nacks.add(key)
                        self.send_nack(block, missing, sender)
        elif tag is PayloadTag.CORONATE:
            epochs.on_coronate(self, block, sender)
        else:
            self.receive_ordinary(block, now)
        self.run(now)
        return self.drain()

    def receive_ordinary(self, block: Block, now: int) -> None:
        e = self.epoch
        if e is not None and block.epoch == e.genesis.digest:
            if e.ended:
                self.log("late", block=block.digest)
                return
            if block.creator not in e.constitution.participants:
                self.log("drop", block=block.digest, reason="non-member")
                return
            if block.digest in e.blocklace:
                return
        elif self.state.registry.is_retired(block.epoch):
            self.log("late", block=block.digest)
            return
        if block.digest not in self.state.D:
            self.state.D[block.digest] = (block, now)

    # -- messages

    def send_nack(self, target: Block, missing: list[bytes], recipient: AgentId) -> None:
        nack = make_block(self.id, Nack(target.digest), missing, target.epoch, self.signer)
        self.log("nack", to=recipient, target=target.digest)
        self.send(recipient, nack)

    def judicious_send(self, B: Blocklace, refs: frozenset, recipient: AgentId, belated: bool = False) -> int:
        st = self.store
        want = 0
        for r in refs:
            i = st.index.get(r)
            if i is not None and B.has_index(i):
                want |= st.closure[i]
        want &= ~(1 << B.genesis_index)
        if not want:
            return 0
        known = 0
        own = B.mask & st.creator_masks.get(recipient, 0)
        for j in st_bits(own):
            known |= st.closure[j]
        for blk, _ in self.state.D.values():
            if blk.creator == recipient:
                for r in blk.refs:
                    i = st.index.get(r)
                    if i is not None and B.has_index(i):
                        known |= st.closure[i]
        sent = self.state.sent.setdefault(recipient, set())
        picks = [j for j in st_bits(want & ~known) if st.blocks[j].digest not in sent]
        picks.sort(key=lambda j: st.key[j])
        for j in picks:
            self.send(recipient, st.blocks[j])
        if picks:
            self.log("forward", to=recipient, count=len(picks), belated=belated)
        return len(picks)

    # -- the rules

    def has_payload(self) -> bool:
        e = self.epoch
        return bool(self.state.payload) or (e is not None and e.pending_decision is not None)

    def run(self, now: int) -> None:
        for _ in range(10_000):
            e = self.epoch
            if e is None or e.ended:
                return
            progress = self.accept_or_nack(now)
            progress |= self.maybe_issue(now)
            self.inform_leader(now)
            progress |= self.emit_output(now)
            if not progress:
                return
        raise RuntimeError("rule application did not settle")

    def accept_or_nack(self, now: int) -> bool:
        e = self.epoch
        assert e is not None
        B = e.blocklace
        gid = e.genesis.digest
        members = e.constitution.participants
        progress = False
        changed = True
        while changed:
            changed = False
            for dig, (blk, _t) in list(self.state.D.items()):
                if blk.epoch != gid or not B.can_add(blk):
                    continue
                del self.state.D[dig]
                changed = True
                if blk.creator not in members:
                    self.log("drop", block=dig, reason="non-member")
                elif B.add(blk):
                    progress = True
                    self.log("accept", block=dig, depth=B.depth(dig), creator=blk.creator)
                else:
                    self.log("drop", block=dig, reason="invalid")
        delta = e.constitution.delta
        for dig, (blk, t) in self.state.D.items():
            if blk.epoch == gid and now - t >= delta and dig not in e.nacked:
                e.nacked.add(dig)
                self.send_nack(blk, B.missing_refs(blk), blk.creator)
        return progress

    def max_advanced(self, now: int) -> int:
        e = self.epoch
        assert e is not None
        r = e.blocklace.max_advanced_round()
        if r not in e.advanced_at:
            e.advanced_at[r] = now
            self.log("advance", round=r)
        return r

    def _can_issue(self, k: int) -> bool:
        e = self.epoch
        return k > 0 and k not in e.issued_rounds and k > e.max_issued

    def maybe_issue(self, now: int) -> bool:
        e = self.epoch
        assert e is not None
        B = e.blocklace
        c = e.constitution
        r = self.max_advanced(now)
        k = r + 1
        issued = False
        if self._can_issue(k):
            go = False
            if round_in_wave(k) in (2, 3):
                go = True
            elif B.is_quiescent_wave(wave_of(r)):
                go = self.has_payload()
            else:
                go = c.leader(wave_of(k)) == self.id or now - e.advanced_at[r] >= 9 * c.delta
            if go:
                issued = self.issue(k, now)
        if not issued and r > 0 and self.has_payload():
            if r not in e.issued_rounds and k not in e.issued_rounds and self._can_issue(r):
                issued = self.issue(r, now, backlog=True)
        return issued

    def issue(self, k: int, now: int, backlog: bool = False) -> bool:
        e = self.epoch
        assert e is not None
        B = e.blocklace
        refs = B.tips_of_prefix(k - 1)
        use_user_payload = False
        if e.pending_decision is not None:
            payload = Decision(e.pending_decision)
        elif self.state.payload:
            payload = Transactions(tuple(self.state.payload))
            use_user_payload = True
        else:
            payload = EMPTY
        block = make_block(self.id, payload, refs, e.genesis.digest, self.signer)
        depth = 1 + max(B.depth(r) for r in refs)
        if depth != k or not B.add(block):
            self.log("issue-skipped", round=k)
            e.issued_rounds.add(k)
            return False
        e.issued_rounds.add(k)
        e.max_issued = k
        if use_user_payload:
            self.state.payload = []
        self.log(
            "issue",
            block=block.digest,
            depth=k,
            tag=payload.tag.name,
            txs=len(payload.entries) if isinstance(payload, Transactions) else 0,
            backlog=backlog,
        )
        for q in e.constitution.participants:
            self.send(q, block)
        return True

    def inform_leader(self, now: int) -> None:
        e = self.epoch
        assert e is not None
        B = e.blocklace
        c = e.constitution
        r = self.max_advanced(now)
        if r == 0 or round_in_wave(r) != 3 or r in e.informed:
            return
        if now - e.advanced_at[r] < 2 * c.delta:
            return
        leader = c.leader(wave_of(r + 1))
        if leader == self.id or B.is_quiescent_wave(wave_of(r)):
            return
        e.informed.add(r)
        refs = [b.digest for b in B.round_blocks(r)]
        inform = make_block(self.id, Inform(r + 1), refs, e.genesis.digest, self.signer)
        self.log("inform", to=leader, round=r + 1)
        self.send(leader, inform)

    def emit_output(self, now: int) -> bool:
        e = self.epoch
        assert e is not None
        B = e.blocklace
        st = self.store
        start = wave_of(e.last_final_depth) + 1
        deepest = None
        for w in range(start, wave_of(B.max_depth) + 1):
            i = B.final_index(w)
            if i is not None:
                if i not in e.seen_final:
                    e.seen_final.add(i)
                    self.log("final", block=st.blocks[i].digest, depth=st.depth[i], wave=w)
                deepest = i
        if deepest is None:
            return False
        e.last_final = deepest
        e.last_final_depth = st.depth[deepest]
        if self.order_key is None:
            seq = st.tau_indices(deepest)
        else:
            seq = tau_with_key(st, deepest, self.order_key)
        for j in seq:
            if j in e.output_blocks:
                continue
            e.output_blocks.add(j)
            payload = st.blocks[j].payload
            if isinstance(payload, Transactions):
                for entry in payload.entries:
                    if isinstance(entry, bytes):
                        self.state.output.append(OutputItem(OutputKind.TRANSACTION, entry, e.index))
                        self.log("output", tx=entry)
                    elif isinstance(entry, VoteSetTransaction):
                        self.ordered_vote_set(entry)
        final_payload = st.blocks[deepest].payload
        if isinstance(final_payload, Decision):
            d = final_payload.decision
            if e.pending_decision is not None and d == e.pending_decision:
                epochs.end_epoch(self, deepest)
        return True

    def ordered_vote_set(self, tx: VoteSetTransaction) -> None:
        e = self.epoch
        assert e is not None
        for v in tx.votes:
            if v.verify(self.signer):
                cur = self.state.known_votes.get(v.voter)
                if cur is None or v.seq > cur.seq:
                    self.state.known_votes[v.voter] = v
        if e.aggregator is None:
            return
        h = e.aggregator.feed(tx)
        if h is not None and e.pending_decision is None:
            d = make_amendment_decision(e.constitution, e.index, self.state.instance_id, h)
            epochs.on_valid_decision(self, d)

    # -- scheduling

    def next_wakeup(self, now: int) -> Optional[int]:
        e = self.epoch
        if e is None or e.ended:
            return None
        c = e.constitution
        cands = []
        gid = e.genesis.digest
        for dig, (blk, t) in self.state.D.items():
            if blk.epoch == gid and dig not in e.nacked:
                cands.append(t + c.delta)
        r = max(e.advanced_at) if e.advanced_at else 0
        if r > 0 and round_in_wave(r) == 3:
            adv = e.advanced_at[r]
            if r + 1 not in e.issued_rounds:
                cands.append(adv + 9 * c.delta)
            if r not in e.informed:
                cands.append(adv + 2 * c.delta)
        future = [t for t in cands if t > now]
        return min(future) if future else None


def st_bits(mask: int) -> list[int]:
    return bit_list(mask)


def tau_with_key(st: BlockStore, i: int, key) -> list[int]:
    """Uncached order using an alternative tie-break (fault-injection only)."""
    chain = []
    j: Optional[int] = i
    while j is not None:
        chain.append(j)
        j = st.latest_ratified_below(j)
    out: list[int] = []
    base = 0
    for j in reversed(chain):
        out.extend(st.xsort(j, base, key))
        base = st.closure[j]
    return out
