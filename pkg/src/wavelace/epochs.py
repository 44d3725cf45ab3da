"""Epoch transitions driven by amendment decisions.

Once an agent's amendment pipeline produces a decision, every block it
issues carries that decision until a block carrying it is final.  The agent
then closes the epoch through the order of that block, sends a CORONATE
message to the old and new populations, and stops participating.  A member
of the new population starts the next epoch after CORONATEs from more than
``sigma * n`` old participants (and after sending its own, if it was one of
them).  Retired blocklaces keep answering NACKs from old participants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

from .blocklace import Block, Blocklace, Coronate, Transactions, make_block, make_genesis
from .kernels import bit_list
from .governance import Aggregator, AmendmentDecision

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Agent


class EpochStatus(str, Enum):
    ACTIVE = "active"
    ENDED = "ended"
    CORONATED = "coronated"


@dataclass
class EpochRecord:
    index: int
    genesis: Block
    decision: AmendmentDecision
    status: EpochStatus
    blocklace: Optional[Blocklace] = None

    @property
    def constitution(self):
        return self.decision.new


@dataclass
class EpochRegistry:
    instance_id: str
    epochs: list[EpochRecord] = field(default_factory=list)
    by_genesis: dict[bytes, EpochRecord] = field(default_factory=dict)
    coronate_inbox: dict[int, dict[str, Block]] = field(default_factory=dict)
    coronated: set[int] = field(default_factory=set)
    announced: set[int] = field(default_factory=set)
    started: set[int] = field(default_factory=set)
    decisions: dict[int, AmendmentDecision] = field(default_factory=dict)

    def active(self) -> Optional[EpochRecord]:
        for rec in self.epochs:
            if rec.status is EpochStatus.ACTIVE:
                return rec
        return None

    def is_retired(self, genesis_digest: bytes) -> bool:
        rec = self.by_genesis.get(genesis_digest)
        return rec is not None and rec.status is not EpochStatus.ACTIVE

    def collect_garbage(self) -> None:
        """Retired blocklaces are kept; pruning is deliberately a no-op."""


def _announce(agent: "Agent", d: AmendmentDecision) -> None:
    from .engine import OutputItem, OutputKind

    reg = agent.state.registry
    if d.index in reg.announced or agent.id not in d.new.participants:
        return
    reg.announced.add(d.index)
    agent.state.output.append(OutputItem(OutputKind.NEW_CONSTITUTION, d, d.index))
    agent.log("new-constitution", index=d.index, participants=list(d.new.participants))


def on_valid_decision(agent: "Agent", d: AmendmentDecision) -> None:
    """From now on every issued block of the epoch carries ``d``."""
    e = agent.epoch
    if e is None or e.ended:
        return
    if e.pending_decision is not None and e.pending_decision != d:
        raise RuntimeError("two different valid decisions in one epoch")
    e.pending_decision = d
    agent.state.registry.decisions[d.index] = d
    agent.log("decision", index=d.index, participants=list(d.new.participants))


def end_epoch(agent: "Agent", final_index: int) -> None:
    """Close the epoch on its final constitutional block and coronate."""
    e = agent.epoch
    assert e is not None
    st = agent.store
    d = st.blocks[final_index].payload.decision
    reg = agent.state.registry
    rec = reg.by_genesis[e.genesis.digest]
    e.ended = True
    rec.status = EpochStatus.ENDED
    agent.log("epoch-end", index=e.index, block=st.blocks[final_index].digest)
    _announce(agent, d)
    B = e.blocklace
    orphans = _orphaned_transactions(agent, e)
    if orphans:
        agent.state.payload[:0] = orphans
        agent.log("requeue", count=len(orphans), index=e.index)
    coronate = make_block(agent.id, Coronate(d), B.tips(), e.genesis.digest, agent.signer)
    reg.coronated.add(d.index)
    reg.decisions[d.index] = d
    reg.coronate_inbox.setdefault(d.index, {})[agent.id] = coronate
    rec.status = EpochStatus.CORONATED
    recipients = sorted(set(d.old.participants) | set(d.new.participants))
    agent.log("coronate", index=d.index, to=len([q for q in recipients if q != agent.id]))
    for q in recipients:
        agent.send(q, coronate)
    agent.state.epoch = None
    try_start(agent, d)


def _orphaned_transactions(agent: "Agent", e) -> list:
    """User transactions in own blocks of the closing epoch that its final order left out."""
    st = agent.store
    own = e.blocklace.mask & st.creator_masks.get(agent.id, 0)
    out = []
    for j in sorted(bit_list(own), key=lambda j: st.key[j]):
        if j in e.output_blocks:
            continue
        payload = st.blocks[j].payload
        if isinstance(payload, Transactions):
            out.extend(x for x in payload.entries if isinstance(x, bytes))
    return out


def on_coronate(agent: "Agent", block: Block, sender: str) -> None:
    d = block.payload.decision
    reg = agent.state.registry
    if not isinstance(d, AmendmentDecision) or d.instance_id != reg.instance_id or d.old is None:
        return
    if block.creator != sender or sender not in d.old.participants:
        agent.log("drop", block=block.digest, reason="coronate-sender")
        return
    known = reg.decisions.get(d.index)
    if known is not None and known != d:
        agent.log("drop", block=block.digest, reason="coronate-conflict")
        return
    reg.coronate_inbox.setdefault(d.index, {}).setdefault(sender, block)
    e = agent.epoch
    if e is not None and not e.ended and block.epoch == e.genesis.digest:
        # still in the old epoch: pull whatever the coronating peer observed
        missing = e.blocklace.missing_refs(block)
        key = frozenset(missing)
        if missing and key not in e.inform_nacks:
            e.inform_nacks.add(key)
            agent.send_nack(block, missing, sender)
    try_start(agent, d)


def try_start(agent: "Agent", d: AmendmentDecision) -> None:
    reg = agent.state.registry
    if agent.id not in d.new.participants or d.index in reg.started:
        return
    if agent.epoch is not None:
        return
    if agent.id in d.old.participants and d.index not in reg.coronated:
        return
    # only CORONATEs carrying this very decision count toward the start
    agreeing = [b for q, b in reg.coronate_inbox.get(d.index, {}).items()
                if q in d.old.participants and b.payload.decision == d]
    if d.old.is_supermajority(len(agreeing)):
        start_epoch(agent, d, agreeing)


def start_epoch(agent: "Agent", d: AmendmentDecision, coronates: Iterable[Block]) -> None:
    """Begin the epoch founded by ``d``; the input buffer and payload carry over."""
    from .engine import EpochState

    reg = agent.state.registry
    genesis = make_genesis(d, agent.signer)
    B = Blocklace(genesis, agent.store)
    rec = EpochRecord(d.index, genesis, d, EpochStatus.ACTIVE, B)
    reg.epochs.append(rec)
    reg.by_genesis[genesis.digest] = rec
    reg.started.add(d.index)
    reg.decisions.setdefault(d.index, d)
    e = EpochState(d.index, d, B)
    e.aggregator = Aggregator(d.new, d.index, agent.signer)
    agent.state.epoch = e
    senders = sorted({b.creator for b in coronates})
    agent.log("epoch-start", index=d.index, coronates=len(senders), payload=len(agent.state.payload))
    _announce(agent, d)


def respond_belated_nack(agent: "Agent", nack: Block, sender: str) -> int:
    """Serve a NACK aimed at a retired epoch from its retained blocklace."""
    rec = agent.state.registry.by_genesis.get(nack.epoch)
    if rec is None or rec.blocklace is None or rec.status is EpochStatus.ACTIVE:
        return 0
    if sender not in rec.constitution.participants:
        agent.log("drop", block=nack.digest, reason="belated-non-member")
        return 0
    agent.log("belated-nack", frm=sender, index=rec.index)
    return agent.judicious_send(rec.blocklace, nack.refs, sender, belated=True)
