"""Democratic amendment of the constitution.

Participants vote on three things at once: a yes/no ballot per candidate
member, a preferred supermajority threshold, and a preferred timeout.  The
votes agreed through consensus are aggregated into one evidence set, and
three rules turn that set into the next constitution:

* membership: a candidate stays or joins when more than ``sigma * n``
  members vote yes; a newcomer must also consent with its own vote;
* threshold: raising to ``s'`` needs more than ``s' * n`` members voting
  for ``s'`` or more, lowering needs a current supermajority voting for
  ``s'`` or less (the most extreme qualifying value wins);
* timeout: the lower median of the preferences, with the ``f`` most extreme
  votes on the side of the change discarded before the median is retaken.

Missing preferences count as votes for the status quo and missing ballots
count as "no".
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .blocklace import (
    DEFAULT_SIGNER,
    AgentId,
    Constitution,
    Signer,
    _lp,
    encode_fraction,
)

AMEND = "AMEND"


def _opt(data: Optional[bytes]) -> bytes:
    return _lp(b"" if data is None else data)


@dataclass(frozen=True)
class Vote:
    """A signed, persistent vote; a higher ``seq`` supersedes a lower one."""

    voter: AgentId
    seq: int
    ballots: tuple[tuple[AgentId, bool], ...] = ()
    consent: bool = True
    sigma_pref: Optional[Fraction] = None
    delta_pref: Optional[int] = None
    signature: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "ballots", tuple(sorted(dict(self.ballots).items())))
        if self.sigma_pref is not None:
            s = Fraction(self.sigma_pref)
            if not Fraction(1, 2) <= s < 1:
                raise ValueError("sigma_pref must be in [1/2, 1)")
            object.__setattr__(self, "sigma_pref", s)
        if self.delta_pref is not None and self.delta_pref <= 0:
            raise ValueError("delta_pref must be positive")

    @classmethod
    def cast(
        cls,
        voter: AgentId,
        seq: int,
        ballots: Mapping[AgentId, bool] | None = None,
        consent: bool = True,
        sigma_pref: Fraction | str | None = None,
        delta_pref: int | None = None,
        signer: Signer = DEFAULT_SIGNER,
    ) -> "Vote":
        v = cls(
            voter,
            seq,
            tuple((ballots or {}).items()),
            consent,
            None if sigma_pref is None else Fraction(sigma_pref),
            delta_pref,
        )
        return v.signed(signer)

    def unsigned_bytes(self) -> bytes:
        ballots = b"".join(_lp(a.encode()) + (b"\x01" if yes else b"\x00") for a, yes in self.ballots)
        return b"".join(
            (
                _lp(self.voter.encode()),
                _lp(str(self.seq).encode()),
                _lp(ballots),
                _lp(b"\x01" if self.consent else b"\x00"),
                _opt(None if self.sigma_pref is None else encode_fraction(self.sigma_pref)),
                _opt(None if self.delta_pref is None else str(self.delta_pref).encode()),
            )
        )

    def signed(self, signer: Signer = DEFAULT_SIGNER) -> "Vote":
        sig = signer.digest(b"vote" + self.unsigned_bytes())
        return Vote(self.voter, self.seq, self.ballots, self.consent, self.sigma_pref, self.delta_pref, sig)

    def verify(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        return self.signature == signer.digest(b"vote" + self.unsigned_bytes())

    def ballot(self, candidate: AgentId) -> bool:
        for a, yes in self.ballots:
            if a == candidate:
                return yes
        return False

    def canonical_bytes(self) -> bytes:
        return self.unsigned_bytes() + _lp(self.signature)


def _vote_order(v: Vote) -> tuple:
    return (v.voter, v.seq, v.signature)


@dataclass(frozen=True)
class VoteSetTransaction:
    """The latest vote a proposer knows from each voter, for one epoch."""

    proposer: AgentId
    epoch_index: int
    votes: tuple[Vote, ...]
    signature: bytes = b""

    def __post_init__(self) -> None:
        latest: dict[AgentId, Vote] = {}
        for v in self.votes:
            if v.voter not in latest or v.seq > latest[v.voter].seq:
                latest[v.voter] = v
        object.__setattr__(self, "votes", tuple(sorted(latest.values(), key=_vote_order)))

    @classmethod
    def propose(
        cls, proposer: AgentId, epoch_index: int, votes: Iterable[Vote], signer: Signer = DEFAULT_SIGNER
    ) -> "VoteSetTransaction":
        tx = cls(proposer, epoch_index, tuple(votes))
        return cls(proposer, epoch_index, tx.votes, signer.digest(b"voteset" + tx.unsigned_bytes()))

    def unsigned_bytes(self) -> bytes:
        return (
            _lp(self.proposer.encode())
            + _lp(str(self.epoch_index).encode())
            + _lp(b"".join(_lp(v.canonical_bytes()) for v in self.votes))
        )

    def verify(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        return self.signature == signer.digest(b"voteset" + self.unsigned_bytes())

    def canonical_bytes(self) -> bytes:
        return self.unsigned_bytes() + _lp(self.signature)


@dataclass(frozen=True)
class AmendmentDecision:
    """Evidence ``h`` plus the body (AMEND, instance id, epoch index, old, new).

    ``index`` is the index of the epoch the decision founds: the founding
    decision has index 1 and no old constitution, and a decision reached
    during epoch ``i`` has index ``i + 1``.
    """

    h: tuple[Vote, ...]
    instance_id: str
    index: int
    old: Optional[Constitution]
    new: Constitution

    def __post_init__(self) -> None:
        object.__setattr__(self, "h", tuple(sorted(self.h, key=_vote_order)))

    @property
    def body(self) -> tuple:
        return (AMEND, self.instance_id, self.index, self.old, self.new)

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                _lp(AMEND.encode()),
                _lp(self.instance_id.encode()),
                _lp(str(self.index).encode()),
                _opt(None if self.old is None else self.old.canonical_bytes()),
                _lp(self.new.canonical_bytes()),
                _lp(b"".join(_lp(v.canonical_bytes()) for v in self.h)),
            )
        )


# ---------------------------------------------------------------- aggregation


def _aggregate(
    ordered_txs: Sequence[VoteSetTransaction], c: Constitution, i: int, signer: Signer
) -> tuple[Optional[frozenset], int]:
    members = set(c.participants)
    proposers: set[AgentId] = set()
    latest: dict[AgentId, Vote] = {}
    for pos, tx in enumerate(ordered_txs):
        if tx.proposer not in members or tx.epoch_index != i or not tx.verify(signer):
            continue
        proposers.add(tx.proposer)
        for v in tx.votes:
            if not v.verify(signer):
                continue
            cur = latest.get(v.voter)
            if cur is None or (v.seq, v.signature) > (cur.seq, cur.signature):
                latest[v.voter] = v
        if c.is_supermajority(len(proposers)):
            return frozenset(latest.values()), pos
    return None, -1


def aggregate_votes(
    ordered_txs: Sequence[VoteSetTransaction], c: Constitution, i: int, signer: Signer = DEFAULT_SIGNER
) -> Optional[frozenset]:
    """Latest vote per voter once vote sets from a supermajority of proposers are ordered.

    Returns None until the ordered prefix holds vote-set transactions of
    epoch ``i`` from more than ``sigma * n`` distinct participants.
    """
    return _aggregate(ordered_txs, c, i, signer)[0]


class Aggregator:
    """Incremental form of :func:`aggregate_votes` fed one ordered entry at a time."""

    def __init__(self, c: Constitution, i: int, signer: Signer = DEFAULT_SIGNER) -> None:
        self.constitution = c
        self.index = i
        self.signer = signer
        self.ordered: list[VoteSetTransaction] = []
        self.result: Optional[frozenset] = None
        self._members = set(c.participants)
        self._proposers: set[AgentId] = set()
        self._latest: dict[AgentId, Vote] = {}

    def feed(self, tx: VoteSetTransaction) -> Optional[frozenset]:
        """Returns the aggregate exactly once, when it first becomes available."""
        self.ordered.append(tx)
        if self.result is not None:
            return None
        if tx.proposer not in self._members or tx.epoch_index != self.index or not tx.verify(self.signer):
            return None
        self._proposers.add(tx.proposer)
        for v in tx.votes:
            if not v.verify(self.signer):
                continue
            cur = self._latest.get(v.voter)
            if cur is None or (v.seq, v.signature) > (cur.seq, cur.signature):
                self._latest[v.voter] = v
        if self.constitution.is_supermajority(len(self._proposers)):
            self.result = frozenset(self._latest.values())
            return self.result
        return None


# ---------------------------------------------------------------- the three rules


def _member_votes(c: Constitution, votes: Iterable[Vote]) -> dict[AgentId, Vote]:
    members = set(c.participants)
    latest: dict[AgentId, Vote] = {}
    for v in votes:
        if v.voter in members and (v.voter not in latest or v.seq > latest[v.voter].seq):
            latest[v.voter] = v
    return latest


def amend_population(c: Constitution, votes: Iterable[Vote]) -> tuple[AgentId, ...]:
    votes = list(votes)
    members = _member_votes(c, votes)
    candidates = set(c.participants)
    for v in members.values():
        candidates.update(a for a, _ in v.ballots)
    own: dict[AgentId, Vote] = {}
    for v in votes:
        if v.voter not in own or v.seq > own[v.voter].seq:
            own[v.voter] = v
    kept = []
    for q in sorted(candidates):
        yes = sum(1 for v in members.values() if v.ballot(q))
        if not c.is_supermajority(yes):
            continue
        if q not in c.participants and not (q in own and own[q].consent):
            continue
        kept.append(q)
    return tuple(kept)


def amend_sigma(c: Constitution, votes: Iterable[Vote]) -> Fraction:
    members = _member_votes(c, votes)
    n = c.n
    prefs = [
        members[p].sigma_pref if p in members and members[p].sigma_pref is not None else c.sigma
        for p in c.participants
    ]
    for s in sorted({x for x in prefs if x > c.sigma}, reverse=True):
        if sum(1 for x in prefs if x >= s) > s * n:
            return s
    for s in sorted({x for x in prefs if x < c.sigma}):
        if sum(1 for x in prefs if x <= s) > c.sigma * n:
            return s
    return c.sigma


def _lower_median(xs: Sequence[int]) -> int:
    return sorted(xs)[(len(xs) - 1) // 2]


def amend_delta(c: Constitution, votes: Iterable[Vote]) -> int:
    members = _member_votes(c, votes)
    prefs = sorted(
        members[p].delta_pref if p in members and members[p].delta_pref is not None else c.delta
        for p in c.participants
    )
    if not prefs:
        return c.delta
    f = c.f
    m = _lower_median(prefs)
    if m > c.delta:
        rest = prefs[: len(prefs) - f] if f else prefs
        if rest:
            m2 = _lower_median(rest)
            if m2 > c.delta:
                return m2
    elif m < c.delta:
        rest = prefs[f:]
        if rest:
            m2 = _lower_median(rest)
            if m2 < c.delta:
                return m2
    return c.delta


def apply_rules(c: Constitution, votes: Iterable[Vote]) -> Constitution:
    votes = list(votes)
    return Constitution(amend_population(c, votes), amend_sigma(c, votes), amend_delta(c, votes))


def make_amendment_decision(
    c: Constitution, i: int, instance_id: str, h: Iterable[Vote]
) -> AmendmentDecision:
    """Decision reached during epoch ``i`` under ``c``; it founds epoch ``i + 1``."""
    h = tuple(h)
    return AmendmentDecision(h, instance_id, i + 1, c, apply_rules(c, h))


def found_instance(
    instance_id: str, constitution: Constitution, signer: Signer = DEFAULT_SIGNER
) -> AmendmentDecision:
    """Founding decision: every founder signs a consenting vote."""
    founders = constitution.participants
    h = tuple(
        Vote.cast(
            p,
            0,
            {q: True for q in founders},
            True,
            constitution.sigma,
            constitution.delta,
            signer,
        )
        for p in founders
    )
    return AmendmentDecision(h, instance_id, 1, None, constitution)


# ---------------------------------------------------------------- validation


class Reason(str, Enum):
    OK = "ok"
    WRONG_INSTANCE = "wrong-instance"
    WRONG_EPOCH = "wrong-epoch"
    WRONG_OLD = "wrong-old-constitution"
    BAD_SIGNATURE = "bad-signature"
    NOT_YET = "not-yet"
    NOT_FIRST = "not-first"
    EVIDENCE_MISMATCH = "evidence-mismatch"
    RULE_MISMATCH = "rule-mismatch"
    FOUNDERS = "founders-mismatch"


@dataclass(frozen=True)
class Validation:
    ok: bool
    reason: Reason

    def __bool__(self) -> bool:
        return self.ok


def validate_founding(d: AmendmentDecision, instance_id: str, signer: Signer = DEFAULT_SIGNER) -> Validation:
    if d.instance_id != instance_id:
        return Validation(False, Reason.WRONG_INSTANCE)
    if d.index != 1 or d.old is not None:
        return Validation(False, Reason.WRONG_EPOCH)
    if not all(v.verify(signer) for v in d.h):
        return Validation(False, Reason.BAD_SIGNATURE)
    signers = {v.voter for v in d.h if v.consent}
    if signers != set(d.new.participants):
        return Validation(False, Reason.FOUNDERS)
    return Validation(True, Reason.OK)


def validate_decision(
    d: AmendmentDecision,
    prevailing: Constitution,
    i: int,
    instance_id: str,
    ordered_txs: Sequence[VoteSetTransaction],
    signer: Signer = DEFAULT_SIGNER,
) -> Validation:
    """Check ``d`` against epoch ``i``'s ordered vote-set prefix."""
    if d.instance_id != instance_id:
        return Validation(False, Reason.WRONG_INSTANCE)
    if d.index != i + 1:
        return Validation(False, Reason.WRONG_EPOCH)
    if d.old != prevailing:
        return Validation(False, Reason.WRONG_OLD)
    if not all(v.verify(signer) for v in d.h):
        return Validation(False, Reason.BAD_SIGNATURE)
    expected, pos = _aggregate(ordered_txs, prevailing, i, signer)
    if expected is None:
        return Validation(False, Reason.NOT_YET)
    if frozenset(d.h) != expected:
        for start in range(1, len(ordered_txs)):
            later, _ = _aggregate(ordered_txs[start:], prevailing, i, signer)
            if later is not None and frozenset(d.h) == later:
                return Validation(False, Reason.NOT_FIRST)
        return Validation(False, Reason.EVIDENCE_MISMATCH)
    if d.new != apply_rules(prevailing, d.h):
        return Validation(False, Reason.RULE_MISMATCH)
    return Validation(True, Reason.OK)
