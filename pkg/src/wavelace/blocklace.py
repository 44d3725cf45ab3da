"""Blocklace: a closed DAG of signed blocks and the wave-based finality rules.

A block references earlier blocks by digest.  Depth 0 holds only the
constitutional genesis block of an epoch; depth ``d > 0`` belongs to wave
``ceil(d / 3)`` and round ``(d - 1) % 3 + 1`` of that wave.

Every block is interned once into a :class:`BlockStore`, which assigns it an
integer index and records its closure as a bitset.  A :class:`Blocklace` is
a membership bitset over a store.  Properties that depend only on a block's
own closure (validity, endorsement, ratification, its order ``tau``) are
memoised in the store, so several agents sharing a store compute them once.

Canonical serialization (the digest input) is five length-prefixed fields,
each prefix a 4-byte big-endian length::

    epoch-id | creator (utf-8) | payload-tag (1 byte) | payload-bytes | refs

``refs`` is the concatenation of the referenced digests in ascending byte
order.  See the README for the payload encodings.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Any, Callable, ClassVar, Iterable, Optional, Protocol, Union

from .kernels import bit_list, count_owners

AgentId = str
BlockId = bytes

GENESIS_CREATOR: AgentId = ""
DIGEST_SIZE = 16
STUB_KEY = b"wavelace-stub-v1"


def _lp(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def encode_fraction(x: Fraction) -> bytes:
    return _lp(str(x.numerator).encode()) + _lp(str(x.denominator).encode())


# ---------------------------------------------------------------- constitution


@dataclass(frozen=True)
class Constitution:
    """The amendable triple: participants, supermajority threshold, timeout."""

    participants: tuple[AgentId, ...]
    sigma: Fraction
    delta: int

    def __post_init__(self) -> None:
        parts = tuple(sorted(set(self.participants)))
        if GENESIS_CREATOR in parts:
            raise ValueError("the empty agent id is reserved")
        object.__setattr__(self, "participants", parts)
        sigma = Fraction(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        if not Fraction(1, 2) <= sigma < 1:
            raise ValueError("sigma must be in [1/2, 1)")
        if int(self.delta) != self.delta or self.delta <= 0:
            raise ValueError("delta must be a positive integer tick count")
        object.__setattr__(self, "delta", int(self.delta))
        # smallest count strictly above sigma * n
        object.__setattr__(self, "_quorum", math.floor(sigma * len(parts)) + 1)

    @property
    def n(self) -> int:
        return len(self.participants)

    @property
    def f(self) -> int:
        """Tolerated fault count, floor((2 sigma - 1) n)."""
        return math.floor((2 * self.sigma - 1) * self.n)

    def is_supermajority(self, count: int) -> bool:
        return count >= self._quorum

    def leader(self, wave: int) -> AgentId:
        if not self.participants:
            raise ValueError("no participants to lead")
        return self.participants[(wave - 1) % self.n]

    def canonical_bytes(self) -> bytes:
        body = b"".join(_lp(p.encode()) for p in self.participants)
        return _lp(body) + encode_fraction(self.sigma) + _lp(str(self.delta).encode())


# ---------------------------------------------------------------- payloads


class PayloadTag(IntEnum):
    EMPTY = 0
    TRANSACTIONS = 1
    DECISION = 2
    NACK = 3
    INFORM = 4
    CORONATE = 5


class Encodable(Protocol):
    def canonical_bytes(self) -> bytes: ...


ENTRY_USER = 1
ENTRY_VOTE_SET = 2


@dataclass(frozen=True)
class Empty:
    tag: ClassVar[PayloadTag] = PayloadTag.EMPTY

    def encode(self) -> bytes:
        return b""


EMPTY = Empty()


@dataclass(frozen=True)
class Transactions:
    """User transactions and vote-set transactions, distinguished per entry."""

    entries: tuple[Any, ...]
    tag: ClassVar[PayloadTag] = PayloadTag.TRANSACTIONS

    def encode(self) -> bytes:
        parts = [len(self.entries).to_bytes(4, "big")]
        for e in self.entries:
            if isinstance(e, bytes):
                parts.append(bytes([ENTRY_USER]) + _lp(e))
            else:
                parts.append(bytes([ENTRY_VOTE_SET]) + _lp(e.canonical_bytes()))
        return b"".join(parts)


@dataclass(frozen=True)
class Decision:
    decision: Any
    tag: ClassVar[PayloadTag] = PayloadTag.DECISION

    def encode(self) -> bytes:
        return self.decision.canonical_bytes()


@dataclass(frozen=True)
class Nack:
    target: BlockId
    tag: ClassVar[PayloadTag] = PayloadTag.NACK

    def encode(self) -> bytes:
        return self.target


@dataclass(frozen=True)
class Inform:
    round: int
    tag: ClassVar[PayloadTag] = PayloadTag.INFORM

    def encode(self) -> bytes:
        return self.round.to_bytes(8, "big")


@dataclass(frozen=True)
class Coronate:
    decision: Any
    tag: ClassVar[PayloadTag] = PayloadTag.CORONATE

    def encode(self) -> bytes:
        return self.decision.canonical_bytes()


Payload = Union[Empty, Transactions, Decision, Nack, Inform, Coronate]
CONTROL_TAGS = frozenset({PayloadTag.NACK, PayloadTag.INFORM, PayloadTag.CORONATE})


# ---------------------------------------------------------------- signing


@dataclass(frozen=True)
class Signature:
    signer: AgentId
    digest: bytes


class Signer(Protocol):
    def digest(self, data: bytes) -> bytes: ...

    def sign(self, creator: AgentId, digest: bytes) -> Signature: ...

    def verify(self, signature: Signature, digest: bytes) -> bool: ...


class StubSigner:
    """Keyed BLAKE2b digests; a signature is the (creator, digest) pair."""

    def __init__(self, key: bytes = STUB_KEY) -> None:
        self.key = key

    def digest(self, data: bytes) -> bytes:
        return hashlib.blake2b(data, digest_size=DIGEST_SIZE, key=self.key).digest()

    def sign(self, creator: AgentId, digest: bytes) -> Signature:
        return Signature(creator, digest)

    def verify(self, signature: Signature, digest: bytes) -> bool:
        return signature.digest == digest


DEFAULT_SIGNER = StubSigner()


# ---------------------------------------------------------------- blocks


@dataclass(frozen=True, eq=False)
class Block:
    digest: BlockId
    creator: AgentId
    payload: Payload
    refs: frozenset
    epoch: BlockId
    signature: Signature

    @property
    def id(self) -> BlockId:
        return self.digest

    @property
    def is_initial(self) -> bool:
        return not self.refs

    @property
    def is_empty(self) -> bool:
        return self.payload.tag is PayloadTag.EMPTY

    @property
    def is_ordinary(self) -> bool:
        return self.payload.tag not in CONTROL_TAGS

    def __hash__(self) -> int:
        return hash(self.digest)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Block) and other.digest == self.digest

    def __repr__(self) -> str:
        return f"Block({self.digest.hex()[:8]} by {self.creator or 'genesis'}, {self.payload.tag.name})"


def canonical_bytes(epoch: BlockId, creator: AgentId, payload: Payload, refs: Iterable[BlockId]) -> bytes:
    return b"".join(
        (
            _lp(epoch),
            _lp(creator.encode()),
            _lp(bytes([int(payload.tag)])),
            _lp(payload.encode()),
            _lp(b"".join(sorted(refs))),
        )
    )


def make_block(
    creator: AgentId,
    payload: Payload,
    refs: Iterable[BlockId],
    epoch: BlockId,
    signer: Signer = DEFAULT_SIGNER,
) -> Block:
    refs = frozenset(refs)
    digest = signer.digest(canonical_bytes(epoch, creator, payload, refs))
    return Block(digest, creator, payload, refs, epoch, signer.sign(creator, digest))


def make_genesis(decision: Any, signer: Signer = DEFAULT_SIGNER) -> Block:
    """Constitutional genesis block of the epoch founded by ``decision``."""
    return make_block(GENESIS_CREATOR, Decision(decision), (), b"", signer)


def verify_block(block: Block, signer: Signer = DEFAULT_SIGNER) -> bool:
    expected = signer.digest(canonical_bytes(block.epoch, block.creator, block.payload, block.refs))
    return (
        expected == block.digest
        and block.signature.signer == block.creator
        and signer.verify(block.signature, expected)
    )


def is_genesis_block(block: Block) -> bool:
    return (
        block.creator == GENESIS_CREATOR
        and not block.refs
        and block.epoch == b""
        and isinstance(block.payload, Decision)
    )


def wave_of(depth: int) -> int:
    return 0 if depth <= 0 else (depth + 2) // 3


def round_in_wave(depth: int) -> int:
    return 0 if depth <= 0 else (depth - 1) % 3 + 1


class RoundKind(IntEnum):
    GENESIS = 0
    FIRST = 1
    SECOND = 2
    THIRD = 3


def first_round_of(wave: int) -> int:
    return 3 * wave - 2


# ---------------------------------------------------------------- store


def default_order_key(store: "BlockStore", i: int) -> tuple:
    return store.key[i]


class BlockStore:
    """Interned blocks with closure bitsets and closure-only memo tables."""

    def __init__(self) -> None:
        self.blocks: list[Block] = []
        self.index: dict[BlockId, int] = {}
        self.closure: list[int] = []
        self.depth: list[int] = []
        self.creator: list[AgentId] = []
        self.key: list[tuple] = []
        self.depth_masks: list[int] = []
        self.creator_masks: dict[AgentId, int] = {}
        self.payload_mask = 0  # non-empty blocks of depth > 0
        self.epoch_constitution: dict[BlockId, Constitution] = {}
        self._epoch_of: list[BlockId] = []
        self._endorsed: dict[int, Optional[int]] = {}
        self._ratified: dict[int, frozenset] = {}
        self._valid: dict[int, bool] = {}
        self._tau: dict[int, tuple[Optional[int], tuple[int, ...]]] = {}

    def __len__(self) -> int:
        return len(self.blocks)

    def __contains__(self, digest: BlockId) -> bool:
        return digest in self.index

    def intern(self, block: Block) -> int:
        i = self.index.get(block.digest)
        if i is not None:
            return i
        closure = 0
        depth = 0
        for r in block.refs:
            j = self.index[r]
            closure |= self.closure[j]
            if self.depth[j] + 1 > depth:
                depth = self.depth[j] + 1
        i = len(self.blocks)
        bit = 1 << i
        self.blocks.append(block)
        self.index[block.digest] = i
        self.closure.append(closure | bit)
        self.depth.append(depth)
        self.creator.append(block.creator)
        self.key.append((depth, block.creator, block.digest))
        while len(self.depth_masks) <= depth:
            self.depth_masks.append(0)
        self.depth_masks[depth] |= bit
        self.creator_masks[block.creator] = self.creator_masks.get(block.creator, 0) | bit
        if depth > 0 and not block.is_empty:
            self.payload_mask |= bit
        if depth == 0 and is_genesis_block(block):
            self.epoch_constitution[block.digest] = block.payload.decision.new
            self._epoch_of.append(block.digest)
        else:
            self._epoch_of.append(block.epoch)
        return i

    def constitution_of(self, i: int) -> Constitution:
        return self.epoch_constitution[self._epoch_of[i]]

    def epoch_of(self, i: int) -> BlockId:
        return self._epoch_of[i]

    def round_mask(self, mask: int, depth: int) -> int:
        if depth < 0 or depth >= len(self.depth_masks):
            return 0
        return mask & self.depth_masks[depth]

    def creators_in(self, mask: int, c: Constitution) -> int:
        cm = self.creator_masks
        return count_owners(mask, [cm.get(p, 0) for p in c.participants])

    # -- relations

    def observes(self, a: int, b: int) -> bool:
        return bool((self.closure[a] >> b) & 1)

    def approves(self, a: int, b: int) -> bool:
        ca = self.closure[a]
        if not (ca >> b) & 1:
            return False
        rivals = ca & self.creator_masks[self.creator[b]] & ~self.closure[b]
        if not rivals:
            return True
        closure = self.closure
        for x in bit_list(rivals):
            if not (closure[x] >> b) & 1:
                return False
        return True

    # -- closure-relative predicates, evaluated inside the view ``mask``

    def advanced_in(self, mask: int, r: int, c: Constitution) -> bool:
        if r == 0:
            return True
        rnd = self.round_mask(mask, r)
        if not rnd:
            return False
        if c.is_supermajority(self.creators_in(rnd, c)):
            return True
        if round_in_wave(r) != 1 or not c.participants:
            return False
        wave = wave_of(r)
        if rnd & self.creator_masks.get(c.leader(wave), 0):
            return True
        return self.quiescent_in(mask, wave - 1, c)

    def final_in(self, mask: int, wave: int, c: Constitution) -> Optional[int]:
        """The first-round block final in wave ``wave`` of view ``mask``."""
        if wave == 0:
            g = self.round_mask(mask, 0)
            return bit_list(g)[0] if g else None
        first = first_round_of(wave)
        thirds = self.round_mask(mask, first + 2)
        if not thirds or not c.is_supermajority(self.creators_in(thirds, c)):
            return None
        by_target: dict[int, int] = {}
        for x in bit_list(thirds):
            for t in self.ratified_targets(x):
                by_target[t] = by_target.get(t, 0) | (1 << x)
        found = None
        for t in sorted(by_target, key=lambda t: self.key[t]):
            if (mask >> t) & 1 and c.is_supermajority(self.creators_in(by_target[t], c)):
                if found is None:
                    found = t
        return found

    def quiescent_in(self, mask: int, wave: int, c: Constitution) -> bool:
        if wave == 0:
            return True
        b = self.final_in(mask, wave, c)
        if b is None:
            return False
        first = first_round_of(wave)
        wave_mask = 0
        for d in range(first, first + 3):
            wave_mask |= self.round_mask(mask, d)
        if wave_mask & self.payload_mask & ~(1 << b):
            return False
        # an empty block of an earlier round that b missed competes with
        # nothing and carries nothing left to order
        earlier = 0
        for d in range(min(self.depth[b], len(self.depth_masks))):
            earlier |= self.depth_masks[d]
        unseen = mask & ~self.closure[b]
        if unseen & earlier & self.payload_mask:
            return False
        others = unseen & ~earlier
        closure = self.closure
        for x in bit_list(others):
            if not (closure[x] >> b) & 1:
                return False
        return True

    # -- intrinsic (closure-only) properties, memoised

    def is_valid(self, i: int) -> bool:
        v = self._valid.get(i)
        if v is None:
            d = self.depth[i]
            if d == 0:
                v = is_genesis_block(self.blocks[i])
            else:
                v = self.advanced_in(self.closure[i], d - 1, self.constitution_of(i))
            self._valid[i] = v
        return v

    def endorsed_target(self, i: int) -> Optional[int]:
        """The first-round block endorsed by second-round block ``i``, if any."""
        if i in self._endorsed:
            return self._endorsed[i]
        d = self.depth[i]
        target = None
        if d > 0 and round_in_wave(d) == 2:
            c = self.constitution_of(i)
            mask = self.closure[i]
            wave = wave_of(d)
            approved = [x for x in bit_list(self.round_mask(mask, d - 1)) if self.approves(i, x)]
            if self.quiescent_in(mask, wave - 1, c):
                if len(approved) == 1:
                    target = approved[0]
            elif c.participants:
                leader = c.leader(wave)
                for x in approved:
                    if self.creator[x] == leader:
                        target = x
                        break
        self._endorsed[i] = target
        return target

    def ratified_targets(self, i: int) -> frozenset:
        """First-round blocks ratified by third-round block ``i``."""
        got = self._ratified.get(i)
        if got is not None:
            return got
        d = self.depth[i]
        out: set[int] = set()
        if d > 0 and round_in_wave(d) == 3:
            c = self.constitution_of(i)
            groups: dict[int, int] = {}
            for y in bit_list(self.round_mask(self.closure[i], d - 1)):
                t = self.endorsed_target(y)
                if t is not None and self.approves(i, y):
                    groups[t] = groups.get(t, 0) | (1 << y)
            for t, endorsers in groups.items():
                if c.is_supermajority(self.creators_in(endorsers, c)):
                    out.add(t)
        got = frozenset(out)
        self._ratified[i] = got
        return got

    def latest_ratified_below(self, i: int) -> Optional[int]:
        """Deepest block other than ``i`` that is ratified in the closure of ``i``."""
        mask = self.closure[i]
        d = self.depth[i]
        for wave in range(wave_of(d), 0, -1):
            third = first_round_of(wave) + 2
            if third > d:
                continue
            targets: set[int] = set()
            for x in bit_list(self.round_mask(mask, third)):
                targets |= self.ratified_targets(x)
            targets.discard(i)
            if targets:
                return max(targets, key=lambda t: self.key[t])
        return None

    def xsort(self, b: int, base_mask: int, order_key: Callable[["BlockStore", int], tuple] = default_order_key) -> list[int]:
        """Non-empty blocks of ``[b]`` outside ``base_mask`` approved by ``b``, in order."""
        cand = self.closure[b] & ~base_mask & self.payload_mask
        picked = [x for x in bit_list(cand) if self.approves(b, x)]
        picked.sort(key=lambda x: order_key(self, x))
        return picked

    def tau_chain(self, i: int) -> tuple[Optional[int], tuple[int, ...]]:
        got = self._tau.get(i)
        if got is None:
            # walk down the ratified chain iteratively to avoid deep recursion
            pending = []
            j: Optional[int] = i
            while j is not None and j not in self._tau:
                pending.append(j)
                j = self.latest_ratified_below(j)
            for j in reversed(pending):
                parent = self.latest_ratified_below(j)
                base = self.closure[parent] if parent is not None else 0
                self._tau[j] = (parent, tuple(self.xsort(j, base)))
            got = self._tau[i]
        return got

    def tau_indices(self, i: int) -> list[int]:
        segments = []
        j: Optional[int] = i
        while j is not None:
            parent, seg = self.tau_chain(j)
            segments.append(seg)
            j = parent
        out: list[int] = []
        for seg in reversed(segments):
            out.extend(seg)
        return out


# ---------------------------------------------------------------- blocklace


@dataclass(frozen=True)
class FinalityStatus:
    ratifiers: frozenset
    is_ratified: bool
    is_final: bool


class Blocklace:
    """A closed set of blocks of one epoch, backed by a shared store."""

    def __init__(self, genesis: Block, store: Optional[BlockStore] = None) -> None:
        if not is_genesis_block(genesis):
            raise ValueError("a blocklace starts from a constitutional genesis block")
        self.store = store if store is not None else BlockStore()
        self.genesis = genesis
        self.genesis_index = self.store.intern(genesis)
        self.constitution: Constitution = self.store.constitution_of(self.genesis_index)
        self.mask = 1 << self.genesis_index
        self.max_depth = 0
        self._strict_by_depth: list[int] = [0]
        self._max_advanced: Optional[tuple[int, int]] = None
        self._count = 1

    # -- membership

    def __contains__(self, digest: BlockId) -> bool:
        i = self.store.index.get(digest)
        return i is not None and bool((self.mask >> i) & 1)

    def __len__(self) -> int:
        return self._count

    def has_index(self, i: int) -> bool:
        return bool((self.mask >> i) & 1)

    def indices(self) -> list[int]:
        return bit_list(self.mask)

    def blocks(self) -> list[Block]:
        return [self.store.blocks[i] for i in bit_list(self.mask)]

    def block(self, digest: BlockId) -> Block:
        return self.store.blocks[self._idx(digest)]

    def _idx(self, digest: BlockId) -> int:
        i = self.store.index.get(digest)
        if i is None or not (self.mask >> i) & 1:
            raise KeyError(digest.hex())
        return i

    def missing_refs(self, block: Block) -> list[BlockId]:
        return sorted(r for r in block.refs if r not in self)

    def can_add(self, block: Block) -> bool:
        return all(r in self for r in block.refs)

    def add(self, block: Block) -> bool:
        """Insert ``block``; returns False (and leaves B unchanged) if it is invalid.

        Raises ``ValueError`` if a reference would dangle.
        """
        if block.digest in self:
            return True
        if block.epoch != self.genesis.digest or not block.is_ordinary or block.is_initial:
            return False
        for r in block.refs:
            if r not in self:
                raise ValueError(f"dangling reference {r.hex()[:8]}")
        st = self.store
        i = st.intern(block)
        if not st.is_valid(i):
            return False
        self.mask |= 1 << i
        self._count += 1
        d = st.depth[i]
        while len(self._strict_by_depth) <= d:
            self._strict_by_depth.append(0)
        self._strict_by_depth[d] |= st.closure[i] & ~(1 << i)
        if d > self.max_depth:
            self.max_depth = d
        return True

    # -- relations

    def closure(self, digest: BlockId) -> list[BlockId]:
        st = self.store
        return [st.blocks[j].digest for j in bit_list(st.closure[self._idx(digest)])]

    def observes(self, a: BlockId, b: BlockId) -> bool:
        return self.store.observes(self._idx(a), self._idx(b))

    def approves(self, a: BlockId, b: BlockId) -> bool:
        return self.store.approves(self._idx(a), self._idx(b))

    def depth(self, digest: BlockId) -> int:
        return self.store.depth[self._idx(digest)]

    def depth_round_wave(self, digest: BlockId) -> tuple[int, int, RoundKind]:
        d = self.depth(digest)
        return d, wave_of(d), RoundKind(round_in_wave(d))

    def round_indices(self, r: int) -> list[int]:
        return bit_list(self.store.round_mask(self.mask, r))

    def round_blocks(self, r: int) -> list[Block]:
        return [self.store.blocks[i] for i in self.round_indices(r)]

    # -- structure

    def is_advanced(self, r: int) -> bool:
        return self.store.advanced_in(self.mask, r, self.constitution)

    def max_advanced_round(self) -> int:
        cached = self._max_advanced
        if cached is not None and cached[0] == self.mask:
            return cached[1]
        best = 0
        for r in range(self.max_depth, 0, -1):
            if self.is_advanced(r):
                best = r
                break
        self._max_advanced = (self.mask, best)
        return best

    def endorses(self, b2: BlockId, b1: BlockId) -> bool:
        i2, i1 = self._idx(b2), self._idx(b1)
        return self.store.endorsed_target(i2) == i1

    def finality_status(self, b1: BlockId) -> FinalityStatus:
        st = self.store
        i = self._idx(b1)
        d = st.depth[i]
        if d == 0:
            return FinalityStatus(frozenset(), True, True)
        if round_in_wave(d) != 1:
            return FinalityStatus(frozenset(), False, False)
        ratifiers = [x for x in bit_list(st.round_mask(self.mask, d + 2)) if i in st.ratified_targets(x)]
        rmask = 0
        for x in ratifiers:
            rmask |= 1 << x
        final = bool(ratifiers) and self.constitution.is_supermajority(st.creators_in(rmask, self.constitution))
        return FinalityStatus(frozenset(st.blocks[x].digest for x in ratifiers), bool(ratifiers), final)

    def final_block(self, wave: int) -> Optional[Block]:
        i = self.store.final_in(self.mask, wave, self.constitution)
        return None if i is None else self.store.blocks[i]

    def final_index(self, wave: int) -> Optional[int]:
        return self.store.final_in(self.mask, wave, self.constitution)

    def is_quiescent_wave(self, wave: int) -> bool:
        return self.store.quiescent_in(self.mask, wave, self.constitution)

    def ratified_blocks(self, wave: int) -> list[Block]:
        st = self.store
        targets: set[int] = set()
        for x in bit_list(st.round_mask(self.mask, first_round_of(wave) + 2)):
            targets |= st.ratified_targets(x)
        return [st.blocks[t] for t in sorted(targets, key=lambda t: st.key[t])]

    def tau(self, digest: BlockId) -> list[BlockId]:
        st = self.store
        return [st.blocks[j].digest for j in st.tau_indices(self._idx(digest))]

    def tips_of_prefix(self, k: int) -> list[BlockId]:
        """Tips of ``B_k``, the blocks of depth at most ``k``."""
        st = self.store
        prefix = 0
        observed = 0
        for d in range(0, min(k, self.max_depth) + 1):
            prefix |= st.round_mask(self.mask, d)
            observed |= self._strict_by_depth[d]
        return sorted(st.blocks[j].digest for j in bit_list(prefix & ~observed))

    def tips(self) -> list[BlockId]:
        return self.tips_of_prefix(self.max_depth)


# ---------------------------------------------------------------- functional API


def observes(B: Blocklace, a: BlockId, b: BlockId) -> bool:
    return B.observes(a, b)


def approves(B: Blocklace, a: BlockId, b: BlockId) -> bool:
    return B.approves(a, b)


def depth_round_wave(B: Blocklace, b: BlockId) -> tuple[int, int, RoundKind]:
    return B.depth_round_wave(b)


def is_advanced(B: Blocklace, r: int) -> bool:
    return B.is_advanced(r)


def is_valid_block(block: Block, closure_of_block: Blocklace) -> bool:
    """Validity of ``block`` given a blocklace holding its closure."""
    if is_genesis_block(block):
        return True
    if block.is_initial or not block.is_ordinary:
        return False
    if not closure_of_block.can_add(block):
        return False
    st = closure_of_block.store
    if block.epoch != closure_of_block.genesis.digest:
        return False
    return st.is_valid(st.intern(block))


def endorses(B: Blocklace, b2: BlockId, b1: BlockId) -> bool:
    return B.endorses(b2, b1)


def finality_status(B: Blocklace, b1: BlockId) -> FinalityStatus:
    return B.finality_status(b1)


def is_quiescent_wave(B: Blocklace, k: int) -> bool:
    return B.is_quiescent_wave(k)


def tau(B: Blocklace, b: BlockId) -> list[BlockId]:
    return B.tau(b)


def tips(X: Iterable[Block]) -> set[BlockId]:
    """The blocks of ``X`` not observed by any other block of ``X``.

    Observation is followed through references among the blocks of ``X``
    only, so ``X`` need not be closed.
    """
    blocks = {b.digest: b for b in X}
    reach: dict[BlockId, frozenset] = {}

    def above(d: BlockId) -> frozenset:
        # blocks of X strictly observed by d
        got = reach.get(d)
        if got is None:
            acc: set[BlockId] = set()
            stack = [r for r in blocks[d].refs if r in blocks]
            while stack:
                r = stack.pop()
                if r in acc:
                    continue
                acc.add(r)
                stack.extend(x for x in blocks[r].refs if x in blocks)
            got = frozenset(acc)
            reach[d] = got
        return got

    observed: set[BlockId] = set()
    for d in blocks:
        observed |= above(d)
    return set(blocks) - observed
