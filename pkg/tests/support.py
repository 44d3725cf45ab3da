"""Shared builders for hand-made and randomly generated blocklaces."""
from __future__ import annotations

import random
from fractions import Fraction
from typing import Optional

from wavelace.blocklace import (
    EMPTY,
    Block,
    Blocklace,
    BlockStore,
    Constitution,
    Transactions,
    make_block,
    make_genesis,
    round_in_wave,
    wave_of,
)
from wavelace.governance import found_instance


def const(n: int = 4, sigma: str | Fraction = "5/8", delta: int = 1) -> Constitution:
    return Constitution(tuple(f"p{i}" for i in range(1, n + 1)), Fraction(sigma), delta)


def txs(*items: str) -> Transactions:
    return Transactions(tuple(x.encode() for x in items))


class Hand:
    """Builds a blocklace block by block; ``add`` returns the new digest."""

    def __init__(self, c: Optional[Constitution] = None, instance: str = "t") -> None:
        self.c = c or const()
        self.genesis = make_genesis(found_instance(instance, self.c))
        self.store = BlockStore()
        self.B = Blocklace(self.genesis, self.store)
        self.g = self.genesis.digest

    def make(self, creator: str, refs, payload=EMPTY) -> Block:
        return make_block(creator, payload, refs, self.g)

    def add(self, creator: str, refs, payload=EMPTY, expect_valid: bool = True) -> bytes:
        b = self.make(creator, refs, payload)
        ok = self.B.add(b)
        assert ok == expect_valid, f"validity of {b!r} is {ok}"
        return b.digest

    def round(self, refs, creators=None, payloads=None) -> list[bytes]:
        """One block per creator, all referencing ``refs``."""
        creators = creators or list(self.c.participants)
        payloads = payloads or {}
        return [self.add(p, refs, payloads.get(p, EMPTY)) for p in creators]


# ---------------------------------------------------------------- random blocklaces


def random_blocklace(
    rng: random.Random,
    n: int = 4,
    sigma: str = "5/8",
    waves: int = 12,
    equivocator: Optional[str] = None,
    p_skip: float = 0.15,
    p_payload: float = 0.5,
    p_equivocate: float = 0.3,
    quiet: bool = False,
) -> tuple[Hand, list[Block], list[tuple[Block, Block]]]:
    """A valid blocklace grown round by round with random references.

    Every block references a random subset of the previous round that
    keeps the round advanced in its closure, plus now and then an older
    block.  ``equivocator`` sometimes issues two blocks in one round with
    different reference sets.  Returns the builder, the blocks in insertion
    order, and the equivocating pairs.  With ``quiet`` only lone
    spontaneous proposers carry payload (and rarely anyone else), so
    quiescent waves and the leaderless path show up.
    """
    h = Hand(const(n, sigma))
    c = h.c
    parts = list(c.participants)
    order: list[Block] = []
    pairs: list[tuple[Block, Block]] = []
    prev: list[Block] = [h.genesis]
    older: list[Block] = []
    need = c._quorum  # distinct creators needed for an advanced round
    for d in range(1, 3 * waves + 1):
        layer: list[Block] = []
        sparse = round_in_wave(d) == 1 and rng.random() < 0.5 and h.B.is_quiescent_wave(wave_of(d) - 1)
        if sparse:
            # a lone spontaneous proposer after a quiescent wave
            creators = [rng.choice([p for p in parts if p != equivocator])]
        else:
            creators = [p for p in parts if rng.random() >= p_skip]
            if len(creators) < need:
                creators = sorted(rng.sample(parts, need))
        for p in creators:
            copies = 2 if p == equivocator and rng.random() < p_equivocate else 1
            made: list[Block] = []
            for k in range(copies):
                refs = _pick_refs(rng, prev, need, d, c, h)
                if older and rng.random() < 0.2:
                    refs.add(rng.choice(older).digest)
                chance = (0.8 if sparse else 0.03) if quiet else p_payload
                if rng.random() < chance:
                    payload = Transactions((f"{p}-{d}-{k}-{rng.randrange(10**6)}".encode(),))
                else:
                    payload = EMPTY
                b = h.make(p, refs, payload)
                if b.digest in h.B or not h.B.add(b):
                    continue
                made.append(b)
                order.append(b)
                layer.append(b)
            if len(made) == 2:
                pairs.append((made[0], made[1]))
        older.extend(prev)
        distinct = {b.creator for b in layer}
        if len(distinct) < need and not sparse:
            # keep the structure growing: top up with plain referencing blocks
            for p in parts:
                if p in distinct or p == equivocator:
                    continue
                refs = {b.digest for b in prev}
                b = h.make(p, refs, EMPTY)
                if b.digest not in h.B and h.B.add(b):
                    order.append(b)
                    layer.append(b)
                    distinct.add(p)
                if len(distinct) >= need:
                    break
        if not layer:
            break
        prev = layer
    return h, order, pairs


def _pick_refs(rng: random.Random, prev: list[Block], need: int, d: int, c: Constitution, h: Hand) -> set[bytes]:
    if d == 1:
        return {prev[0].digest}
    by_creator: dict[str, list[Block]] = {}
    for b in prev:
        by_creator.setdefault(b.creator, []).append(b)
    names = sorted(by_creator)
    leader_only = round_in_wave(d - 1) == 1 and rng.random() < 0.1
    if leader_only:
        lead = c.leader(wave_of(d - 1))
        if lead in by_creator:
            return {rng.choice(by_creator[lead]).digest}
    k = rng.randint(min(need, len(names)), len(names))
    chosen = rng.sample(names, k)
    refs: set[bytes] = set()
    for name in chosen:
        blocks = by_creator[name]
        if len(blocks) > 1 and rng.random() < 0.3:
            refs.update(b.digest for b in blocks)
        else:
            refs.add(rng.choice(blocks).digest)
    return refs


def final_order(B: Blocklace) -> list[bytes]:
    """The order of the deepest final block, or [] when nothing is final."""
    for w in range(wave_of(B.max_depth), 0, -1):
        b = B.final_block(w)
        if b is not None:
            return B.tau(b.digest)
    return []


def replay_orders(h: Hand, order: list[Block]) -> list[list[bytes]]:
    """Final-block orders after each insertion into a fresh blocklace."""
    B = Blocklace(h.genesis, h.store)
    out = []
    for b in order:
        assert B.add(b)
        out.append(final_order(B))
    return out


def tau_case(seed: int) -> tuple[Hand, list[Block], list[tuple[Block, Block]]]:
    """The random blocklace used for order checks, fully determined by ``seed``."""
    rng = random.Random(seed)
    return random_blocklace(
        rng,
        waves=rng.randint(1, 12),
        equivocator=rng.choice([None, "p1", "p2", "p3", "p4"]),
        p_equivocate=rng.choice([0.2, 0.5]),
        quiet=rng.random() < 0.4,
    )


# ---------------------------------------------------------------- a lockstep network


class Net:
    """Agents on one store, every message delivered exactly ``delay`` ticks later.

    ``silent`` senders have their outbox discarded; ``cut`` holds (sender,
    recipient) pairs whose ordinary blocks are dropped.  Every agent gets a
    timer call on each tick.
    """

    def __init__(self, c: Optional[Constitution] = None, delay: int = 1, instance: str = "t", extra=()) -> None:
        from wavelace.engine import Agent

        self.c = c or const()
        self.founding = found_instance(instance, self.c)
        self.store = BlockStore()
        names = list(self.c.participants) + list(extra)
        self.agents = {a: Agent(a, self.founding, self.store) for a in names}
        self.delay = delay
        self.now = 0
        self.queue: list = []
        self.sent: list = []
        self.silent: set[str] = set()
        self.cut: set[tuple[str, str]] = set()
        self.events: list[tuple[int, str, str, dict]] = []
        self._seq = 0
        for a in names:
            self._absorb(a, self.agents[a].drain())

    def _absorb(self, who: str, msgs) -> None:
        import heapq

        for t, kind, fields in self.agents[who].drain_events():
            self.events.append((t, who, kind, fields))
        if who in self.silent:
            return
        for m in msgs:
            if m.block.is_ordinary and (m.sender, m.recipient) in self.cut:
                continue
            self.sent.append((self.now, m))
            heapq.heappush(self.queue, (self.now + self.delay, self._seq, m))
            self._seq += 1

    def input(self, who: str, tx: bytes) -> None:
        self._absorb(who, self.agents[who].on_input(tx, self.now))

    def tick(self) -> None:
        import heapq

        self.now += 1
        while self.queue and self.queue[0][0] <= self.now:
            _, _, m = heapq.heappop(self.queue)
            self._absorb(m.recipient, self.agents[m.recipient].on_receive(m.block, m.sender, self.now))
        for a in sorted(self.agents):
            self._absorb(a, self.agents[a].on_timer(self.now))

    def run(self, until: int, load=None) -> None:
        """Tick to ``until``; ``load(net)`` is called before each tick."""
        while self.now < until:
            if load is not None:
                load(self)
            self.tick()

    def of(self, kind: str, who: Optional[str] = None) -> list[tuple[int, str, str, dict]]:
        return [e for e in self.events if e[2] == kind and (who is None or e[1] == who)]

    def outputs(self, who: str) -> list[bytes]:
        return [it.value for it in self.agents[who].state.output if isinstance(it.value, bytes)]
