from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from support import Net, const
from wavelace.blocklace import Block, Inform, Transactions, make_block
from wavelace.engine import Agent, OutputKind, leader_of
from wavelace.governance import found_instance


def feed_all(period: int = 1, stop: int = 10**9, who=None):
    """A load function: every agent (or ``who``) inputs one transaction per ``period`` ticks."""
    def load(net: Net) -> None:
        if net.now % period == 0 and net.now < stop:
            for a in who or sorted(net.agents):
                net.input(a, f"{a}@{net.now}".encode())
    return load


class TestLeader:
    def test_round_robin_over_sorted_participants(self):
        parts = ("p3", "p1", "p2")
        assert [leader_of(parts, d) for d in (1, 4, 7, 10)] == ["p1", "p2", "p3", "p1"]

    @pytest.mark.parametrize("depth", [0, 2, 3, 5, 6])
    def test_rejects_non_first_round(self, depth):
        with pytest.raises(ValueError):
            leader_of(("p1",), depth)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            leader_of((), 1)

    @given(st.integers(1, 9), st.integers(1, 6))
    def test_every_agent_leads_equally(self, n, k):
        parts = [f"a{i}" for i in range(n)]
        counts = Counter(leader_of(parts, 3 * w - 2) for w in range(1, n * k + 1))
        assert counts == {p: k for p in parts}

    def test_matches_constitution(self):
        c = const(5)
        assert all(leader_of(c.participants, 3 * w - 2) == c.leader(w) for w in range(1, 20))


class TestSingleTransaction:
    def test_issue_is_immediate_and_final_three_ticks_later(self):
        net = Net()
        net.input("p3", b"x")
        net.run(10)
        issue = net.of("issue", "p3")[0]
        assert issue[0] == 0 and issue[3]["depth"] == 1 and issue[3]["tag"] == "TRANSACTIONS"
        finals = net.of("final")
        assert {e[1] for e in finals} == {"p1", "p2", "p3", "p4"}
        assert all(e[0] == 3 and e[3]["block"] == issue[3]["block"] for e in finals)
        assert all(net.outputs(a) == [b"x"] for a in net.agents)

    def test_message_count(self):
        # one lone proposer round, then two full rounds: 3 + 2 n (n - 1)
        for n in (4, 5, 7):
            net = Net(const(n))
            net.input("p2", b"x")
            net.run(20)
            assert len(net.sent) == (n - 1) + 2 * n * (n - 1)

    def test_rests_without_input(self):
        net = Net()
        net.run(50)
        assert net.sent == [] and net.of("issue") == []

    def test_rests_after_one_wave(self):
        net = Net()
        net.input("p1", b"x")
        net.run(60)
        assert max(t for t, _ in net.sent) == 2
        assert all(e[3]["depth"] <= 3 for e in net.of("issue"))

    def test_output_items_carry_epoch(self):
        net = Net()
        net.input("p1", b"x")
        net.run(5)
        first, item = net.agents["p4"].state.output
        assert first.kind is OutputKind.NEW_CONSTITUTION and first.epoch_index == 1
        assert item.kind is OutputKind.TRANSACTION and item.epoch_index == 1 and item.value == b"x"


class TestLoad:
    def test_outputs_identical_and_complete(self):
        net = Net()
        net.run(40, feed_all(stop=20))
        net.run(80)
        ref = net.outputs("p1")
        assert len(ref) == len(set(ref)) == 4 * 20
        assert all(net.outputs(a) == ref for a in net.agents)

    def test_formal_leaders_drive_busy_waves(self):
        net = Net()
        net.run(30, feed_all())
        first_rounds = [e for e in net.of("issue") if e[3]["depth"] % 3 == 1 and e[3]["depth"] > 3]
        leaders = {e[3]["depth"]: e[1] for e in first_rounds if e[1] == net.c.leader((e[3]["depth"] + 2) // 3)}
        assert len(leaders) >= 5

    def test_no_duplicate_output_when_rerun(self):
        net = Net()
        net.run(20, feed_all(stop=10))
        a = net.agents["p2"]
        before = list(a.state.output)
        a.emit_output(net.now)
        a.emit_output(net.now)
        assert a.state.output == before

    def test_good_case_has_no_control_messages(self):
        net = Net()
        net.run(40, feed_all(stop=30))
        net.run(60)
        assert not net.of("nack") and not net.of("inform")


class TestTimeouts:
    def test_silent_leader_waits_nine_delta(self):
        for delta in (1, 2):
            net = Net(const(4, "5/8", delta))
            net.silent.add("p2")  # p2 leads wave 2
            net.run(80, feed_all(who=["p1", "p3", "p4"], stop=40))
            adv = {(e[1], e[3]["round"]): e[0] for e in net.of("advance")}
            depth4 = [e for e in net.of("issue") if e[3]["depth"] == 4 and e[1] != "p2"]
            assert depth4
            for t, who, _, _ in depth4:
                assert t - adv[(who, 3)] == 9 * delta

    def test_honest_leader_does_not_wait(self):
        net = Net()
        net.run(20, feed_all(stop=20))
        adv = {(e[1], e[3]["round"]): e[0] for e in net.of("advance")}
        lead = [e for e in net.of("issue", "p2") if e[3]["depth"] == 4]
        assert lead and lead[0][0] == adv[("p2", 3)]

    def test_inform_after_two_delta(self):
        net = Net()
        net.silent.add("p2")
        net.run(30, feed_all(who=["p1", "p3", "p4"], stop=30))
        informs = net.of("inform")
        assert informs and all(e[3]["to"] == "p2" for e in informs[:3])
        adv = {(e[1], e[3]["round"]): e[0] for e in net.of("advance")}
        for t, who, _, f in informs:
            if f["round"] == 4:
                assert t - adv[(who, 3)] == 2


class TestReceive:
    def setup_method(self):
        self.c = const()
        self.founding = found_instance("t", self.c)
        self.agents = {a: Agent(a, self.founding) for a in self.c.participants}
        for a in self.agents.values():
            a.drain()
            a.drain_events()
        self.g = self.agents["p1"].epoch.genesis.digest

    @staticmethod
    def proposal(agent, recipient):
        msgs = agent.on_input(b"x", 0)
        return next(m for m in msgs if m.recipient == recipient and m.block.payload.tag.name == "TRANSACTIONS")

    def test_missing_refs_nacked_after_delta_then_forwarded(self):
        p1, p2, p3 = (self.agents[x] for x in ("p1", "p2", "p3"))
        b1 = next(m.block for m in p1.on_input(b"x", 0) if m.block.payload.tag.name == "TRANSACTIONS")
        b2 = next(m.block for m in p2.on_receive(b1, "p1", 1) if m.recipient == "p3")
        assert b2.refs == frozenset({b1.digest})
        assert p3.on_receive(b2, "p2", 1) == []
        assert p3.on_timer(1) == []
        msgs = p3.on_timer(2)
        assert [(m.recipient, m.block.payload.tag.name) for m in msgs] == [("p2", "NACK")]
        assert p3.on_timer(5) == []  # one NACK per pending block
        fwd = p2.on_receive(msgs[0].block, "p3", 3)
        assert [m.block.digest for m in fwd] == [b1.digest]
        p3.on_receive(b1, "p2", 4)
        assert b2.digest in p3.epoch.blocklace

    def test_bad_signature_dropped(self):
        p1, p2 = self.agents["p1"], self.agents["p2"]
        m = self.proposal(p1, "p2")
        b = m.block
        forged = Block(b.digest, b.creator, Transactions((b"y",)), b.refs, b.epoch, b.signature)
        p2.on_receive(forged, "p1", 1)
        assert [f["reason"] for _, k, f in p2.drain_events() if k == "drop"] == ["bad-signature"]

    def test_non_member_dropped(self):
        p2 = self.agents["p2"]
        blk = make_block("z9", Transactions((b"x",)), [self.g], self.g)
        p2.on_receive(blk, "z9", 1)
        assert [f["reason"] for _, k, f in p2.drain_events() if k == "drop"] == ["non-member"]
        assert blk.digest not in p2.epoch.blocklace

    def test_inform_with_unknown_refs_nacked_once(self):
        p1, p4 = self.agents["p1"], self.agents["p4"]
        m = self.proposal(p1, "p2")
        inform = make_block("p1", Inform(4), [m.block.digest], self.g)
        first = p4.on_receive(inform, "p1", 1)
        again = p4.on_receive(inform, "p1", 2)
        assert [x.block.payload.tag.name for x in first] == ["NACK"] and again == []

    def test_inform_with_known_refs_silent(self):
        p1, p4 = self.agents["p1"], self.agents["p4"]
        m = self.proposal(p1, "p4")
        p4.on_receive(m.block, "p1", 1)
        p4.drain()
        inform = make_block("p1", Inform(4), [m.block.digest], self.g)
        assert [x for x in p4.on_receive(inform, "p1", 2) if x.block.payload.tag.name == "NACK"] == []


class TestOrderKeyMutation:
    def test_diverging_tie_break_breaks_consistency(self):
        from wavelace.simnet import check_invariants, run
        from wavelace.harness import parse_scenario
        from wavelace.harness.corpus import bundled_corpus

        loaded = parse_scenario(bundled_corpus() / "good-case-high.yaml")
        sim_trace = run(loaded.scenario, 0)
        assert check_invariants(sim_trace, ["consistency"]).ok

        from wavelace.simnet import Simulator

        sim = Simulator(loaded.scenario, 0)
        sim.agents[("main", "p3")].order_key = lambda st, x: (st.key[x][0], bytes(255 - c for c in st.blocks[x].digest))
        report = check_invariants(sim.run(), ["consistency"])
        (bad,) = report.failures()
        assert "p3" in bad.pointer["agents"] and bad.pointer["index"] >= 0
