from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from support import const
from wavelace.blocklace import EMPTY, Transactions, make_block
from wavelace.engine import Agent, OutputItem, OutputKind
from wavelace.governance import found_instance
from wavelace.simnet import (
    INVARIANTS,
    AdversaryContext,
    AdversarySpec,
    Behavior,
    Expectations,
    InstanceSpec,
    NetworkModel,
    Outage,
    Scenario,
    Simulator,
    adversary_step,
    check_invariants,
    run,
)

C4 = const(4, "5/8", 1)


def scenario(workload=(), adversaries=(), network=None, horizon=60, outages=(), c=C4, expect=None, name="s"):
    inst = InstanceSpec("main", c, workload=list(workload), adversaries=list(adversaries))
    return Scenario(name, [inst], network or NetworkModel(0, 1), horizon, list(outages), expect or Expectations())


class TestBasics:
    def test_empty_workload_is_silent(self):
        tr = run(scenario(horizon=500), 0)
        assert tr.events("send") == [] and tr.in_flight_at_horizon == 0

    def test_single_transaction_final_three_ticks_after_issue(self):
        tr = run(scenario([(5, "p2", b"x")]), 0)
        (issued,) = [r for r in tr.events("issue") if r[4]["depth"] == 1]
        finals = tr.events("final")
        assert {r[2] for r in finals} == set(C4.participants)
        assert all(r[0] == issued[0] + 3 for r in finals)
        assert all(tr.outputs("main", a)[-1] == OutputItem(OutputKind.TRANSACTION, b"x", 1) for a in C4.participants)

    def test_same_seed_same_trace(self):
        sc = scenario([(t, "p1", f"t{t}".encode()) for t in range(0, 30, 3)], network=NetworkModel(10, 3, 12))
        assert run(sc, 7).text() == run(sc, 7).text()

    def test_seed_changes_delays(self):
        sc = scenario([(t, "p1", f"t{t}".encode()) for t in range(0, 30, 3)], network=NetworkModel(10, 3, 12))
        strip = lambda tr: tr.text().split("\n", 1)[1]
        assert strip(run(sc, 1)) != strip(run(sc, 2))

    def test_trace_lines_are_json_with_header(self):
        lines = run(scenario([(0, "p1", b"x")]), 3).text().splitlines()
        head = json.loads(lines[0])
        assert head == {"format": "wavelace-trace", "version": 1, "seed": 3, "scenario": "s"}
        recs = [json.loads(x) for x in lines[1:]]
        assert [r["n"] for r in recs] == list(range(len(recs)))
        assert all(set(r) >= {"t", "i", "a", "ev"} for r in recs)
        assert [r["t"] for r in recs] == sorted(r["t"] for r in recs)

    def test_sends_and_deliveries_pair_up(self):
        tr = run(scenario([(t, "p3", f"{t}".encode()) for t in range(10)]), 0)
        sends = sorted((r[2], r[4]["to"], r[4]["block"]) for r in tr.events("send"))
        delivers = sorted((r[4]["frm"], r[2], r[4]["block"]) for r in tr.events("deliver"))
        assert sends == delivers


class TestNetwork:
    @given(st.integers(0, 50), st.integers(1, 6), st.integers(1, 40), st.integers(0, 200), st.integers(0, 10**6))
    def test_delay_bounds(self, gst, dact, pre, now, seed):
        net = NetworkModel(gst, dact, pre)
        d = net.delay(random.Random(seed), now)
        assert d >= 1
        if now >= gst:
            assert d <= dact
        else:
            assert now + d <= gst + dact

    def test_pre_gst_delays_exceed_bound(self):
        tr = run(scenario([(t, "p1", f"{t}".encode()) for t in range(0, 60, 2)],
                          network=NetworkModel(80, 1, 25), horizon=200), 0)
        sent = {}
        lags = []
        for t, _, a, kind, f in tr.records:
            if kind == "send":
                sent.setdefault((a, f["to"], f["block"]), []).append(t)
            elif kind == "deliver":
                s = sent[(f["frm"], a, f["block"])].pop(0)
                lags.append((s, t - s))
        assert max(lag for s, lag in lags if s < 80) > 1
        assert all(lag <= 1 for s, lag in lags if s >= 80)
        assert all(s + lag <= 81 for s, lag in lags if s < 80)

    def test_outage_holds_events(self):
        out = Outage("p4", 0, 20, ordinary_extra=5)
        tr = run(scenario([(2, "p1", b"x"), (3, "p4", b"y")], outages=[out], horizon=100), 0)
        p4 = [r for r in tr.records if r[2] == "p4" and r[3] in ("deliver", "input")]
        assert p4 and min(r[0] for r in p4) >= 20
        (b1,) = [r[4]["block"] for r in tr.events("issue") if r[2] == "p1" and r[4]["depth"] == 1]
        # sent at 2, arrives inside the outage, held past its end by the extra
        assert [r[0] for r in p4 if r[3] == "deliver" and r[4]["block"] == b1 and r[4]["frm"] == "p1"] == [25]
        assert min(r[0] for r in p4 if r[3] == "input") == 20
        assert all(b"y" in [it.value for it in tr.outputs("main", a)] for a in C4.participants)


class TestAdversaries:
    def ctx(self, spec, now=0):
        founding = found_instance("main", C4)
        agent = Agent(spec.agent, founding)
        return agent, AdversaryContext(agent, now, spec, C4)

    def outbox(self, agent, tx=b"x"):
        return agent.on_input(tx, 0)

    def test_silent_drops_everything(self):
        spec = AdversarySpec("p1", Behavior.SILENT)
        agent, ctx = self.ctx(spec)
        assert adversary_step(spec, ctx, self.outbox(agent)) == []

    def test_behaviour_starts_late(self):
        spec = AdversarySpec("p1", Behavior.SILENT, start=10)
        agent, ctx = self.ctx(spec, now=3)
        msgs = self.outbox(agent)
        assert adversary_step(spec, ctx, msgs) == [(0, m) for m in msgs]

    def test_partial_keeps_only_allowed_recipients(self):
        spec = AdversarySpec("p1", Behavior.PARTIAL, ("p2",))
        agent, ctx = self.ctx(spec)
        kept = adversary_step(spec, ctx, self.outbox(agent))
        assert kept and {m.recipient for _, m in kept} == {"p2"}

    def test_equivocation_splits_recipients(self):
        spec = AdversarySpec("p1", Behavior.EQUIVOCATE, ("p2",))
        agent, ctx = self.ctx(spec)
        msgs = self.outbox(agent)
        out = adversary_step(spec, ctx, msgs)
        orig = {m.block.digest for m in msgs}
        for _, m in out:
            if m.recipient == "p2":
                assert m.block.digest in orig
            else:
                assert m.block.digest not in orig and m.block.creator == "p1"
        twins = {}
        for _, m in out:
            if m.recipient != "p2":
                twins.setdefault(m.block.refs, set()).add(m.block.digest)
        assert all(len(v) == 1 for v in twins.values())  # one sibling per block, shared by the group

    def test_slow_leader_delays_only_led_first_rounds(self):
        spec = AdversarySpec("p1", Behavior.SLOW_LEADER, extra_delay=7)
        agent, ctx = self.ctx(spec)
        out = adversary_step(spec, ctx, self.outbox(agent))
        st_ = agent.store
        for extra, m in out:
            d = st_.depth[st_.index[m.block.digest]]
            assert extra == (7 if d == 1 else 0)

    def test_fault_free_agents_are_correct(self):
        sc = scenario([(0, "p1", b"x")], adversaries=[AdversarySpec("p4", Behavior.SILENT)])
        tr = run(sc, 0)
        assert sorted(a for _, a in tr.correct) == ["p1", "p2", "p3"]


class TestScriptedNack:
    def test_withheld_block_recovered_within_three_delta(self):
        sc = scenario([(0, "p1", b"x")], adversaries=[AdversarySpec("p1", Behavior.PARTIAL, ("p2",))], horizon=40)
        tr = run(sc, 0)
        (b1,) = [r[4]["block"] for r in tr.events("issue") if r[2] == "p1" and r[4]["depth"] == 1]
        for a in ("p3", "p4"):
            first_dep = min(r[0] for r in tr.events("deliver") if r[2] == a)
            (acc,) = [r[0] for r in tr.events("accept") if r[2] == a and r[4]["block"] == b1]
            assert acc - first_dep == 3  # delta wait, NACK trip, forward trip
            assert [r[4]["to"] for r in tr.events("nack") if r[2] == a][0] == "p2"
        assert check_invariants(tr, ["consistency", "liveness"]).ok


class TestInvariants:
    def test_default_set_and_gating(self):
        sc = scenario([(0, "p1", b"x")], expect=Expectations(good_case=True, quiescent=True))
        rep = check_invariants(run(sc, 0))
        assert list(rep.results) == [
            "consistency", "validity", "ratified-uniqueness", "no-equivocation", "issuance",
            "good-case-silence", "quiescence",
        ]
        assert rep.ok

    def test_unknown_invariant(self):
        with pytest.raises(ValueError):
            check_invariants(run(scenario(), 0), ["nope"])

    def test_all_invariants_on_good_case(self):
        assert check_invariants(run(scenario([(0, "p1", b"x")]), 0), INVARIANTS).ok

    def test_silence_violated_under_silent_peer(self):
        sc = scenario([(t, a, f"{a}{t}".encode()) for t in range(0, 30, 2) for a in ("p1", "p3", "p4")],
                      adversaries=[AdversarySpec("p2", Behavior.SILENT)], horizon=150)
        rep = check_invariants(run(sc, 0), ["good-case-silence", "liveness"])
        assert not rep.results["good-case-silence"].ok
        assert rep.results["liveness"].ok

    def test_liveness_violated_when_horizon_short(self):
        sc = scenario([(0, "p1", b"x")], horizon=2)
        res = check_invariants(run(sc, 0), ["liveness"]).results["liveness"]
        assert not res.ok and res.pointer["missing"] == 1

    def test_quiescence_violated_mid_wave(self):
        sc = scenario([(t, "p1", f"{t}".encode()) for t in range(20)], horizon=10)
        assert not check_invariants(run(sc, 0), ["quiescence"]).ok

    def test_validity_violated_by_foreign_output(self):
        tr = run(scenario([(0, "p1", b"x")]), 0)
        tr.agents[("main", "p2")].state.output.append(OutputItem(OutputKind.TRANSACTION, b"z", 9))
        res = check_invariants(tr, ["validity"]).results["validity"]
        assert not res.ok and res.pointer["agent"] == "p2"

    def test_issuance_violated_when_tx_never_carried(self):
        tr = run(scenario([(0, "p1", b"x")]), 0)
        tr.inputs[("main", "p3")].append(b"ghost")
        assert not check_invariants(tr, ["issuance"]).ok

    def test_no_equivocation_detects_double_issue(self):
        tr = run(scenario([(0, "p1", b"x")]), 0)
        (t, iid, a, kind, f) = next(r for r in tr.events("issue") if r[2] == "p1")
        store = tr.stores["main"]
        blk = store.blocks[store.index[f["block"]]]
        twin = make_block("p1", Transactions((b"twin",)), blk.refs, blk.epoch)
        store.intern(twin)
        tr.records.append((t, iid, a, kind, dict(f, block=twin.digest)))
        assert not check_invariants(tr, ["no-equivocation"]).ok

    def test_byzantine_runs_safe(self):
        for behavior, group in ((Behavior.EQUIVOCATE, ("p2",)), (Behavior.PARTIAL, ("p2", "p3"))):
            sc = scenario([(t, a, f"{a}{t}".encode()) for t in range(0, 30, 2) for a in C4.participants],
                          adversaries=[AdversarySpec("p1", behavior, group)],
                          network=NetworkModel(0, 2), c=const(4, "5/8", 2), horizon=200)
            for seed in range(3):
                rep = check_invariants(run(sc, seed), ["consistency", "ratified-uniqueness", "liveness"])
                assert rep.ok, (behavior, seed, rep.failures())


class TestRawInjection:
    def test_malformed_block_dropped(self):
        sim = Simulator(scenario(horizon=20), 0)
        founding = sim.trace.founding["main"]
        g = sim.agents[("main", "p1")].epoch.genesis.digest
        good = make_block("p2", EMPTY, [g], g)
        bad = type(good)(good.digest, good.creator, Transactions((b"evil",)), good.refs, good.epoch, good.signature)
        sim.inject_raw(3, "main", "p2", "p1", bad)
        tr = sim.run()
        drops = [r[4]["reason"] for r in tr.events("drop") if r[2] == "p1"]
        assert drops == ["bad-signature"] and founding.index == 1
