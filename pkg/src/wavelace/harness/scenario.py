"""Scenario files: parsing and validation.

A scenario is a YAML (or JSON) document with ``schema: wavelace-scenario/1``.
A single-instance scenario may put the instance fields (``instance_id``,
``constitution``, ``workload`` ...) at top level; several instances go under
``instances``.  Validation collects every problem as a (field, reason) pair
instead of stopping at the first one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import yaml

from ..blocklace import Constitution
from ..governance import Vote
from ..simnet import (
    AdversarySpec,
    Behavior,
    Expectations,
    InstanceSpec,
    NetworkModel,
    Outage,
    Scenario,
)

SCHEMA = "wavelace-scenario/1"

_INSTANCE_KEYS = {
    "instance_id",
    "id",
    "constitution",
    "extra_agents",
    "workload",
    "votes",
    "vote_deadlines",
    "adversaries",
}
_TOP_KEYS = _INSTANCE_KEYS | {
    "schema",
    "name",
    "description",
    "seed",
    "seeds",
    "horizon",
    "network",
    "instances",
    "outages",
    "expect",
}


@dataclass(frozen=True)
class ValidationIssue:
    field: str
    reason: str

    def __str__(self) -> str:
        return f"{self.field}: {self.reason}"


class ScenarioError(ValueError):
    def __init__(self, issues: list[ValidationIssue]) -> None:
        self.issues = issues
        super().__init__("; ".join(str(i) for i in issues))


@dataclass
class LoadedScenario:
    """A validated scenario plus file-level settings the simulator does not need."""

    scenario: Scenario
    seeds: list[int]
    description: str = ""
    source: Optional[str] = None

    @property
    def name(self) -> str:
        return self.scenario.name

    def derived(self) -> dict[str, dict[str, Any]]:
        out = {}
        for inst in self.scenario.instances:
            c = inst.constitution
            out[inst.instance_id] = {"n": c.n, "sigma": str(c.sigma), "f": c.f, "delta": c.delta}
        return out


class _Collector:
    def __init__(self) -> None:
        self.issues: list[ValidationIssue] = []

    def add(self, where: str, reason: str) -> None:
        self.issues.append(ValidationIssue(where, reason))


def parse_fraction(value: Any) -> Fraction:
    """Exact rational from "5/8", 0.625 or 1; floats go through their decimal text."""
    if isinstance(value, bool):
        raise ValueError("not a number")
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def _int(col: _Collector, where: str, value: Any, minimum: Optional[int] = None) -> Optional[int]:
    if isinstance(value, bool) or not isinstance(value, int):
        col.add(where, "must be an integer")
        return None
    if minimum is not None and value < minimum:
        col.add(where, f"must be >= {minimum}")
        return None
    return value


def _sigma(col: _Collector, where: str, value: Any) -> Optional[Fraction]:
    try:
        s = parse_fraction(value)
    except (ValueError, ZeroDivisionError, TypeError):
        col.add(where, "must be a rational such as 5/8")
        return None
    if s >= 1:
        col.add(where, "sigma must be < 1")
        return None
    if s < Fraction(1, 2):
        col.add(where, "sigma must be >= 1/2")
        return None
    return s


def _agent_list(col: _Collector, where: str, value: Any) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(a, str) and a for a in value):
        col.add(where, "must be a list of non-empty agent ids")
        return []
    seen: set[str] = set()
    for a in value:
        if a in seen:
            col.add(where, f"duplicate agent id {a!r}")
        seen.add(a)
    return list(value)


def _constitution(col: _Collector, where: str, raw: Any) -> Optional[Constitution]:
    if not isinstance(raw, dict):
        col.add(where, "missing or not a mapping")
        return None
    parts = _agent_list(col, f"{where}.participants", raw.get("participants"))
    if not parts:
        col.add(f"{where}.participants", "must list at least one agent")
    sigma = _sigma(col, f"{where}.sigma", raw.get("sigma"))
    delta = _int(col, f"{where}.delta", raw.get("delta"), 1)
    if not parts or sigma is None or delta is None:
        return None
    return Constitution(tuple(parts), sigma, delta)


def _tx_bytes(value: Any) -> bytes:
    return value.encode() if isinstance(value, str) else bytes(value)


def _workload(col: _Collector, where: str, raw: Any, agents: set[str], horizon: int) -> list[tuple[int, str, bytes]]:
    out: list[tuple[int, str, bytes]] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        col.add(where, "must be a list")
        return out
    for k, item in enumerate(raw):
        w = f"{where}[{k}]"
        if not isinstance(item, dict):
            col.add(w, "must be a mapping")
            continue
        if "generate" in item:
            g = item["generate"]
            if not isinstance(g, dict):
                col.add(f"{w}.generate", "must be a mapping")
                continue
            every = _int(col, f"{w}.generate.every", g.get("every", 1), 1)
            start = _int(col, f"{w}.generate.start", g.get("start", 0), 0)
            stop = _int(col, f"{w}.generate.stop", g.get("stop", horizon), 0)
            batch = _int(col, f"{w}.generate.batch", g.get("batch", 1), 1)
            who = g.get("agents", sorted(agents))
            who = _agent_list(col, f"{w}.generate.agents", who)
            prefix = str(g.get("prefix", f"g{k}"))
            for a in who:
                if a not in agents:
                    col.add(f"{w}.generate.agents", f"unknown agent {a!r}")
            if None in (every, start, stop, batch):
                continue
            for t in range(start, stop, every):
                for a in who:
                    for j in range(batch):
                        out.append((t, a, f"{prefix}-{a}-{t}-{j}".encode()))
            continue
        t = _int(col, f"{w}.time", item.get("time"), 0)
        a = item.get("agent")
        if a not in agents:
            col.add(f"{w}.agent", f"unknown agent {a!r}")
            continue
        if "tx" not in item:
            col.add(f"{w}.tx", "missing")
            continue
        if t is not None:
            out.append((t, a, _tx_bytes(item["tx"])))
    return out


def _ballots(col: _Collector, where: str, raw: Any) -> dict[str, bool]:
    if raw is None:
        return {}
    if isinstance(raw, list):
        return {a: True for a in raw}
    if isinstance(raw, dict) and all(isinstance(v, bool) for v in raw.values()):
        return dict(raw)
    col.add(where, "must be a list of approved agents or an agent -> bool mapping")
    return {}


def _votes(col: _Collector, where: str, raw: Any, agents: set[str]) -> list[tuple[int, str, Vote]]:
    out: list[tuple[int, str, Vote]] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        col.add(where, "must be a list")
        return out
    for k, item in enumerate(raw):
        w = f"{where}[{k}]"
        if not isinstance(item, dict):
            col.add(w, "must be a mapping")
            continue
        t = _int(col, f"{w}.time", item.get("time"), 0)
        voter = item.get("voter")
        if voter not in agents:
            col.add(f"{w}.voter", f"unknown agent {voter!r}")
            continue
        holders = item.get("holders", item.get("holder", [voter]))
        if isinstance(holders, str):
            holders = [holders]
        holders = _agent_list(col, f"{w}.holders", holders)
        bad = [h for h in holders if h not in agents]
        for h in bad:
            col.add(f"{w}.holders", f"unknown agent {h!r}")
        seq = _int(col, f"{w}.seq", item.get("seq", 1), 0)
        sigma = None
        if "sigma" in item:
            sigma = _sigma(col, f"{w}.sigma", item["sigma"])
            if sigma is None:
                continue
        delta = None
        if "delta" in item:
            delta = _int(col, f"{w}.delta", item["delta"], 1)
            if delta is None:
                continue
        consent = item.get("consent", True)
        if not isinstance(consent, bool):
            col.add(f"{w}.consent", "must be a boolean")
            continue
        ballots = _ballots(col, f"{w}.ballots", item.get("ballots"))
        if t is None or seq is None or bad:
            continue
        vote = Vote.cast(voter, seq, ballots, consent, sigma, delta)
        for h in holders:
            out.append((t, h, vote))
    return out


def _adversaries(col: _Collector, where: str, raw: Any, agents: set[str]) -> list[AdversarySpec]:
    out: list[AdversarySpec] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        col.add(where, "must be a list")
        return out
    names = {b.value: b for b in Behavior}
    seen: set[str] = set()
    for k, item in enumerate(raw):
        w = f"{where}[{k}]"
        if not isinstance(item, dict):
            col.add(w, "must be a mapping")
            continue
        a = item.get("agent")
        if a not in agents:
            col.add(f"{w}.agent", f"unknown agent {a!r}")
            continue
        if a in seen:
            col.add(f"{w}.agent", f"agent {a!r} listed twice")
        seen.add(a)
        beh = names.get(item.get("behavior"))
        if beh is None:
            col.add(f"{w}.behavior", f"must be one of {', '.join(sorted(names))}")
            continue
        recips = item.get("recipients", [])
        recips = _agent_list(col, f"{w}.recipients", recips) if recips else []
        for r in recips:
            if r not in agents:
                col.add(f"{w}.recipients", f"unknown agent {r!r}")
        if beh in (Behavior.EQUIVOCATE, Behavior.PARTIAL) and not recips:
            col.add(f"{w}.recipients", f"required for {beh.value}")
        start = _int(col, f"{w}.start", item.get("start", 0), 0)
        extra = _int(col, f"{w}.extra_delay", item.get("extra_delay", 0), 0)
        if beh is Behavior.SLOW_LEADER and not extra:
            col.add(f"{w}.extra_delay", "required (> 0) for slow-leader")
        if start is None or extra is None:
            continue
        out.append(AdversarySpec(a, beh, tuple(recips), start, extra))
    return out


def _instance(col: _Collector, where: str, raw: dict, horizon: int) -> Optional[InstanceSpec]:
    iid = raw.get("instance_id", raw.get("id", "main"))
    if not isinstance(iid, str) or not iid:
        col.add(f"{where}.instance_id", "must be a non-empty string")
        return None
    c = _constitution(col, f"{where}.constitution", raw.get("constitution"))
    extra = _agent_list(col, f"{where}.extra_agents", raw.get("extra_agents", []))
    if c is None:
        return None
    for a in extra:
        if a in c.participants:
            col.add(f"{where}.extra_agents", f"{a!r} is already a founding participant")
    agents = set(c.participants) | set(extra)
    workload = _workload(col, f"{where}.workload", raw.get("workload"), agents, horizon)
    votes = _votes(col, f"{where}.votes", raw.get("votes"), agents)
    deadlines_raw = raw.get("vote_deadlines", [])
    deadlines: list[int] = []
    if not isinstance(deadlines_raw, list):
        col.add(f"{where}.vote_deadlines", "must be a list of times")
    else:
        for k, t in enumerate(deadlines_raw):
            v = _int(col, f"{where}.vote_deadlines[{k}]", t, 0)
            if v is not None:
                deadlines.append(v)
    advs = _adversaries(col, f"{where}.adversaries", raw.get("adversaries"), agents)
    return InstanceSpec(iid, c, tuple(extra), workload, votes, deadlines, advs)


def _expectations(col: _Collector, raw: Any) -> Expectations:
    if raw is None:
        return Expectations()
    if not isinstance(raw, dict):
        col.add("expect", "must be a mapping")
        return Expectations()
    known = {"good_case", "liveness", "amendment", "quiescent"}
    for k in raw:
        if k not in known:
            col.add(f"expect.{k}", "unknown expectation")
    vals = {}
    for k in known:
        v = raw.get(k, False)
        if not isinstance(v, bool):
            col.add(f"expect.{k}", "must be a boolean")
            v = False
        vals[k] = v
    return Expectations(**vals)


def scenario_from_dict(data: Any, source: Optional[str] = None) -> LoadedScenario:
    """Validate a decoded scenario document; raises :class:`ScenarioError`."""
    col = _Collector()
    if not isinstance(data, dict):
        raise ScenarioError([ValidationIssue("<document>", "must be a mapping")])
    if data.get("schema") != SCHEMA:
        col.add("schema", f"must be {SCHEMA!r}")
    for k in data:
        if k not in _TOP_KEYS:
            col.add(k, "unknown field")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        col.add("name", "must be a non-empty string")
        name = "unnamed"
    net_raw = data.get("network", {})
    if not isinstance(net_raw, dict):
        col.add("network", "must be a mapping")
        net_raw = {}
    gst = _int(col, "network.gst", net_raw.get("gst", 0), 0)
    dact = _int(col, "network.delta_actual", net_raw.get("delta_actual", 1), 1)
    pre = _int(col, "network.pre_gst_max_delay", net_raw.get("pre_gst_max_delay", dact or 1), 1)
    horizon = _int(col, "horizon", data.get("horizon"), 1)
    if horizon is not None and gst is not None and horizon <= gst:
        col.add("horizon", "must be greater than network.gst")
    h = horizon or 0

    instances: list[InstanceSpec] = []
    if "instances" in data:
        if any(k in data for k in _INSTANCE_KEYS):
            col.add("instances", "instance fields must not also appear at top level")
        raws = data["instances"]
        if not isinstance(raws, list) or not raws:
            col.add("instances", "must be a non-empty list")
            raws = []
        for k, raw in enumerate(raws):
            if not isinstance(raw, dict):
                col.add(f"instances[{k}]", "must be a mapping")
                continue
            for key in raw:
                if key not in _INSTANCE_KEYS:
                    col.add(f"instances[{k}].{key}", "unknown field")
            inst = _instance(col, f"instances[{k}]", raw, h)
            if inst is not None:
                instances.append(inst)
    else:
        inst = _instance(col, "<top>", data, h)
        if inst is not None:
            instances.append(inst)
    ids = [i.instance_id for i in instances]
    if len(set(ids)) != len(ids):
        col.add("instances", "duplicate instance ids")

    all_agents = set()
    for inst in instances:
        all_agents |= set(inst.constitution.participants) | set(inst.extra_agents)
    outages: list[Outage] = []
    for k, o in enumerate(data.get("outages", []) or []):
        w = f"outages[{k}]"
        if not isinstance(o, dict):
            col.add(w, "must be a mapping")
            continue
        a = o.get("agent")
        if a not in all_agents:
            col.add(f"{w}.agent", f"unknown agent {a!r}")
            continue
        s = _int(col, f"{w}.start", o.get("start"), 0)
        e = _int(col, f"{w}.end", o.get("end"), 0)
        x = _int(col, f"{w}.ordinary_extra", o.get("ordinary_extra", 0), 0)
        if s is not None and e is not None and e <= s:
            col.add(f"{w}.end", "must be after start")
            continue
        if None not in (s, e, x):
            outages.append(Outage(a, s, e, x))
    if len({o.agent for o in outages}) != len(outages):
        col.add("outages", "at most one outage per agent")

    expect = _expectations(col, data.get("expect"))
    for k, inst in enumerate(instances):
        c = inst.constitution
        if len(inst.adversaries) > c.f and (expect.liveness or expect.amendment):
            col.add(
                f"instances[{k}].adversaries" if "instances" in data else "adversaries",
                f"{len(inst.adversaries)} faulty agents exceed the tolerated f={c.f}",
            )
        if expect.good_case and inst.adversaries:
            col.add("expect.good_case", "a good-case scenario cannot have adversaries")
    if expect.good_case and (gst or 0) > 0:
        col.add("expect.good_case", "a good-case scenario needs gst = 0")
    if expect.good_case and outages:
        col.add("expect.good_case", "a good-case scenario cannot have outages")
    if dact is not None and instances and expect.good_case:
        for inst in instances:
            if dact > inst.constitution.delta:
                col.add("network.delta_actual", "must not exceed the constitution delta in a good case")

    seeds_raw = data.get("seeds", [data.get("seed", 0)])
    seeds: list[int] = []
    if not isinstance(seeds_raw, list) or not seeds_raw:
        col.add("seeds", "must be a non-empty list of integers")
    else:
        for k, s in enumerate(seeds_raw):
            v = _int(col, f"seeds[{k}]", s, 0)
            if v is not None:
                seeds.append(v)
    desc = data.get("description", "")
    if col.issues:
        raise ScenarioError(col.issues)
    assert gst is not None and dact is not None and pre is not None and horizon is not None
    sc = Scenario(name, instances, NetworkModel(gst, dact, pre), horizon, outages, expect)
    return LoadedScenario(sc, seeds, str(desc), source)


def load_document(path: str | Path) -> Any:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def parse_scenario(path: str | Path) -> LoadedScenario:
    try:
        data = load_document(path)
    except OSError as exc:
        raise ScenarioError([ValidationIssue(str(path), f"cannot read: {exc.strerror or exc}")]) from exc
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ScenarioError([ValidationIssue(str(path), f"malformed document: {exc}")]) from exc
    return scenario_from_dict(data, str(path))
