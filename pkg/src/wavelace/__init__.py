"""Blocklace consensus with dual-mode finality and democratic amendment, plus a simulator."""
from .blocklace import (
    Block,
    Blocklace,
    BlockStore,
    Constitution,
    Decision,
    EMPTY,
    Transactions,
    make_block,
    make_genesis,
)
from .engine import Agent, OutputItem, OutputKind
from .governance import (
    AmendmentDecision,
    Vote,
    VoteSetTransaction,
    amend_delta,
    amend_population,
    amend_sigma,
    found_instance,
    make_amendment_decision,
    validate_decision,
)
from .simnet import (
    AdversarySpec,
    Behavior,
    Expectations,
    InstanceSpec,
    NetworkModel,
    Outage,
    Scenario,
    Trace,
    check_invariants,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "EMPTY",
    "AdversarySpec",
    "Agent",
    "AmendmentDecision",
    "Behavior",
    "Block",
    "BlockStore",
    "Blocklace",
    "Constitution",
    "Decision",
    "Expectations",
    "InstanceSpec",
    "NetworkModel",
    "Outage",
    "OutputItem",
    "OutputKind",
    "Scenario",
    "Trace",
    "Transactions",
    "Vote",
    "VoteSetTransaction",
    "amend_delta",
    "amend_population",
    "amend_sigma",
    "check_invariants",
    "found_instance",
    "make_amendment_decision",
    "make_block",
    "make_genesis",
    "run",
    "validate_decision",
]
