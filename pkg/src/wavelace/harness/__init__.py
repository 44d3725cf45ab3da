"""Scenario files, metrics and the command line."""
from .corpus import ENV_VAR, bundled_corpus, corpus_dir, corpus_files
from .metrics import METRICS_SCHEMA, BlockLatency, MetricsReport, emit_metrics
from .scenario import (
    SCHEMA,
    LoadedScenario,
    ScenarioError,
    ValidationIssue,
    parse_scenario,
    scenario_from_dict,
)

__all__ = [
    "ENV_VAR",
    "METRICS_SCHEMA",
    "SCHEMA",
    "BlockLatency",
    "LoadedScenario",
    "MetricsReport",
    "ScenarioError",
    "ValidationIssue",
    "bundled_corpus",
    "corpus_dir",
    "corpus_files",
    "emit_metrics",
    "parse_scenario",
    "scenario_from_dict",
]
