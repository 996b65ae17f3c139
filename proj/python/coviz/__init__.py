"""Counterfactual outcome explanations for highway driving agents."""

import json

from . import _core
from ._core import (
    Agent,
    CheckpointError,
    ConfigError,
    DataError,
    IneligibleOriginError,
    InvalidFoilError,
    NotFoundError,
    UsageError,
    actions,
    components,
    explain_svg,
    manifest_sha256,
    profiles,
    run_pipeline,
    verify_manifest,
)

__all__ = [
    "Agent",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "IneligibleOriginError",
    "InvalidFoilError",
    "NotFoundError",
    "UsageError",
    "actions",
    "components",
    "config",
    "explain",
    "explain_svg",
    "manifest_sha256",
    "profiles",
    "run_pipeline",
    "summarize",
    "verify_manifest",
]


def config(path=None):
    """Resolved run configuration as a dict; built-in defaults without a path."""
    return json.loads(_core.config_json(path))


def explain(out, agent, trace_id, step, foil=None, config=None):
    """Fact/foil payload for one visited state of a stored run."""
    return json.loads(_core.explain_json(out, agent, trace_id, step, foil, config))


def summarize(out, agent, method=None, n=None, overlap=None, seed=None, render=False, config=None):
    """Selects and stores a summary; returns it with its rejoin report."""
    return json.loads(_core.summarize_json(out, agent, method, n, overlap, seed, render, config))
