"""Python access to the verifier, task corpus, annotation and metrics tools."""

import json

from . import _core
from ._core import ConfigError, FormatError, compute_advantages, featurize, feature_dim, oracle_correct

__all__ = [
    "ConfigError",
    "FormatError",
    "annotate",
    "build_corpus",
    "compute_advantages",
    "feature_dim",
    "featurize",
    "oracle_correct",
    "resolved_config",
    "rule_verdict",
    "summarize_metrics",
]


def _str_overrides(overrides):
    return {k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in (overrides or {}).items()}


def rule_verdict(reference, completion):
    """Returns {"outcome", "extracted", "marker"}; absent fields are None."""
    return json.loads(_core.rule_verdict_json(reference, completion))


def build_corpus(seed, **overrides):
    """Corpus rows as dicts. Keyword names use '__' for '.', e.g. world__problems=50."""
    return json.loads(_core.corpus_json(seed, _str_overrides(_dotted(overrides))))


def annotate(seed, **overrides):
    """Agreement counts for the corpus built from the same seed and overrides."""
    return json.loads(_core.annotate_json(seed, _str_overrides(_dotted(overrides))))


def resolved_config(seed=0, **overrides):
    return json.loads(_core.resolved_config_json(seed, _str_overrides(_dotted(overrides))))


def summarize_metrics(path):
    return json.loads(_core.summarize_metrics_json(str(path)))


def _dotted(kwargs):
    return {k.replace("__", "."): v for k, v in kwargs.items()}
