"""Relation-neuron lab: file formats, AP scoring and offline evaluation."""

from ._core import (
    IoError,
    ValidationError,
    accuracy_drop,
    average_precision,
    continuation_matches,
    evaluate_predictions,
    neuron_count,
    read_activations,
    read_labeled_set,
    read_mask,
    read_prompts,
    read_ranking,
    score,
    spearman,
    sweep_ks,
    write_activations,
    write_prompts,
    write_ranking,
)

__all__ = [
    "IoError",
    "ValidationError",
    "accuracy_drop",
    "average_precision",
    "continuation_matches",
    "evaluate_predictions",
    "neuron_count",
    "read_activations",
    "read_labeled_set",
    "read_mask",
    "read_prompts",
    "read_ranking",
    "score",
    "spearman",
    "sweep_ks",
    "write_activations",
    "write_prompts",
    "write_ranking",
]
