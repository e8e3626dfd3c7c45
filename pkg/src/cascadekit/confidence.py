"""Backward confidence: per-layer pseudo-probability distributions and scalars.

Softmaxing the candidate-label logits of every dumped layer gives one
distribution per layer; the concatenation of all of them is the feature
vector used by learned deferral methods, and the final row supplies the
classic max-probability and entropy summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .records import Dataset, SampleRecord


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for numerical stability."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def shannon_entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * ln 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


@dataclass(eq=False)
class BackwardConfidence:
    """Pseudo-probabilities for each layer plus final-layer summaries."""

    q_by_layer: np.ndarray  # (n_layers, n_labels), rows sum to 1
    q_flat: np.ndarray  # concatenation in layer order
    final_max_prob: float
    final_entropy: float


def layer_distributions(r: SampleRecord) -> BackwardConfidence:
    """Softmax every layer's logit row of ``r`` and fill the summaries."""
    if not np.all(np.isfinite(r.small_layer_logits)):
        raise DataError(f"record {r.id!r}: non-finite logits")
    q = softmax(r.small_layer_logits)
    final = q[-1]
    return BackwardConfidence(
        q_by_layer=q,
        q_flat=q.ravel(),
        final_max_prob=float(final.max()),
        final_entropy=shannon_entropy(final),
    )


def g_max_prob(bc: BackwardConfidence) -> float:
    return bc.final_max_prob


def g_entropy(bc: BackwardConfidence) -> float:
    return bc.final_entropy


def small_prediction(bc: BackwardConfidence) -> int:
    """Argmax of the final distribution; ties go to the lowest index."""
    return int(np.argmax(bc.q_by_layer[-1]))


def record_small_prediction(r: SampleRecord) -> int:
    """Small-model label for ``r`` (argmax of the final logit row)."""
    return int(np.argmax(r.small_layer_logits[-1]))


def record_large_prediction(r: SampleRecord) -> int:
    """Large-model label for ``r``; requires large_final_probs."""
    if r.large_final_probs is None:
        raise DataError(f"record {r.id!r}: large_final_probs missing")
    return int(np.argmax(r.large_final_probs))


# Batch helpers over a whole dataset; used by the deferral and evaluation
# paths where per-record calls would be needlessly slow.

def final_distributions(ds: Dataset) -> np.ndarray:
    """(n, C) softmaxed final-layer rows for every record."""
    logits = np.stack([r.small_layer_logits[-1] for r in ds.records])
    if not np.all(np.isfinite(logits)):
        raise DataError("non-finite logits in dataset")
    return softmax(logits)


def final_entropies(ds: Dataset) -> np.ndarray:
    p = final_distributions(ds)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=1)


def backward_feature_matrix(ds: Dataset) -> np.ndarray:
    """(n, C * n_layers) matrix of flattened per-layer distributions."""
    logits = np.stack([r.small_layer_logits for r in ds.records])
    if not np.all(np.isfinite(logits)):
        raise DataError("non-finite logits in dataset")
    q = softmax(logits)
    return q.reshape(len(ds.records), -1)
