"""Deterministic synthetic two-model worlds for desk-scale experiments.

Each world draws a true label, small-model correctness Bernoulli(a_S), and
large-model correctness Bernoulli(p_i) with logit(p_i) = b + embed_signal *
z_i, where z_i sits in embedding coordinate 0 and b is calibrated so the mean
of p_i equals a_L. Small final-layer logits carry a correctness-dependent
margin; intermediate layers ramp from near-uniform noise toward the final
logits, converging earlier on correct samples when layer_signal > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .records import Dataset, SampleRecord

# margin of the small model's predicted label: exp(mu0 + mu1*(2s-1) + sd*eps)
_SMALL_MARGIN_MU0 = 0.9
_SMALL_MARGIN_MU1 = 0.55
_SMALL_MARGIN_SD = 0.45
_SMALL_BASE_NOISE = 0.3

# per-sample convergence exponent and per-layer noise of intermediate layers
_LAYER_EXPONENT_SCALE = 0.8
_LAYER_EXPONENT_SD = 0.3
_LAYER_NOISE_BASE = 0.35
_LAYER_NOISE_FLOOR = 0.06

# margin of the large model's predicted label
_LARGE_MARGIN_MU0 = 0.8
_LARGE_MARGIN_MU1 = 0.85
_LARGE_MARGIN_EMBED = 0.6
_LARGE_MARGIN_SD = 0.3
_LARGE_BASE_NOISE = 0.2


@dataclass
class WorldConfig:
    n: int
    n_labels: int = 4
    layers: int = 5
    embedding_dim: int = 8
    a_small: float = 0.7
    a_large: float = 0.85
    layer_signal: float = 1.0
    embed_signal: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1:
            raise UsageError(f"n must be >= 1, got {self.n}")
        if self.n_labels < 2:
            raise UsageError(f"n_labels must be >= 2, got {self.n_labels}")
        if self.layers < 1:
            raise UsageError(f"layers must be >= 1, got {self.layers}")
        if self.embedding_dim < 1:
            raise UsageError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        for name, a in (("a_small", self.a_small), ("a_large", self.a_large)):
            if not (0.0 < a < 1.0):
                raise UsageError(f"{name} must lie in (0, 1), got {a}")
        if self.layer_signal < 0 or self.embed_signal < 0:
            raise UsageError("signal strengths must be >= 0")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _calibrated_intercept(target: float, scale: float) -> float:
    """b such that E[sigmoid(b + scale*Z)] = target for Z ~ N(0,1)."""
    if scale == 0.0:
        return math.log(target / (1.0 - target))
    nodes, weights = np.polynomial.hermite.hermgauss(201)
    zs = math.sqrt(2.0) * nodes
    ws = weights / math.sqrt(math.pi)

    def mean_prob(b: float) -> float:
        return float((ws * _sigmoid(b + scale * zs)).sum())

    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_prob(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_world(cfg: WorldConfig) -> Dataset:
    """Generate a dataset; byte-identical on disk for identical configs."""
    cfg.validate()
    n, C, L, d = cfg.n, cfg.n_labels, cfg.layers, cfg.embedding_dim
    rng = np.random.default_rng(cfg.seed)

    true = rng.integers(0, C, size=n)
    small_ok = rng.random(n) < cfg.a_small
    z = rng.standard_normal(n)
    emb_rest = rng.standard_normal((n, d - 1)) if d > 1 else np.zeros((n, 0))
    b = _calibrated_intercept(cfg.a_large, cfg.embed_signal)
    p_large = _sigmoid(b + cfg.embed_signal * z)
    large_ok = rng.random(n) < p_large

    # predicted labels: the true one when correct, a uniform other otherwise
    off_small = rng.integers(0, C - 1, size=n)
    pred_small = np.where(small_ok, true, off_small + (off_small >= true))

    margin_eps = rng.standard_normal(n)
    margin = np.exp(
        _SMALL_MARGIN_MU0
        + _SMALL_MARGIN_MU1 * (2.0 * small_ok - 1.0)
        + _SMALL_MARGIN_SD * margin_eps
    )
    base = _SMALL_BASE_NOISE * rng.standard_normal((n, C))
    final_logits = base.copy()
    rows = np.arange(n)
    others = base.copy()
    others[rows, pred_small] = -np.inf
    final_logits[rows, pred_small] = others.max(axis=1) + margin

    # intermediate layers: weight ramps as frac^beta, beta < 1 when the sample
    # converges early (correct samples, for positive layer_signal)
    beta_eps = rng.standard_normal(n)
    beta = np.exp(
        _LAYER_EXPONENT_SCALE * cfg.layer_signal * (1.0 - 2.0 * small_ok)
        + _LAYER_EXPONENT_SD * beta_eps
    )
    layer_noise = rng.standard_normal((max(L - 1, 0), n, C))
    logits = np.empty((n, L, C))
    logits[:, L - 1, :] = final_logits
    for j in range(L - 1):
        frac = j / (L - 1)
        w = frac**beta
        sd = (_LAYER_NOISE_BASE * (1.0 - frac) + _LAYER_NOISE_FLOOR) / (1.0 + cfg.layer_signal)
        logits[:, j, :] = w[:, None] * final_logits + sd * layer_noise[j]

    off_large = rng.integers(0, C - 1, size=n)
    pred_large = np.where(large_ok, true, off_large + (off_large >= true))
    large_eps = rng.standard_normal(n)
    margin_large = np.exp(
        _LARGE_MARGIN_MU0
        + _LARGE_MARGIN_MU1 * (2.0 * large_ok - 1.0)
        + _LARGE_MARGIN_EMBED * (2.0 * p_large - 1.0)
        + _LARGE_MARGIN_SD * large_eps
    )
    base_large = _LARGE_BASE_NOISE * rng.standard_normal((n, C))
    large_logits = base_large.copy()
    others = base_large.copy()
    others[rows, pred_large] = -np.inf
    large_logits[rows, pred_large] = others.max(axis=1) + margin_large
    shifted = large_logits - large_logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    large_probs = e / e.sum(axis=1, keepdims=True)

    plen_eps = rng.standard_normal(n)
    prompt_len = np.maximum(8, np.rint(60.0 + 90.0 * (1.0 - p_large) + 18.0 * plen_eps)).astype(int)

    layer_ids = tuple(4 * j for j in range(L))
    embeddings = np.concatenate([z[:, None], emb_rest], axis=1)
    records = [
        SampleRecord(
            id=f"s{i:06d}",
            n_labels=C,
            true_label=int(true[i]),
            layer_ids=layer_ids,
            small_layer_logits=logits[i],
            large_final_probs=large_probs[i],
            input_embedding=embeddings[i],
            prompt_length=int(prompt_len[i]),
        )
        for i in range(n)
    ]
    return Dataset.from_records(records)
