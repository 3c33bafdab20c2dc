"""Training objectives, with values and analytic gradients.

Four parts feed the total objective: a cluster-proxy softmax loss, a
cross-camera proxy loss (camera-aware mode only), a hard-instance
contrastive loss that mines the least similar positive in the batch,
and a soft consistency loss that penalizes divergence between the
similarity distributions of augmented and clean views.

Gradients are taken w.r.t. the online representations only; momentum
representations, proxies and target distributions are constants. The
trainer feeds these gradients back through the encoder.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    ModeMismatch,
    NoNegatives,
    NonFiniteLoss,
    ProxyNotFound,
    SelfReidError,
)
from .linalg import softmax_rows
from .proxies import AWARE, ProxyMemory, nearest_negative_indices


@dataclass
class Temperatures:
    agnostic: float = 0.5
    cross: float = 0.07
    hard: float = 0.1
    soft: float = 0.4

    def validate(self) -> None:
        for name in ("agnostic", "cross", "hard", "soft"):
            if getattr(self, name) <= 0:
                raise SelfReidError(f"temperature {name} must be > 0")


@dataclass
class LossWeights:
    """Weights of the two instance terms; zero disables a term."""

    hard: float = 1.0
    soft: float = 10.0

    def validate(self) -> None:
        if self.hard < 0 or self.soft < 0:
            raise SelfReidError("loss weights must be >= 0")


@dataclass
class LossBreakdown:
    agnostic: float
    cross: float
    proxy: float
    hard: float
    soft: float
    total: float
    grads: np.ndarray  # d(total)/d(online representations), (N, d)


@dataclass
class ConsistencyDistributions:
    """Row-stochastic prediction (P) and target (Q) matrices.

    Rows are anchors, columns the batch instances. The augmented
    momentum targets and the temperature are kept so the loss can chain
    gradients back to the online representations.
    """

    p: np.ndarray
    q: np.ndarray
    targets: np.ndarray
    temperature: float


def proxy_agnostic_loss(feats: np.ndarray, labels: np.ndarray,
                        proxy_vectors: np.ndarray, tau: float):
    """Softmax log loss of each anchor against all cluster proxies.

    One positive (the anchor's own cluster proxy), every other proxy a
    negative. Returns (value, grads) with grads of shape feats.shape.
    """
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    proxy_vectors = np.asarray(proxy_vectors, dtype=np.float64)
    n = feats.shape[0]
    n_proxies = proxy_vectors.shape[0]
    if np.any(labels < 0) or np.any(labels >= n_proxies):
        missing = labels[(labels < 0) | (labels >= n_proxies)]
        raise ProxyNotFound(f"labels {sorted(set(missing.tolist()))} have no proxy")

    sims = feats @ proxy_vectors.T
    probs = softmax_rows(sims, tau)
    picked = probs[np.arange(n), labels]
    value = float(-np.mean(np.log(picked)))
    grads = (probs @ proxy_vectors - proxy_vectors[labels]) / (tau * n)
    return value, grads


def cross_camera_loss(feat: np.ndarray, camera: int, cluster: int,
                      memory: ProxyMemory, tau: float, n_neg: int):
    """Cross-camera proxy loss for a single anchor representation.

    Each positive is a proxy of the anchor's cluster under a different
    camera; the denominator adds the n_neg camera proxies of other
    clusters nearest to the anchor. Anchors whose cluster lives in a
    single camera contribute zero, with zero gradient.
    """
    if memory.mode != AWARE:
        raise ModeMismatch("cross-camera loss needs an aware memory")
    return _cross_camera_single(feat, camera, cluster, memory, tau, n_neg)


def _cross_camera_single(feat, camera, cluster, memory, tau, n_neg):
    feat = np.asarray(feat, dtype=np.float64)
    pos_rows = np.flatnonzero((memory.camera_cluster_ids == cluster)
                              & (memory.camera_ids != camera))
    if pos_rows.size == 0:
        return 0.0, np.zeros_like(feat)
    neg_rows = nearest_negative_indices(memory, feat, cluster, n_neg)
    negatives = memory.camera_vectors[neg_rows]
    neg_logits = negatives @ feat / tau

    value = 0.0
    grad = np.zeros_like(feat)
    for row in pos_rows:
        positive = memory.camera_vectors[row]
        logits = np.concatenate(([positive @ feat / tau], neg_logits))
        logits -= logits.max()
        e = np.exp(logits)
        probs = e / e.sum()
        value += -np.log(probs[0])
        stacked = np.vstack((positive[None, :], negatives))
        grad += (probs @ stacked - positive) / tau
    k = pos_rows.size
    return float(value / k), grad / k


def cross_camera_loss_batch(feats: np.ndarray, cameras: np.ndarray,
                            labels: np.ndarray, memory: ProxyMemory,
                            tau: float, n_neg: int):
    """Batch mean of the per-anchor cross-camera loss."""
    if memory.mode != AWARE:
        raise ModeMismatch("cross-camera loss needs an aware memory")
    feats = np.asarray(feats, dtype=np.float64)
    n = feats.shape[0]
    value = 0.0
    grads = np.zeros_like(feats)
    for i in range(n):
        v, g = _cross_camera_single(feats[i], int(cameras[i]), int(labels[i]),
                                    memory, tau, n_neg)
        value += v
        grads[i] = g
    return value / n, grads / n


def hard_instance_loss(feats: np.ndarray, momentum: np.ndarray,
                       labels: np.ndarray, tau: float,
                       negatives: str = "all"):
    """Contrast each anchor against its hardest positive momentum twin.

    The mined positive is the same-label momentum instance with minimal
    cosine to the anchor (the anchor's own twin is eligible). Negatives
    are every other-label momentum instance, or only the most similar
    one when negatives="hardest".
    """
    if negatives not in ("all", "hardest"):
        raise SelfReidError(f"unknown negatives variant {negatives!r}")
    feats = np.asarray(feats, dtype=np.float64)
    momentum = np.asarray(momentum, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = feats.shape[0]
    same = labels[:, None] == labels[None, :]
    if same.all():
        raise NoNegatives("batch holds a single pseudo identity")

    sims = feats @ momentum.T
    mined = np.argmin(np.where(same, sims, np.inf), axis=1)

    if negatives == "all":
        mask = ~same
    else:
        hardest_neg = np.argmax(np.where(same, -np.inf, sims), axis=1)
        mask = np.zeros_like(same)
        mask[np.arange(n), hardest_neg] = True
    mask[np.arange(n), mined] = True  # positive joins its own denominator

    logits = np.where(mask, sims / tau, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - row_max)
    denom = e.sum(axis=1, keepdims=True)
    probs = e / denom

    pos_logit = sims[np.arange(n), mined] / tau
    value = float(np.mean(np.log(denom[:, 0]) + row_max[:, 0] - pos_logit))
    grads = (probs @ momentum - momentum[mined]) / (tau * n)
    return value, grads


def consistency_distributions(feats: np.ndarray, momentum_aug: np.ndarray,
                              momentum_clean: np.ndarray, tau: float,
                              targets: str = "clean") -> ConsistencyDistributions:
    """Prediction and target distributions over the batch instances.

    P compares the online augmented anchors with the augmented momentum
    batch; Q compares the clean momentum anchors with the clean batch
    (targets="strong" switches Q to the augmented momentum batch, the
    strong-strong ablation).
    """
    feats = np.asarray(feats, dtype=np.float64)
    momentum_aug = np.asarray(momentum_aug, dtype=np.float64)
    momentum_clean = np.asarray(momentum_clean, dtype=np.float64)
    if not (feats.shape == momentum_aug.shape == momentum_clean.shape):
        raise DimensionMismatch("augmented and clean batches must align")
    if targets not in ("clean", "strong"):
        raise SelfReidError(f"unknown targets variant {targets!r}")
    p = softmax_rows(feats @ momentum_aug.T, tau)
    if targets == "clean":
        q = softmax_rows(momentum_clean @ momentum_clean.T, tau)
    else:
        q = softmax_rows(momentum_aug @ momentum_aug.T, tau)
    return ConsistencyDistributions(p=p, q=q, targets=momentum_aug, temperature=tau)


def soft_consistency_loss(dists: ConsistencyDistributions,
                          divergence: str = "kl"):
    """Anchor-averaged divergence between P and Q; gradients through P only.

    divergence="kl" is D_KL(P || Q); "mse" is the squared-error ablation.
    """
    p, q = dists.p, dists.q
    n = p.shape[0]
    if divergence == "kl":
        log_ratio = np.log(p) - np.log(q)
        per_anchor = np.sum(p * log_ratio, axis=1)
        value = float(np.mean(per_anchor))
        # d/ds_ij through the softmax: p * (g - sum(p * g)) / tau, g = dKL/dP
        g = log_ratio  # the +1 from d(p log p) is constant across j, drops out
        ds = p * (g - per_anchor[:, None]) / dists.temperature
    elif divergence == "mse":
        diff = p - q
        value = float(np.mean(np.sum(diff * diff, axis=1)))
        g = 2.0 * diff
        ds = p * (g - np.sum(p * g, axis=1, keepdims=True)) / dists.temperature
    else:
        raise SelfReidError(f"unknown divergence {divergence!r}")
    grads = ds @ dists.targets / n
    return value, grads


def kl_value(dists: ConsistencyDistributions) -> float:
    """D_KL(P || Q) alone, for diagnostics on runs that do not train it."""
    return float(np.mean(np.sum(dists.p * (np.log(dists.p) - np.log(dists.q)), axis=1)))


def total_loss(agnostic, cross, hard, soft, weights: LossWeights) -> LossBreakdown:
    """Exact weighted combination of the four component (value, grad) pairs."""
    weights.validate()
    parts = {"agnostic": agnostic, "cross": cross, "hard": hard, "soft": soft}
    for name, (value, _) in parts.items():
        if not np.isfinite(value):
            raise NonFiniteLoss(f"component {name} is {value}")
    proxy_value = agnostic[0] + 0.5 * cross[0]
    total_value = proxy_value + weights.hard * hard[0] + weights.soft * soft[0]
    grads = (agnostic[1] + 0.5 * cross[1]
             + weights.hard * hard[1] + weights.soft * soft[1])
    return LossBreakdown(agnostic=agnostic[0], cross=cross[0], proxy=proxy_value,
                         hard=hard[0], soft=soft[0], total=total_value, grads=grads)
