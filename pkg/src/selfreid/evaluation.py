"""Cross-camera retrieval metrics: mAP and CMC rank-k.

Protocol: for each query, gallery items sharing both its identity and
its camera are removed (the standard junk filter), the rest are ranked
by cosine similarity, and a query counts as valid only if at least one
cross-camera true match survives the filter. Ties rank by ascending
gallery index, making results deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluation, NoRelevantItems

RANKS = (1, 5, 10)


@dataclass
class RetrievalSet:
    """Embeddings plus ground-truth identity and camera ids."""

    embeddings: np.ndarray
    identities: np.ndarray
    cameras: np.ndarray


@dataclass
class EvalReport:
    mean_ap: float
    rank1: float
    rank5: float
    rank10: float
    excluded_queries: int

    def rank(self, k: int) -> float:
        return {1: self.rank1, 5: self.rank5, 10: self.rank10}[k]


def average_precision(ranked_relevance) -> float:
    """AP of a ranked boolean relevance list: mean of precision-at-hit."""
    rel = np.asarray(ranked_relevance, dtype=bool)
    total = int(rel.sum())
    if total == 0:
        raise NoRelevantItems("no relevant item in ranking")
    hits = np.cumsum(rel)
    positions = np.flatnonzero(rel) + 1
    return float(np.sum(hits[positions - 1] / positions) / total)


def evaluate(queries: RetrievalSet, gallery: RetrievalSet) -> EvalReport:
    """mAP and CMC over all valid queries.

    Queries whose true matches all share their camera are excluded from
    the averages and counted in excluded_queries.
    """
    sims = queries.embeddings @ gallery.embeddings.T
    n_q = sims.shape[0]
    aps, cmc_hits = [], []
    excluded = 0
    for qi in range(n_q):
        keep = ~((gallery.identities == queries.identities[qi])
                 & (gallery.cameras == queries.cameras[qi]))
        if not np.any(keep):
            excluded += 1
            continue
        kept_idx = np.flatnonzero(keep)
        order = kept_idx[np.argsort(-sims[qi, kept_idx], kind="stable")]
        relevance = gallery.identities[order] == queries.identities[qi]
        if not np.any(relevance):
            excluded += 1
            continue
        aps.append(average_precision(relevance))
        first_hit = int(np.argmax(relevance))
        cmc_hits.append([first_hit < k for k in RANKS])
    if not aps:
        raise EmptyEvaluation("no query kept a valid cross-camera match")
    cmc = np.mean(np.array(cmc_hits, dtype=float), axis=0)
    return EvalReport(mean_ap=float(np.mean(aps)), rank1=float(cmc[0]),
                      rank5=float(cmc[1]), rank10=float(cmc[2]),
                      excluded_queries=excluded)


def diagnostics(reports):
    """Plottable (epoch, cluster_count) and (epoch, mean_kl) tables."""
    cluster_curve = np.array([(r.epoch, r.cluster_count) for r in reports],
                             dtype=np.float64)
    kl_curve = np.array([(r.epoch, r.mean_kl) for r in reports], dtype=np.float64)
    return cluster_curve, kl_curve
