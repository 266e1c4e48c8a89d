"""Post-hoc diversified re-ranking: MMR and greedy MAP inference for a DPP kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JITTER = 1e-10


class RerankError(ValueError):
    pass


@dataclass
class CandidateSet:
    """Top-C candidates for one user: ids, relevance scores and item vectors."""

    item_ids: np.ndarray  # (C,)
    relevance: np.ndarray  # (C,)
    item_vectors: np.ndarray  # (C, d)

    def __len__(self):
        return len(self.item_ids)


def _similarity_matrix(vectors):
    """Pairwise cosine mapped to [0, 1], unit diagonal; zero vectors fall back to 0."""
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms < 1e-12, 1.0, norms)
    unit = vectors / safe[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    sim = (cos + 1.0) / 2.0
    np.fill_diagonal(sim, 1.0)
    return sim


def _argmax_with_id_tiebreak(values, ids, mask):
    """Index of the masked maximum; equal values resolve to the smallest item id."""
    best = None
    for k in np.flatnonzero(mask):
        if best is None or values[k] > values[best] or (
                values[k] == values[best] and ids[k] < ids[best]):
            best = k
    return best


def mmr_rerank(cands: CandidateSet, k, trade_off) -> np.ndarray:
    """Greedy maximal-marginal-relevance selection.

    Each step maximizes trade_off * rel(i) - (1 - trade_off) * max similarity
    to the already selected items; the first pick is the pure relevance
    argmax. Ties break by ascending item id.
    """
    if not (0.0 <= trade_off <= 1.0):
        raise RerankError(f"trade_off must be in [0, 1], got {trade_off}")
    C = len(cands)
    if k > C:
        raise RerankError(f"k={k} exceeds candidate pool size {C}")
    sim = _similarity_matrix(cands.item_vectors)
    remaining = np.ones(C, dtype=bool)
    selected = []
    first = _argmax_with_id_tiebreak(cands.relevance, cands.item_ids, remaining)
    selected.append(first)
    remaining[first] = False
    while len(selected) < k:
        max_sim = sim[:, selected].max(axis=1)
        score = trade_off * cands.relevance - (1.0 - trade_off) * max_sim
        pick = _argmax_with_id_tiebreak(score, cands.item_ids, remaining)
        selected.append(pick)
        remaining[pick] = False
    return cands.item_ids[selected]


def dpp_kernel(cands: CandidateSet, theta) -> np.ndarray:
    """L = Diag(g) S Diag(g) with g_i = exp(theta * rel_i / (1 - theta + eps))."""
    if not (0.0 <= theta <= 1.0):
        raise RerankError(f"theta must be in [0, 1], got {theta}")
    g = np.exp(theta * cands.relevance / (1.0 - theta + JITTER))
    L = g[:, None] * _similarity_matrix(cands.item_vectors) * g[None, :]
    L[np.diag_indices_from(L)] += JITTER
    return L


def greedy_map_dpp(L, k, item_ids=None):
    """Fast greedy MAP selection via incremental Cholesky updates.

    Picks the item with the largest marginal determinant gain each step and
    stops early once no remaining item has a positive conditional variance.
    Returns selected indices (into L) in pick order.
    """
    C = L.shape[0]
    ids = np.arange(C) if item_ids is None else np.asarray(item_ids)
    cis = np.zeros((k, C))
    di2s = np.diag(L).copy()
    alive = np.ones(C, dtype=bool)
    selected = []
    while len(selected) < k:
        pick = _argmax_with_id_tiebreak(di2s, ids, alive)
        if pick is None or di2s[pick] < JITTER:
            break
        step = len(selected)
        ci = cis[:step, pick]
        di = np.sqrt(di2s[pick])
        eis = (L[pick, :] - ci @ cis[:step, :]) / di
        cis[step, :] = eis
        di2s = di2s - eis**2
        di2s[pick] = -np.inf
        alive[pick] = False
        selected.append(pick)
    return selected


def dpp_rerank(cands: CandidateSet, k, theta) -> np.ndarray:
    """Greedy MAP DPP re-ranking; degenerate kernels fall back to relevance order."""
    C = len(cands)
    if k > C:
        raise RerankError(f"k={k} exceeds candidate pool size {C}")
    L = dpp_kernel(cands, theta)
    selected = greedy_map_dpp(L, k, cands.item_ids)
    if len(selected) < k:
        chosen = set(selected)
        order = sorted(range(C),
                       key=lambda i: (-cands.relevance[i], cands.item_ids[i]))
        for i in order:
            if i not in chosen:
                selected.append(i)
                chosen.add(i)
            if len(selected) == k:
                break
    return cands.item_ids[selected]


def log_det(L, subset):
    """log det of the principal minor of L on ``subset`` (indices)."""
    sub = L[np.ix_(subset, subset)]
    sign, val = np.linalg.slogdet(sub)
    return val if sign > 0 else -np.inf


def build_candidates(fo, user, train_item_set, k, pool_factor=5) -> CandidateSet:
    """Model's top pool_factor*k items by relevance for one user."""
    from .models import score_all_items, topk
    scores = score_all_items(fo, user, exclude=train_item_set)
    ids = topk(scores, pool_factor * k)
    return CandidateSet(item_ids=ids, relevance=scores[ids],
                        item_vectors=fo.item_embeddings[ids])
