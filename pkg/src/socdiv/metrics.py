"""Accuracy (Recall/NDCG), system diversity (Coverage/Entropy) and similarity diagnostics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import InteractionGraph, SocialGraph
from .losses import user_friend_potentials
from .models import ForwardOutput, score_all_items, topk


class MetricError(ValueError):
    """Raised when a metric's input makes it undefined."""


@dataclass
class RankedLists:
    """Per-user top-K recommendation lists (training items already excluded)."""

    lists: dict  # user id -> list of item ids, length <= k
    k: int


@dataclass
class EvalReport:
    recall: float
    ndcg: float
    coverage: float
    entropy: float
    sim: float  # mean user-friend similarity in [0,1]; nan when undefined
    k: int

    COLUMNS = ("recall", "ndcg", "coverage", "entropy", "sim", "k")

    def values(self):
        return (self.recall, self.ndcg, self.coverage, self.entropy, self.sim, self.k)

    def to_record(self):
        """Single tab-separated line with the fixed column order."""
        return "\t".join(f"{v:.6g}" if isinstance(v, float) else str(v)
                         for v in self.values())

    def to_kv_block(self):
        return "\n".join(
            f"{name}\t{v:.6g}" if isinstance(v, float) else f"{name}\t{v}"
            for name, v in zip(self.COLUMNS, self.values())
        )

    @classmethod
    def header(cls):
        return "\t".join(cls.COLUMNS)


def recommend_topk(fo: ForwardOutput, train: InteractionGraph, k) -> RankedLists:
    """Score every user and keep their top-k items, excluding training items."""
    lists = {}
    for u in range(train.num_users):
        scores = score_all_items(fo, u, exclude=train.item_sets[u])
        lists[u] = topk(scores, k).tolist()
    return RankedLists(lists=lists, k=k)


def recall_at_k(lists: RankedLists, test: InteractionGraph) -> float:
    """Mean per-user fraction of test items retrieved in the top-k list."""
    vals = []
    for u in range(test.num_users):
        relevant = test.item_sets[u]
        if not relevant:
            continue
        hits = len(relevant.intersection(lists.lists.get(u, ())))
        vals.append(hits / len(relevant))
    if not vals:
        raise MetricError("empty test set")
    return float(np.mean(vals))


def ndcg_at_k(lists: RankedLists, test: InteractionGraph) -> float:
    """Binary-relevance NDCG@k averaged over users with test items."""
    vals = []
    for u in range(test.num_users):
        relevant = test.item_sets[u]
        if not relevant:
            continue
        ranked = lists.lists.get(u, [])
        dcg = sum(1.0 / np.log2(r + 2) for r, item in enumerate(ranked)
                  if item in relevant)
        ideal_len = min(lists.k, len(relevant))
        idcg = sum(1.0 / np.log2(r + 2) for r in range(ideal_len))
        vals.append(dcg / idcg)
    if not vals:
        raise MetricError("empty test set")
    return float(np.mean(vals))


def coverage_at_k(lists: RankedLists, num_items) -> float:
    """Fraction of the full catalog appearing in any user's list."""
    if num_items < 1:
        raise MetricError("catalog must contain at least one item")
    covered = set()
    for items in lists.lists.values():
        covered.update(items)
    return len(covered) / num_items


def entropy_at_k(lists: RankedLists) -> float:
    """Base-2 entropy of item presence counts across all lists."""
    counts = Counter()
    for items in lists.lists.values():
        counts.update(items)
    total = sum(counts.values())
    if total == 0:
        raise MetricError("all recommendation lists are empty")
    probs = np.array(sorted(counts.values()), dtype=np.float64) / total
    return float(-np.sum(probs * np.log2(probs)))


def user_friend_similarity(fo: ForwardOutput, social: SocialGraph) -> float:
    """Mean (cos + 1) / 2 between users and their friend-mean; nan if no edges.

    Diagnostics only; never used as a training signal.
    """
    users, cos = user_friend_potentials(fo.user_embeddings, social)
    if len(users) == 0:
        return float("nan")
    return float(np.mean((cos + 1.0) / 2.0))


def evaluate(fo: ForwardOutput, train: InteractionGraph, test: InteractionGraph,
             k, social: SocialGraph = None) -> EvalReport:
    """Full report over top-k lists computed from the forward output."""
    lists = recommend_topk(fo, train, k)
    sim = user_friend_similarity(fo, social) if social is not None else float("nan")
    return EvalReport(
        recall=recall_at_k(lists, test),
        ndcg=ndcg_at_k(lists, test),
        coverage=coverage_at_k(lists, train.num_items),
        entropy=entropy_at_k(lists),
        sim=sim,
        k=k,
    )
