"""Interaction / social graph loading, validation, splitting and triplet sampling."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass
class InteractionGraph:
    """User-item bipartite graph with implicit (0/1) feedback.

    ``adjacency[a]`` is the strictly sorted array of item ids user ``a``
    interacted with. The reverse adjacency is derived lazily.
    """

    num_users: int
    num_items: int
    adjacency: list  # list of sorted int arrays, one per user
    _item_sets: list = field(default=None, repr=False, compare=False)
    _reverse: list = field(default=None, repr=False, compare=False)

    @classmethod
    def from_edges(cls, edges, num_users=None, num_items=None):
        """Build a graph from an iterable of (user, item) pairs.

        Duplicate pairs collapse to a single edge. Dimensions default to
        1 + max id seen.
        """
        edges = list(edges)
        if num_users is None:
            num_users = 1 + max((u for u, _ in edges), default=-1)
        if num_items is None:
            num_items = 1 + max((i for _, i in edges), default=-1)
        per_user = [set() for _ in range(num_users)]
        for u, i in edges:
            if not (0 <= u < num_users and 0 <= i < num_items):
                raise DataError(f"edge ({u}, {i}) out of range for M={num_users}, N={num_items}")
            per_user[u].add(i)
        adjacency = [np.array(sorted(s), dtype=np.int64) for s in per_user]
        return cls(num_users=num_users, num_items=num_items, adjacency=adjacency)

    @property
    def item_sets(self):
        if self._item_sets is None:
            self._item_sets = [set(row.tolist()) for row in self.adjacency]
        return self._item_sets

    @property
    def reverse_adjacency(self):
        if self._reverse is None:
            rev = [[] for _ in range(self.num_items)]
            for u, row in enumerate(self.adjacency):
                for i in row.tolist():
                    rev[i].append(u)
            self._reverse = [np.array(us, dtype=np.int64) for us in rev]
        return self._reverse

    @property
    def num_edges(self):
        return sum(len(row) for row in self.adjacency)

    def edge_array(self):
        """All edges as an (E, 2) array in (user-major, item-ascending) order."""
        if self.num_edges == 0:
            return np.empty((0, 2), dtype=np.int64)
        users = np.concatenate(
            [np.full(len(row), u, dtype=np.int64) for u, row in enumerate(self.adjacency)]
        )
        items = np.concatenate(self.adjacency)
        return np.stack([users, items], axis=1)

    def degrees(self):
        return np.array([len(row) for row in self.adjacency], dtype=np.int64)


@dataclass
class SocialGraph:
    """Directed user-user trust graph; ``out_neighbors[a]`` sorted, no self-loops."""

    num_users: int
    out_neighbors: list

    @classmethod
    def from_edges(cls, edges, num_users):
        per_user = [set() for _ in range(num_users)]
        for a, b in edges:
            if not (0 <= a < num_users and 0 <= b < num_users):
                raise DataError(f"social edge ({a}, {b}) out of range for M={num_users}")
            if a != b:
                per_user[a].add(b)
        out = [np.array(sorted(s), dtype=np.int64) for s in per_user]
        return cls(num_users=num_users, out_neighbors=out)

    @property
    def num_edges(self):
        return sum(len(row) for row in self.out_neighbors)

    def users_with_friends(self):
        return np.array(
            [a for a in range(self.num_users) if len(self.out_neighbors[a]) > 0],
            dtype=np.int64,
        )


@dataclass
class DatasetSplit:
    train: InteractionGraph
    test: InteractionGraph
    seed: int


@dataclass
class TripletBatch:
    """BPR training rows (user, positive item, negative item)."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __len__(self):
        return len(self.users)


def _parse_pair_lines(path):
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{path}: line {lineno}: expected two fields, got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: cannot parse {line!r} as two integers")
            if a < 0 or b < 0:
                raise DataError(f"{path}: line {lineno}: negative id in {line!r}")
            pairs.append((a, b))
    return pairs


def load_interactions(path) -> InteractionGraph:
    """Load a user-item edge list ("user item" per line, whitespace separated)."""
    pairs = _parse_pair_lines(path)
    if not pairs:
        raise DataError(f"{path}: no interactions")
    return InteractionGraph.from_edges(pairs)


def load_social(path, num_users) -> tuple:
    """Load a directed "user friend" edge list.

    Returns (graph, dropped_self_loops). Self-loops are dropped with a count,
    out-of-range ids are an error.
    """
    pairs = _parse_pair_lines(path)
    dropped = 0
    kept = []
    for a, b in pairs:
        if a >= num_users or b >= num_users:
            raise DataError(f"{path}: social edge ({a}, {b}) references user >= {num_users}")
        if a == b:
            dropped += 1
        else:
            kept.append((a, b))
    return SocialGraph.from_edges(kept, num_users), dropped


def save_interactions(g: InteractionGraph, path):
    """Write the edge list back out in the same line format."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in g.edge_array().tolist():
            fh.write(f"{u} {i}\n")


def split_holdout(g: InteractionGraph, test_fraction, seed) -> DatasetSplit:
    """Per-user random holdout: floor(test_fraction * degree) edges go to test.

    Users with a single interaction keep it in train so every test user
    remains trainable. Deterministic under a fixed seed.
    """
    if not (0.0 < test_fraction < 1.0):
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_edges, test_edges = [], []
    for u in range(g.num_users):
        items = g.adjacency[u]
        d = len(items)
        n_test = int(np.floor(test_fraction * d)) if d > 1 else 0
        perm = rng.permutation(d)
        test_idx = set(perm[:n_test].tolist())
        for k, i in enumerate(items.tolist()):
            (test_edges if k in test_idx else train_edges).append((u, i))
    train = InteractionGraph.from_edges(train_edges, g.num_users, g.num_items)
    test = InteractionGraph.from_edges(test_edges, g.num_users, g.num_items)
    return DatasetSplit(train=train, test=test, seed=seed)


class TripletSampler:
    """Uniform (user, pos, neg) sampler over training edges with private RNG state."""

    def __init__(self, train: InteractionGraph, seed):
        if train.num_edges == 0:
            raise DataError("cannot sample triplets from an empty training graph")
        max_deg = int(train.degrees().max())
        if train.num_items <= max_deg:
            raise DataError("no valid negatives: an item outside every user's set must exist")
        self.train = train
        self.rng = np.random.default_rng(seed)
        self._edges = train.edge_array()

    def sample(self, batch_size) -> TripletBatch:
        idx = self.rng.integers(0, len(self._edges), size=batch_size)
        users = self._edges[idx, 0].copy()
        pos = self._edges[idx, 1].copy()
        neg = self.rng.integers(0, self.train.num_items, size=batch_size)
        item_sets = self.train.item_sets
        for k in range(batch_size):
            seen = item_sets[users[k]]
            while neg[k] in seen:
                neg[k] = self.rng.integers(0, self.train.num_items)
        return TripletBatch(users=users, pos_items=pos, neg_items=neg)


def sample_triplets(train: InteractionGraph, batch_size, rng_seed) -> TripletBatch:
    """One-shot convenience wrapper around :class:`TripletSampler`."""
    return TripletSampler(train, rng_seed).sample(batch_size)


def build_id_maps(interaction_pairs, social_pairs=None):
    """Densely re-index arbitrary non-negative ids.

    Users appearing only in the social graph are retained (they still take
    part in friend-mean computations). Returns (user_map, item_map) as
    external -> internal dicts with ids assigned in sorted external order.
    """
    user_ids = {u for u, _ in interaction_pairs}
    item_ids = {i for _, i in interaction_pairs}
    if social_pairs is not None:
        for a, b in social_pairs:
            user_ids.add(a)
            user_ids.add(b)
    user_map = {ext: k for k, ext in enumerate(sorted(user_ids))}
    item_map = {ext: k for k, ext in enumerate(sorted(item_ids))}
    return user_map, item_map


def write_id_map(id_map, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ext, internal in sorted(id_map.items(), key=lambda kv: kv[1]):
            fh.write(f"{ext}\t{internal}\n")


def load_dataset(interactions_path, social_path=None, out_dir=None):
    """Load a dataset with dense re-indexing and optional persisted id maps.

    Returns (InteractionGraph, SocialGraph | None, dropped_self_loops).
    When ``out_dir`` is given, user/item id-map files are written next to
    the run outputs.
    """
    ipairs = _parse_pair_lines(interactions_path)
    if not ipairs:
        raise DataError(f"{interactions_path}: no interactions")
    spairs = _parse_pair_lines(social_path) if social_path else None
    user_map, item_map = build_id_maps(ipairs, spairs)
    M, N = len(user_map), len(item_map)
    g = InteractionGraph.from_edges(
        ((user_map[u], item_map[i]) for u, i in ipairs), M, N
    )
    social, dropped = None, 0
    if spairs is not None:
        kept = []
        for a, b in spairs:
            if a == b:
                dropped += 1
            else:
                kept.append((user_map[a], user_map[b]))
        social = SocialGraph.from_edges(kept, M)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_id_map(user_map, os.path.join(out_dir, "user_id_map.tsv"))
        write_id_map(item_map, os.path.join(out_dir, "item_id_map.tsv"))
    return g, social, dropped
