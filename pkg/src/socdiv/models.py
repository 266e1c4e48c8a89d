"""Embedding backbones (MF, SocialMF, TrustMF, social GCN) and scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import InteractionGraph, SocialGraph

BACKBONES = ("mf", "socialmf", "trustmf", "diffnet")

CHECKPOINT_FORMAT_VERSION = 1

NEG_INF = -np.inf


class ModelError(ValueError):
    """Raised for inconsistent model configuration or inputs."""


@dataclass
class EmbeddingModel:
    """User/item embedding tables plus backbone-specific parameters.

    ``user_table`` holds the free user embeddings (the GCN backbone's layer-0
    input), ``item_table`` the item embeddings. TrustMF adds a trustee table
    ``trustee_table`` used only by its trust-reconstruction loss.
    """

    backbone: str
    social_enabled: bool
    dim: int
    user_table: np.ndarray  # (M, d)
    item_table: np.ndarray  # (N, d)
    trustee_table: np.ndarray = None  # (M, d), TrustMF only
    num_gcn_layers: int = 2
    seed: int = 0

    @property
    def num_users(self):
        return self.user_table.shape[0]

    @property
    def num_items(self):
        return self.item_table.shape[0]

    def tables(self):
        """Name -> array view of every trainable table."""
        out = {"user": self.user_table, "item": self.item_table}
        if self.trustee_table is not None:
            out["trustee"] = self.trustee_table
        return out

    def squared_norm(self):
        return float(sum(np.sum(t * t) for t in self.tables().values()))

    def check_finite(self):
        for name, t in self.tables().items():
            if not np.all(np.isfinite(t)):
                raise ModelError(f"non-finite values in {name} table")

    def copy(self):
        return EmbeddingModel(
            backbone=self.backbone,
            social_enabled=self.social_enabled,
            dim=self.dim,
            user_table=self.user_table.copy(),
            item_table=self.item_table.copy(),
            trustee_table=None if self.trustee_table is None else self.trustee_table.copy(),
            num_gcn_layers=self.num_gcn_layers,
            seed=self.seed,
        )


@dataclass
class ForwardOutput:
    """Final user/item embeddings produced by a backbone's forward pass."""

    user_embeddings: np.ndarray  # (M, d)
    item_embeddings: np.ndarray  # (N, d)


def init_model(config, num_users, num_items, seed) -> EmbeddingModel:
    """Initialize tables i.i.d. uniform on [-0.5/sqrt(d), +0.5/sqrt(d)]."""
    d = config.dim
    if d <= 0:
        raise ModelError(f"embedding dim must be positive, got {d}")
    rng = np.random.default_rng(seed)
    scale = 0.5 / np.sqrt(d)
    user = rng.uniform(-scale, scale, size=(num_users, d))
    item = rng.uniform(-scale, scale, size=(num_items, d))
    trustee = None
    if config.backbone == "trustmf":
        trustee = rng.uniform(-scale, scale, size=(num_users, d))
    return EmbeddingModel(
        backbone=config.backbone,
        social_enabled=config.social_enabled,
        dim=d,
        user_table=user,
        item_table=item,
        trustee_table=trustee,
        num_gcn_layers=config.num_gcn_layers,
        seed=seed,
    )


def social_propagation_matrix(social: SocialGraph) -> sp.csr_matrix:
    """One diffusion layer: h' = (h + mean of trusted users' h) / 2.

    Users with no out-neighbors copy their own row (identity row).
    """
    M = social.num_users
    rows, cols, vals = [], [], []
    for a in range(M):
        nbrs = social.out_neighbors[a]
        if len(nbrs) == 0:
            rows.append(a)
            cols.append(a)
            vals.append(1.0)
        else:
            rows.append(a)
            cols.append(a)
            vals.append(0.5)
            w = 0.5 / len(nbrs)
            for b in nbrs.tolist():
                rows.append(a)
                cols.append(b)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(M, M))


def item_mean_matrix(train: InteractionGraph) -> sp.csr_matrix:
    """Row-normalized user-item incidence; zero rows for users without items."""
    rows, cols, vals = [], [], []
    for a in range(train.num_users):
        items = train.adjacency[a]
        if len(items) == 0:
            continue
        w = 1.0 / len(items)
        for i in items.tolist():
            rows.append(a)
            cols.append(i)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(train.num_users, train.num_items))


class GraphContext:
    """Precomputed sparse operators for the GCN backbone's forward/backward."""

    def __init__(self, train: InteractionGraph, social: SocialGraph = None):
        self.item_mean = item_mean_matrix(train)
        self.social_prop = social_propagation_matrix(social) if social is not None else None


def forward(model: EmbeddingModel, train: InteractionGraph, social: SocialGraph = None,
            ctx: GraphContext = None) -> ForwardOutput:
    """Produce final user/item embeddings for any backbone.

    MF-family backbones pass tables through unchanged (their social structure
    enters only via loss terms). The GCN backbone diffuses user embeddings
    over the trust graph and adds each user's mean consumed-item embedding.
    """
    if model.social_enabled and social is None and (ctx is None or ctx.social_prop is None):
        raise ModelError("social graph required when the social module is enabled")

    if model.backbone != "diffnet":
        return ForwardOutput(user_embeddings=model.user_table,
                             item_embeddings=model.item_table)

    if ctx is None:
        ctx = GraphContext(train, social if model.social_enabled else None)
    h = model.user_table
    if model.social_enabled:
        for _ in range(model.num_gcn_layers):
            h = ctx.social_prop @ h
    p = h + ctx.item_mean @ model.item_table
    return ForwardOutput(user_embeddings=p, item_embeddings=model.item_table)


def backward_user_embeddings(model: EmbeddingModel, grad_p: np.ndarray,
                             ctx: GraphContext = None):
    """Backprop a gradient on final user embeddings to (user_table, item_table).

    For MF-family backbones this is the identity on the user table. For the
    GCN backbone the gradient flows through K diffusion layers and the
    item-mean aggregation.
    """
    if model.backbone != "diffnet":
        return grad_p, np.zeros_like(model.item_table)
    if ctx is None:
        raise ModelError("GraphContext required for GCN backward")
    g = grad_p
    if model.social_enabled:
        pt = ctx.social_prop.T.tocsr()
        for _ in range(model.num_gcn_layers):
            g = pt @ g
    grad_item = ctx.item_mean.T @ grad_p
    return g, grad_item


def score_all_items(fo: ForwardOutput, user, exclude=()) -> np.ndarray:
    """Dot-product scores of every item for one user; excluded items get -inf."""
    scores = fo.item_embeddings @ fo.user_embeddings[user]
    if len(exclude):
        scores[np.fromiter(exclude, dtype=np.int64)] = NEG_INF
    return scores


def topk(scores: np.ndarray, k) -> np.ndarray:
    """Top-k item ids, score descending, ties broken by ascending item id.

    Items with non-finite scores never appear; if fewer than k remain, all
    of them are returned.
    """
    if k < 1:
        raise ModelError(f"k must be >= 1, got {k}")
    finite = np.isfinite(scores)
    n_finite = int(finite.sum())
    k_eff = min(k, n_finite)
    if k_eff == 0:
        return np.empty(0, dtype=np.int64)
    # stable sort on (-score, id): lexsort's last key dominates
    ids = np.arange(len(scores))
    order = np.lexsort((ids, -scores))
    order = order[finite[order]]
    return order[:k_eff].astype(np.int64)


def save_checkpoint(model: EmbeddingModel, path):
    """Lossless .npz checkpoint with a format-version field."""
    arrays = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION),
        "backbone": np.array(model.backbone),
        "social_enabled": np.array(model.social_enabled),
        "dim": np.array(model.dim),
        "num_gcn_layers": np.array(model.num_gcn_layers),
        "seed": np.array(model.seed),
        "user_table": model.user_table,
        "item_table": model.item_table,
    }
    if model.trustee_table is not None:
        arrays["trustee_table"] = model.trustee_table
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> EmbeddingModel:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ModelError(f"unsupported checkpoint format version {version}")
        return EmbeddingModel(
            backbone=str(z["backbone"]),
            social_enabled=bool(z["social_enabled"]),
            dim=int(z["dim"]),
            user_table=z["user_table"],
            item_table=z["item_table"],
            trustee_table=z["trustee_table"] if "trustee_table" in z.files else None,
            num_gcn_layers=int(z["num_gcn_layers"]),
            seed=int(z["seed"]),
        )
