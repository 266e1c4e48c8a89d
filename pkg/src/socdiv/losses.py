"""Loss values and analytic gradients: BPR, social terms, similarity distillation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import SocialGraph, TripletBatch
from .models import EmbeddingModel, ForwardOutput

DEGENERATE_NORM = 1e-12


def log_sigmoid(x):
    """Numerically stable log(sigmoid(x))."""
    return -np.logaddexp(0.0, -x)


def sigmoid(x):
    return np.exp(log_sigmoid(x))


# ---------------------------------------------------------------------------
# BPR ranking loss

def bpr_loss(fo: ForwardOutput, batch: TripletBatch, params_sq_norm, lam) -> float:
    """Mean -ln sigma(r_ai - r_aj) over the batch plus lam * ||theta||^2."""
    p = fo.user_embeddings[batch.users]
    margin = np.einsum(
        "bd,bd->b", p,
        fo.item_embeddings[batch.pos_items] - fo.item_embeddings[batch.neg_items],
    )
    return float(np.mean(-log_sigmoid(margin)) + lam * params_sq_norm)


def bpr_grads(fo: ForwardOutput, batch: TripletBatch):
    """Gradients of the batch-mean BPR term w.r.t. final embeddings.

    Returns dense (grad_user_embeddings, grad_item_embeddings); the L2 term
    is handled by the caller on the parameter tables.
    """
    p = fo.user_embeddings[batch.users]
    qi = fo.item_embeddings[batch.pos_items]
    qj = fo.item_embeddings[batch.neg_items]
    margin = np.einsum("bd,bd->b", p, qi - qj)
    # d(-ln sigma(m))/dm = -sigma(-m)
    coef = -sigmoid(-margin) / len(batch)
    grad_p = np.zeros_like(fo.user_embeddings)
    grad_q = np.zeros_like(fo.item_embeddings)
    np.add.at(grad_p, batch.users, coef[:, None] * (qi - qj))
    np.add.at(grad_q, batch.pos_items, coef[:, None] * p)
    np.add.at(grad_q, batch.neg_items, -coef[:, None] * p)
    return grad_p, grad_q


# ---------------------------------------------------------------------------
# SocialMF regularizer

def socialmf_regularizer(fo: ForwardOutput, social: SocialGraph) -> float:
    """Mean squared distance between each user and their friend-mean."""
    users = social.users_with_friends()
    if len(users) == 0:
        return 0.0
    p = fo.user_embeddings
    total = 0.0
    for a in users.tolist():
        diff = p[a] - p[social.out_neighbors[a]].mean(axis=0)
        total += float(diff @ diff)
    return total / len(users)


def socialmf_reg_grads(fo: ForwardOutput, social: SocialGraph):
    """Gradient of :func:`socialmf_regularizer` w.r.t. user embeddings."""
    users = social.users_with_friends()
    grad = np.zeros_like(fo.user_embeddings)
    if len(users) == 0:
        return grad
    p = fo.user_embeddings
    inv_n = 1.0 / len(users)
    for a in users.tolist():
        nbrs = social.out_neighbors[a]
        diff = p[a] - p[nbrs].mean(axis=0)
        grad[a] += 2.0 * inv_n * diff
        grad[nbrs] -= (2.0 * inv_n / len(nbrs)) * diff
    return grad


# ---------------------------------------------------------------------------
# TrustMF trust-reconstruction loss

def sample_trust_pairs(social: SocialGraph, n_pos, rng):
    """Observed edges (s=1) and uniform non-edges (s=0) in a 1:1 ratio."""
    edges = [(a, b) for a in range(social.num_users)
             for b in social.out_neighbors[a].tolist()]
    if not edges:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)
    idx = rng.integers(0, len(edges), size=n_pos)
    pos = [edges[k] for k in idx]
    edge_set = set(edges)
    neg = []
    M = social.num_users
    while len(neg) < n_pos:
        a = int(rng.integers(0, M))
        b = int(rng.integers(0, M))
        if a != b and (a, b) not in edge_set:
            neg.append((a, b))
    a_ids = np.array([x[0] for x in pos + neg], dtype=np.int64)
    b_ids = np.array([x[1] for x in pos + neg], dtype=np.int64)
    labels = np.concatenate([np.ones(n_pos), np.zeros(n_pos)])
    return a_ids, b_ids, labels


def trustmf_loss(model: EmbeddingModel, a_ids, b_ids, labels) -> float:
    """Mean BCE between sigma(user_a . trustee_b) and the trust label."""
    if len(a_ids) == 0:
        return 0.0
    z = np.einsum("bd,bd->b", model.user_table[a_ids], model.trustee_table[b_ids])
    # -s*log(sigma(z)) - (1-s)*log(1 - sigma(z)), stable form
    loss = -labels * log_sigmoid(z) - (1.0 - labels) * log_sigmoid(-z)
    return float(np.mean(loss))


def trustmf_grads(model: EmbeddingModel, a_ids, b_ids, labels):
    """Gradients of :func:`trustmf_loss` w.r.t. (user_table, trustee_table)."""
    grad_u = np.zeros_like(model.user_table)
    grad_w = np.zeros_like(model.trustee_table)
    if len(a_ids) == 0:
        return grad_u, grad_w
    u = model.user_table[a_ids]
    w = model.trustee_table[b_ids]
    z = np.einsum("bd,bd->b", u, w)
    coef = (sigmoid(z) - labels) / len(a_ids)
    np.add.at(grad_u, a_ids, coef[:, None] * w)
    np.add.at(grad_w, b_ids, coef[:, None] * u)
    return grad_u, grad_w


# ---------------------------------------------------------------------------
# Angle-wise potentials and friend means

def angle_potential(p_a, p_b) -> float:
    """Cosine of the angle between two embeddings, clamped to [-1, 1].

    Near-zero vectors are degenerate: the potential is defined as 0.
    """
    na = np.linalg.norm(p_a)
    nb = np.linalg.norm(p_b)
    if na < DEGENERATE_NORM or nb < DEGENERATE_NORM:
        return 0.0
    return float(np.clip(p_a @ p_b / (na * nb), -1.0, 1.0))


def friend_mean(embeddings, social: SocialGraph):
    """Per-user mean embedding of trusted users.

    Returns (means, active) where friendless users have a zero row and
    active=False; they are excluded from distillation downstream.
    """
    M = social.num_users
    means = np.zeros_like(embeddings)
    active = np.zeros(M, dtype=bool)
    for a in range(M):
        nbrs = social.out_neighbors[a]
        if len(nbrs):
            means[a] = embeddings[nbrs].mean(axis=0)
            active[a] = True
    return means, active


def _cosine_with_grads(u, v):
    """Row-wise cosine plus d(cos)/du, d(cos)/dv; degenerate rows get zeros."""
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    valid = (nu >= DEGENERATE_NORM) & (nv >= DEGENERATE_NORM)
    nu_s = np.where(valid, nu, 1.0)
    nv_s = np.where(valid, nv, 1.0)
    dots = np.einsum("bd,bd->b", u, v)
    cos = np.where(valid, dots / (nu_s * nv_s), 0.0)
    du = (v / (nu_s * nv_s)[:, None] - (cos / nu_s**2)[:, None] * u)
    dv = (u / (nu_s * nv_s)[:, None] - (cos / nv_s**2)[:, None] * v)
    du[~valid] = 0.0
    dv[~valid] = 0.0
    return np.clip(cos, -1.0, 1.0), du, dv, valid


def user_friend_potentials(embeddings, social: SocialGraph, users=None):
    """Cosine between each user and their friend-mean.

    Returns (users, cos) restricted to users with friends (optionally also to
    the given user subset).
    """
    if users is None:
        users = social.users_with_friends()
    else:
        users = np.asarray(
            [a for a in np.unique(users) if len(social.out_neighbors[a]) > 0],
            dtype=np.int64,
        )
    if len(users) == 0:
        return users, np.empty(0)
    means = np.stack([embeddings[social.out_neighbors[a]].mean(axis=0)
                      for a in users.tolist()])
    cos, _, _, _ = _cosine_with_grads(embeddings[users], means)
    return users, cos


@dataclass
class DistillContext:
    """Frozen-teacher side of the distillation loss."""

    teacher_output: ForwardOutput
    social: SocialGraph
    psi_teacher: np.ndarray  # per-user, 0 for inactive users
    active: np.ndarray  # bool mask, users with friends

    @classmethod
    def build(cls, teacher_output: ForwardOutput, social: SocialGraph):
        users, cos = user_friend_potentials(teacher_output.user_embeddings, social)
        psi = np.zeros(social.num_users)
        active = np.zeros(social.num_users, dtype=bool)
        psi[users] = cos
        active[users] = True
        return cls(teacher_output=teacher_output, social=social,
                   psi_teacher=psi, active=active)


def _psi_loss_and_grads(embeddings, social, users, target_psi, weight_fn):
    """Shared machinery: mean weight_fn(psi_S - target) over the user subset.

    weight_fn maps residuals to (loss_terms, dloss/dpsi). Gradients are
    scattered to each user row and, through the friend-mean, to friend rows.
    """
    if len(users) == 0:
        return 0.0, None
    u = embeddings[users]
    means = np.stack([embeddings[social.out_neighbors[a]].mean(axis=0)
                      for a in users.tolist()])
    cos, du, dv, _ = _cosine_with_grads(u, means)
    terms, dpsi = weight_fn(cos - target_psi, cos)
    n = len(users)
    loss = float(np.sum(terms) / n)
    grad = np.zeros_like(embeddings)
    coef = (dpsi / n)[:, None]
    np.add.at(grad, users, coef * du)
    for k, a in enumerate(users.tolist()):
        nbrs = social.out_neighbors[a]
        grad[nbrs] += (coef[k] / len(nbrs)) * dv[k]
    return loss, grad


def distill_loss(student_fo: ForwardOutput, ctx: DistillContext, users=None) -> float:
    """Mean squared gap between teacher and student user/friend-mean cosines."""
    loss, _ = distill_grads(student_fo, ctx, users)
    return loss


def distill_grads(student_fo: ForwardOutput, ctx: DistillContext, users=None):
    """Loss value and gradient w.r.t. student final user embeddings."""
    if users is None:
        sel = np.flatnonzero(ctx.active)
    else:
        sel = np.asarray([a for a in np.unique(users) if ctx.active[a]], dtype=np.int64)
    if len(sel) == 0:
        warnings.warn("no users with friends; distillation loss is 0")
        return 0.0, np.zeros_like(student_fo.user_embeddings)
    target = ctx.psi_teacher[sel]

    def sq(residual, _cos):
        return residual**2, 2.0 * residual

    loss, grad = _psi_loss_and_grads(
        student_fo.user_embeddings, ctx.social, sel, target, sq
    )
    return loss, grad


def unsupervised_div_loss(student_fo: ForwardOutput, social: SocialGraph,
                          users=None) -> float:
    loss, _ = unsupervised_div_grads(student_fo, social, users)
    return loss


def unsupervised_div_grads(student_fo: ForwardOutput, social: SocialGraph, users=None):
    """Teacher-free variant: push user/friend-mean cosines toward zero."""
    if users is None:
        sel = social.users_with_friends()
    else:
        sel = np.asarray(
            [a for a in np.unique(users) if len(social.out_neighbors[a]) > 0],
            dtype=np.int64,
        )
    if len(sel) == 0:
        return 0.0, np.zeros_like(student_fo.user_embeddings)

    def sq(residual, _cos):
        return residual**2, 2.0 * residual

    return _psi_loss_and_grads(
        student_fo.user_embeddings, social, sel, np.zeros(len(sel)), sq
    )


def joint_loss(recommendation_loss, distill, beta) -> float:
    """L = L_R + beta * L_D."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return float(recommendation_loss + beta * distill)
