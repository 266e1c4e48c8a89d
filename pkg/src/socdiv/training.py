"""Teacher/student training loops: joint objective, early stopping, epoch logs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import losses
from .config import TrainConfig
from .data import DatasetSplit, InteractionGraph, SocialGraph, TripletSampler
from .metrics import MetricError, recall_at_k, recommend_topk
from .models import (EmbeddingModel, GraphContext, ModelError,
                     backward_user_embeddings, forward, init_model)
from .optim import Adam

VALIDATION_FRACTION = 0.1

EPOCH_LOG_COLUMNS = ("epoch", "l_rec", "l_distill", "l_total", "val_recall", "mean_psi")


class TrainingError(RuntimeError):
    pass


@dataclass
class EpochRecord:
    epoch: int
    l_rec: float
    l_distill: float
    l_total: float
    val_recall: float
    mean_psi: float

    def to_line(self):
        return (f"{self.epoch}\t{self.l_rec:.6g}\t{self.l_distill:.6g}\t"
                f"{self.l_total:.6g}\t{self.val_recall:.6g}\t{self.mean_psi:.6g}")


@dataclass
class TrainResult:
    model: EmbeddingModel
    log: list
    best_epoch: int


def write_epoch_log(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(EPOCH_LOG_COLUMNS) + "\n")
        for rec in records:
            fh.write(rec.to_line() + "\n")


def carve_validation(train: InteractionGraph, seed):
    """Hold out ~10% of training edges per user for early stopping.

    Users whose degree would round the holdout to zero still contribute one
    validation edge once they have at least 5 training edges; without this
    the early-stopping signal vanishes on sparse data.
    """
    rng = np.random.default_rng(seed)
    core_edges, val_edges = [], []
    for u in range(train.num_users):
        items = train.adjacency[u]
        d = len(items)
        n_val = int(np.floor(VALIDATION_FRACTION * d))
        if n_val == 0 and d >= 5:
            n_val = 1
        perm = rng.permutation(d)
        val_idx = set(perm[:n_val].tolist())
        for k, i in enumerate(items.tolist()):
            (val_edges if k in val_idx else core_edges).append((u, i))
    core = InteractionGraph.from_edges(core_edges, train.num_users, train.num_items)
    val = InteractionGraph.from_edges(val_edges, train.num_users, train.num_items)
    return core, val


def _mean_psi(fo, social):
    if social is None:
        return float("nan")
    users, cos = losses.user_friend_potentials(fo.user_embeddings, social)
    if len(users) == 0:
        return float("nan")
    return float(np.mean(cos))


def _run_training(config: TrainConfig, split: DatasetSplit, social, distill_ctx,
                  unsupervised):
    """Shared loop behind train_teacher / train_student.

    ``distill_ctx`` carries the frozen teacher potentials (or None);
    ``unsupervised`` switches the distillation term to the teacher-free
    similarity penalty.
    """
    core, val = carve_validation(split.train, config.seed + 7919)
    has_val = val.num_edges > 0

    model = init_model(config, split.train.num_users, split.train.num_items, config.seed)
    graph_ctx = GraphContext(core, social if config.social_enabled else None)
    sampler = TripletSampler(core, config.seed + 104729)
    trust_rng = np.random.default_rng(config.seed + 1299709)
    opt = Adam(model.tables(), config.learning_rate)

    batches = max(1, math.ceil(core.num_edges / config.batch_size))
    lam = config.l2_lambda
    beta = config.beta
    distilling = (distill_ctx is not None or unsupervised) and beta > 0

    best_model = model.copy()
    best_epoch = 0
    best_score = -np.inf
    patience_left = config.early_stop_patience
    log = []

    for epoch in range(1, config.epochs + 1):
        ep_rec, ep_dist = 0.0, 0.0
        for _ in range(batches):
            batch = sampler.sample(config.batch_size)
            fo = forward(model, core, social if config.social_enabled else None,
                         ctx=graph_ctx)
            grad_p, grad_q = losses.bpr_grads(fo, batch)
            l_rec = losses.bpr_loss(fo, batch, model.squared_norm(), lam)

            grad_u_extra = None
            grad_w = None
            if config.social_enabled and config.backbone == "socialmf":
                reg = losses.socialmf_regularizer(fo, social)
                l_rec += config.social_reg_weight * reg
                grad_p = grad_p + config.social_reg_weight * \
                    losses.socialmf_reg_grads(fo, social)
            elif config.social_enabled and config.backbone == "trustmf":
                n_pos = min(config.batch_size, max(1, social.num_edges))
                a_ids, b_ids, labels = losses.sample_trust_pairs(social, n_pos, trust_rng)
                l_trust = losses.trustmf_loss(model, a_ids, b_ids, labels)
                l_rec += config.trust_loss_weight * l_trust
                gu, gw = losses.trustmf_grads(model, a_ids, b_ids, labels)
                grad_u_extra = config.trust_loss_weight * gu
                grad_w = config.trust_loss_weight * gw

            l_dist = 0.0
            # warm-up: let the ranking term shape the embeddings before the
            # similarity-matching term starts pulling on them
            if distilling and epoch > config.distill_warmup_epochs:
                if unsupervised:
                    l_dist, g_dist = losses.unsupervised_div_grads(
                        fo, social, users=batch.users)
                else:
                    l_dist, g_dist = losses.distill_grads(
                        fo, distill_ctx, users=batch.users)
                grad_p = grad_p + beta * g_dist

            grad_user, grad_item_agg = backward_user_embeddings(model, grad_p, graph_ctx)
            grad_item = grad_q + grad_item_agg
            if grad_u_extra is not None:
                grad_user = grad_user + grad_u_extra

            grads = {"user": grad_user, "item": grad_item}
            if model.trustee_table is not None:
                grads["trustee"] = grad_w if grad_w is not None \
                    else np.zeros_like(model.trustee_table)
            # L2 weight decay on the rows each batch example touches,
            # scaled per example like the ranking term itself
            scale = 2.0 * lam / len(batch)
            np.add.at(grad_user, batch.users, scale * model.user_table[batch.users])
            np.add.at(grad_item, batch.pos_items,
                      scale * model.item_table[batch.pos_items])
            np.add.at(grad_item, batch.neg_items,
                      scale * model.item_table[batch.neg_items])
            if grad_w is not None and len(a_ids):
                tscale = 2.0 * lam / len(a_ids)
                np.add.at(grads["trustee"], b_ids,
                          tscale * model.trustee_table[b_ids])
                np.add.at(grad_user, a_ids, tscale * model.user_table[a_ids])
            opt.step(model.tables(), grads)

            ep_rec += l_rec
            ep_dist += l_dist

        model.check_finite()
        ep_rec /= batches
        ep_dist /= batches

        fo = forward(model, core, social if config.social_enabled else None,
                     ctx=graph_ctx)
        if has_val:
            lists = recommend_topk(fo, core, config.eval_k)
            try:
                val_recall = recall_at_k(lists, val)
            except MetricError:
                val_recall = float("nan")
            score = val_recall
        else:
            val_recall = float("nan")
            score = -ep_rec  # fall back to training loss when no validation edges
        mean_psi = _mean_psi(fo, social)
        log.append(EpochRecord(epoch=epoch, l_rec=ep_rec, l_distill=ep_dist,
                               l_total=ep_rec + beta * ep_dist,
                               val_recall=val_recall, mean_psi=mean_psi))

        if score > best_score:
            best_score = score
            best_model = model.copy()
            best_epoch = epoch
            patience_left = config.early_stop_patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break

    return TrainResult(model=best_model, log=log, best_epoch=best_epoch)


def train_teacher(config: TrainConfig, split: DatasetSplit) -> TrainResult:
    """Train the non-social variant on the ranking loss alone."""
    cfg = config.replace(social_enabled=False, beta=0.0)
    return _run_training(cfg, split, social=None, distill_ctx=None, unsupervised=False)


def train_student(config: TrainConfig, split: DatasetSplit, social: SocialGraph,
                  teacher: EmbeddingModel = None) -> TrainResult:
    """Train the social model, optionally distilling user-friend similarity.

    The teacher stays frozen throughout: only its forward output is read.
    """
    strategy = config.teacher_strategy
    unsupervised = strategy == "unsupervised"
    distill_ctx = None
    if strategy in ("same-family", "cross-model") and config.beta > 0:
        if teacher is None:
            raise TrainingError(
                f"teacher model required for strategy {strategy!r} with beta > 0")
        if teacher.dim != config.dim:
            raise ModelError(
                f"teacher dim {teacher.dim} != student dim {config.dim}")
        teacher_fo = forward(teacher, split.train, None,
                             ctx=GraphContext(split.train, None))
        distill_ctx = losses.DistillContext.build(teacher_fo, social)
    cfg = config.replace(social_enabled=True)
    return _run_training(cfg, split, social=social, distill_ctx=distill_ctx,
                         unsupervised=unsupervised)
