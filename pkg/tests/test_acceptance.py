"""End-to-end acceptance suite.

Each test asserts one headline property of the toolkit at its stated
tolerance; the heavyweight training fixtures are shared across tests.
Budgets: the gradient suite runs in under a minute, the metric and DPP
oracles in seconds, and each trend reproduction in under 10-20 minutes.
"""

import time

import numpy as np
import pytest

from socdiv import losses
from socdiv.cli import file_digest
from socdiv.config import TrainConfig
from socdiv.data import InteractionGraph, SocialGraph, split_holdout
from socdiv.metrics import (RankedLists, coverage_at_k, entropy_at_k,
                            ndcg_at_k, recall_at_k, evaluate)
from socdiv.models import ForwardOutput, forward, init_model, save_checkpoint
from socdiv.rerank import CandidateSet, dpp_kernel, greedy_map_dpp, log_det
from socdiv.synthetic import SyntheticConfig, generate_synthetic
from socdiv.training import train_student, train_teacher

from oracles import (best_subset_logdet, brute_coverage, brute_entropy,
                     brute_ndcg, brute_recall, central_diff, random_instance,
                     rel_error)

EVAL_K = 50
SEEDS = (1, 2, 3, 4, 5)

# calibrated experiment configuration for the trend reproductions
DATA_CFG = SyntheticConfig(num_users=300, num_items=500, communities=5,
                           homophily=0.9, seed=100)
TRAIN_CFG = TrainConfig(dim=64, epochs=400, early_stop_patience=50,
                        eval_k=EVAL_K, social_reg_weight=0.3,
                        distill_warmup_epochs=30)


# ---------------------------------------------------------------------------
# criterion 1: analytic gradients vs central finite differences

def test_criterion_1_gradient_suite():
    start = time.monotonic()
    tol = 1e-4
    checks = 0
    for seed in range(10):  # 10 instances x 5 losses = 50 randomized checks
        rng = np.random.default_rng(9000 + seed)
        train, social, fo, batch = random_instance(rng)
        if len(social.users_with_friends()) == 0:
            social = SocialGraph.from_edges([(0, 1)], social.num_users)

        gp, gq = losses.bpr_grads(fo, batch)
        assert rel_error(gp, central_diff(
            lambda: losses.bpr_loss(fo, batch, 0.0, 0.0), fo.user_embeddings)) < tol
        assert rel_error(gq, central_diff(
            lambda: losses.bpr_loss(fo, batch, 0.0, 0.0), fo.item_embeddings)) < tol
        checks += 1

        g = losses.socialmf_reg_grads(fo, social)
        assert rel_error(g, central_diff(
            lambda: losses.socialmf_regularizer(fo, social), fo.user_embeddings)) < tol
        checks += 1

        M, d = fo.user_embeddings.shape
        model = init_model(TrainConfig(backbone="trustmf", dim=d), M, 3, seed=seed)
        model.user_table = rng.normal(size=(M, d))
        model.trustee_table = rng.normal(size=(M, d))
        a = rng.integers(0, M, size=5)
        b = rng.integers(0, M, size=5)
        labels = rng.integers(0, 2, size=5).astype(float)
        gu, gw = losses.trustmf_grads(model, a, b, labels)
        assert rel_error(gu, central_diff(
            lambda: losses.trustmf_loss(model, a, b, labels), model.user_table)) < tol
        assert rel_error(gw, central_diff(
            lambda: losses.trustmf_loss(model, a, b, labels), model.trustee_table)) < tol
        checks += 1

        teacher = ForwardOutput(
            user_embeddings=rng.normal(size=fo.user_embeddings.shape),
            item_embeddings=fo.item_embeddings)
        ctx = losses.DistillContext.build(teacher, social)
        _, g = losses.distill_grads(fo, ctx)
        assert rel_error(g, central_diff(
            lambda: losses.distill_loss(fo, ctx), fo.user_embeddings)) < tol
        checks += 1

        _, g = losses.unsupervised_div_grads(fo, social)
        assert rel_error(g, central_diff(
            lambda: losses.unsupervised_div_loss(fo, social),
            fo.user_embeddings)) < tol
        checks += 1
    elapsed = time.monotonic() - start
    assert checks == 50
    assert elapsed < 60.0
    print(f"criterion 1 PASS: 50 gradient checks within 1e-4 in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: metric brute-force oracle

def test_criterion_2_metric_oracle():
    start = time.monotonic()
    for seed in range(200):
        rng = np.random.default_rng(20000 + seed)
        M = int(rng.integers(1, 6))
        N = int(rng.integers(2, 9))
        K = int(rng.integers(1, 5))
        lists = {u: rng.choice(N, size=min(K, N), replace=False).tolist()
                 for u in range(M)}
        test_sets, edges = [], []
        for u in range(M):
            rel = set(rng.choice(N, size=int(rng.integers(0, N + 1)),
                                 replace=False).tolist())
            test_sets.append(rel)
            edges.extend((u, i) for i in rel)
        if not any(test_sets):
            test_sets[0] = {0}
            edges.append((0, 0))
        ranked = RankedLists(lists=lists, k=K)
        test = InteractionGraph.from_edges(edges, M, N)
        assert recall_at_k(ranked, test) == pytest.approx(
            brute_recall(lists, test_sets), abs=1e-12)
        assert ndcg_at_k(ranked, test) == pytest.approx(
            brute_ndcg(lists, test_sets, K), abs=1e-12)
        assert coverage_at_k(ranked, N) == pytest.approx(
            brute_coverage(lists, N), abs=1e-12)
        assert entropy_at_k(ranked) == pytest.approx(
            brute_entropy(lists), abs=1e-12)
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"criterion 2 PASS: 200 instances match brute force in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: DPP greedy vs exhaustive optimum

def test_criterion_3_dpp_oracle():
    start = time.monotonic()
    bound = 1.0 - 1.0 / np.e
    rng = np.random.default_rng(31)
    checked = 0
    while checked < 100:
        C = int(rng.integers(4, 11))
        k = int(rng.integers(1, 4))
        cands = CandidateSet(item_ids=np.arange(C),
                             relevance=rng.uniform(0.5, 1.0, size=C),
                             item_vectors=rng.normal(size=(C, 8)))
        L = dpp_kernel(cands, float(rng.uniform(0.3, 0.7)))
        selected = greedy_map_dpp(L, k)
        if len(selected) < k:
            continue
        opt, _ = best_subset_logdet(L, k)
        got = log_det(L, selected)
        if k == 1:
            assert got == pytest.approx(opt, rel=1e-9)
        else:
            assert opt > 0
            assert got >= bound * opt - 1e-9
        checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(f"criterion 3 PASS: 100 kernels within (1-1/e) bound in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# shared training fixtures for the trend reproductions

@pytest.fixture(scope="module")
def accept_data():
    inter, soc, _, _ = generate_synthetic(DATA_CFG)
    g = InteractionGraph.from_edges(inter, DATA_CFG.num_users, DATA_CFG.num_items)
    social = SocialGraph.from_edges(soc, DATA_CFG.num_users)
    return g, social


@pytest.fixture(scope="module")
def triple_runs(accept_data):
    """Non-social / base / distilled reports per backbone and seed.

    Shared by the direction criteria; also keeps the base-run training logs
    for the similarity-trajectory criterion.
    """
    g, social = accept_data
    start = time.monotonic()
    reports = {}
    base_logs = {}
    for backbone in ("socialmf", "diffnet"):
        for seed in SEEDS:
            split = split_holdout(g, 0.2, seed)
            cfg = TRAIN_CFG.replace(backbone=backbone, seed=seed)
            teacher = train_teacher(cfg, split)
            r_ns = evaluate(forward(teacher.model, split.train, None),
                            split.train, split.test, EVAL_K, social)
            base = train_student(cfg.replace(beta=0.0), split, social, None)
            r_base = evaluate(forward(base.model, split.train, social),
                              split.train, split.test, EVAL_K, social)
            div = train_student(cfg.replace(beta=0.1), split, social, teacher.model)
            r_div = evaluate(forward(div.model, split.train, social),
                             split.train, split.test, EVAL_K, social)
            reports[(backbone, seed)] = (r_ns, r_base, r_div)
            base_logs[(backbone, seed)] = base
    elapsed = time.monotonic() - start
    return reports, base_logs, elapsed


# criterion 4: social signal raises recall, narrows coverage

def test_criterion_4_social_accuracy_diversity_tradeoff(triple_runs):
    reports, _, elapsed = triple_runs
    assert elapsed < 600.0
    for backbone in ("socialmf", "diffnet"):
        wins = sum(
            1 for seed in SEEDS
            if reports[(backbone, seed)][1].recall > reports[(backbone, seed)][0].recall
            and reports[(backbone, seed)][1].coverage < reports[(backbone, seed)][0].coverage)
        print(f"criterion 4 {backbone}: {wins}/5 seeds")
        assert wins >= 4, f"{backbone}: social-vs-nonsocial direction in {wins}/5 seeds"
    print("criterion 4 PASS")


# criterion 5: distillation recovers coverage at bounded recall cost

def test_criterion_5_distillation_tradeoff(triple_runs):
    reports, _, elapsed = triple_runs
    assert elapsed < 600.0
    for backbone in ("socialmf", "diffnet"):
        wins = 0
        for seed in SEEDS:
            _, r_base, r_div = reports[(backbone, seed)]
            if (r_div.coverage >= 1.05 * r_base.coverage
                    and r_div.recall >= 0.95 * r_base.recall):
                wins += 1
        print(f"criterion 5 {backbone}: {wins}/5 seeds")
        assert wins >= 4, f"{backbone}: coverage/recall trade-off in {wins}/5 seeds"
    print("criterion 5 PASS")


# criterion 6: coverage responds monotonically to the distillation weight

def test_criterion_6_beta_sensitivity(accept_data):
    g, social = accept_data
    start = time.monotonic()
    betas = (1.0, 0.1, 0.01, 0.001)  # descending
    cov = {b: [] for b in betas}
    rec = {b: [] for b in betas}
    cov_base, rec_base = [], []
    for seed in (1, 2, 3):
        split = split_holdout(g, 0.2, seed)
        cfg = TRAIN_CFG.replace(backbone="socialmf", seed=seed)
        teacher = train_teacher(cfg, split)
        base = train_student(cfg.replace(beta=0.0), split, social, None)
        r = evaluate(forward(base.model, split.train, social),
                     split.train, split.test, EVAL_K, social)
        cov_base.append(r.coverage)
        rec_base.append(r.recall)
        for beta in betas:
            student = train_student(cfg.replace(beta=beta), split, social,
                                    teacher.model)
            r = evaluate(forward(student.model, split.train, social),
                         split.train, split.test, EVAL_K, social)
            cov[beta].append(r.coverage)
            rec[beta].append(r.recall)
    elapsed = time.monotonic() - start
    assert elapsed < 1200.0
    mean_cov = [float(np.mean(cov[b])) for b in betas]
    mean_rec = [float(np.mean(rec[b])) for b in betas]
    base_cov = float(np.mean(cov_base))
    base_rec = float(np.mean(rec_base))
    # coverage non-decreasing in beta = non-increasing along the descending grid
    inversions = sum(1 for i in range(len(mean_cov) - 1)
                     if mean_cov[i] < mean_cov[i + 1] - 1e-12)
    print(f"criterion 6: coverage by beta {mean_cov} (base {base_cov:.3f}), "
          f"inversions {inversions}, elapsed {elapsed:.0f}s")
    assert inversions <= 1
    # degeneration: the smallest-beta run sits within 2% of the base run
    assert abs(mean_cov[-1] - base_cov) <= 0.02 * base_cov
    assert abs(mean_rec[-1] - base_rec) <= 0.02 * base_rec
    print("criterion 6 PASS")


# criterion 7: frozen teacher, byte for byte

def test_criterion_7_frozen_teacher(tmp_path):
    cfg = SyntheticConfig(num_users=60, num_items=90, communities=3,
                          p_in=0.25, p_out=0.02, seed=7)
    inter, soc, _, _ = generate_synthetic(cfg)
    g = InteractionGraph.from_edges(inter, 60, 90)
    social = SocialGraph.from_edges(soc, 60)
    split = split_holdout(g, 0.2, seed=7)
    tc = TrainConfig(backbone="socialmf", dim=16, epochs=20,
                     early_stop_patience=20, batch_size=256, eval_k=10, seed=7)
    teacher = train_teacher(tc, split)
    ckpt = tmp_path / "teacher.npz"
    save_checkpoint(teacher.model, str(ckpt))
    digest_before = file_digest(str(ckpt))
    tables_before = {k: v.copy() for k, v in teacher.model.tables().items()}
    train_student(tc.replace(beta=0.1), split, social, teacher.model)
    save_checkpoint(teacher.model, str(tmp_path / "teacher_after.npz"))
    assert file_digest(str(ckpt)) == digest_before
    assert file_digest(str(tmp_path / "teacher_after.npz")) == digest_before
    for name, before in tables_before.items():
        assert np.array_equal(teacher.model.tables()[name], before)
    print("criterion 7 PASS: teacher checkpoint digest unchanged")


# criterion 8: user-friend similarity rises while accuracy improves

def test_criterion_8_similarity_trajectory(triple_runs):
    _, base_logs, _ = triple_runs
    wins = 0
    for seed in SEEDS:
        res = base_logs[("diffnet", seed)]
        psi_first = res.log[0].mean_psi
        psi_best = res.log[res.best_epoch - 1].mean_psi
        if psi_best > psi_first:
            wins += 1
    print(f"criterion 8: {wins}/5 seeds show rising mean psi")
    assert wins >= 4
    print("criterion 8 PASS")
