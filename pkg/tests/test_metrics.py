"""Tests for alignment metrics and the batch-integration suite.

Endpoint cases are constructed geometrically (perfect mixing, full
separation, coincident duplicates); the worked confusion-matrix and
silhouette values are hand-derived and frozen as constants.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from treealign.core import DataValidationError, RngConfig
from treealign.metrics import (
    AggregateReport,
    KnnGraph,
    aggregate_scores,
    alignment_score,
    ari,
    bras,
    clisi,
    foscttm,
    graph_connectivity,
    ilisi,
    integration_suite,
    isolated_labels,
    kbet,
    kmeans_ari,
    kmeans_nmi,
    knn_graph,
    label_transfer_accuracy,
    nmi,
    pcr_comparison,
    silhouette_label,
)


def _blob(gen, center, n, dim=2, scale=0.1):
    return gen.normal(0.0, scale, size=(n, dim)) + np.asarray(center, dtype=np.float64)


# ---------------------------------------------------------------------------
# kNN graph
# ---------------------------------------------------------------------------


def test_knn_graph_basic_and_tie_break():
    # Three coincident points: ties resolve by ascending index.
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    graph = knn_graph(pts, 2)
    assert graph.neighbors.tolist() == [[1, 2], [0, 2], [0, 1], [0, 1]]


def test_knn_graph_excludes_self_and_validates_k():
    gen = np.random.default_rng(0)
    pts = gen.normal(size=(10, 3))
    graph = knn_graph(pts, 4)
    assert not np.any(graph.neighbors == np.arange(10)[:, None])
    with pytest.raises(DataValidationError):
        knn_graph(pts, 0)
    with pytest.raises(DataValidationError):
        knn_graph(pts, 10)


def test_knn_graph_type_rejects_bad_neighbor_arrays():
    with pytest.raises(DataValidationError):
        KnnGraph(k=3, neighbors=np.zeros((4, 2), dtype=np.int64))
    with pytest.raises(DataValidationError):
        KnnGraph(k=1, neighbors=np.array([[0], [0], [1]]))  # row 0 lists itself


# ---------------------------------------------------------------------------
# Label-transfer accuracy
# ---------------------------------------------------------------------------


def test_label_transfer_perfect_separation_scores_one():
    gen = np.random.default_rng(1)
    src = np.vstack([_blob(gen, [0, 0], 20), _blob(gen, [10, 10], 20)])
    src_labels = np.repeat([0, 1], 20)
    tgt = np.vstack([_blob(gen, [0, 0], 15), _blob(gen, [10, 10], 15)])
    tgt_labels = np.repeat([0, 1], 15)
    embedding = np.vstack([src, tgt])
    target_indices = 40 + np.arange(30)
    acc = label_transfer_accuracy(embedding, src_labels, target_indices, tgt_labels)
    assert acc == 1.0


def test_label_transfer_null_is_near_half():
    accs = []
    for seed in range(10):
        gen = np.random.default_rng(seed)
        embedding = gen.normal(size=(400, 3))
        src_labels = gen.permutation(np.repeat([0, 1], 100))
        tgt_labels = gen.permutation(np.repeat([0, 1], 100))
        acc = label_transfer_accuracy(
            embedding, src_labels, 200 + np.arange(200), tgt_labels
        )
        accs.append(acc)
    assert abs(np.mean(accs) - 0.5) <= 0.05


def test_label_transfer_ignores_unlabeled_source_rows():
    # The nearest source row is unlabeled; the vote must come from the
    # labeled pool only.
    embedding = np.array([[0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    src_labels = np.array([0, -1])
    acc = label_transfer_accuracy(embedding, src_labels, np.array([2]), np.array([0]), k=1)
    assert acc == 1.0


def test_label_transfer_vote_ties_take_smallest_class():
    # Target equidistant from one class-0 and one class-1 source point.
    embedding = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    src_labels = np.array([1, 0])
    idx = np.array([2])
    assert label_transfer_accuracy(embedding, src_labels, idx, np.array([0]), k=2) == 1.0
    assert label_transfer_accuracy(embedding, src_labels, idx, np.array([1]), k=2) == 0.0


def test_label_transfer_validation():
    embedding = np.zeros((4, 2))
    labels = np.array([0, 1])
    with pytest.raises(DataValidationError):
        label_transfer_accuracy(embedding, labels, np.array([2]), np.array([0]), k=5)
    with pytest.raises(DataValidationError):
        label_transfer_accuracy(embedding, labels, np.array([2, 3]), np.array([0]), k=1)
    with pytest.raises(DataValidationError):
        label_transfer_accuracy(embedding, labels, np.array([], dtype=int), np.array([], dtype=int), k=1)


# ---------------------------------------------------------------------------
# Alignment score
# ---------------------------------------------------------------------------


def test_alignment_score_alternating_pairs_is_exactly_one():
    # Same-domain pairs 0.1 apart, pairs 1 apart, domains alternating by
    # pair: every point sees exactly one same-domain and one
    # opposite-domain neighbor at k=2, so kbar = 1 and the score is 1.
    base = np.arange(8, dtype=np.float64)
    xs = np.concatenate([base, base + 0.1])
    order = np.argsort(xs, kind="stable")
    embedding = xs[order][:, None]
    domains = np.concatenate([np.arange(8) % 2, np.arange(8) % 2])[order]
    assert alignment_score(embedding, domains, k=2) == 1.0


def test_alignment_score_separated_domains_is_zero():
    gen = np.random.default_rng(2)
    embedding = np.vstack([_blob(gen, [0, 0], 30), _blob(gen, [50, 50], 30)])
    domains = np.repeat([0, 1], 30)
    assert alignment_score(embedding, domains, k=5) == 0.0


def test_alignment_score_interleaved_samples_near_one():
    # Two draws from one distribution mix perfectly: each neighbor is a
    # fair coin between domains, so kbar is about k/2 and the score sits
    # near 1.
    gen = np.random.default_rng(3)
    embedding = np.vstack([gen.normal(size=(500, 2)), gen.normal(size=(500, 2))])
    domains = np.repeat([0, 1], 500)
    assert abs(alignment_score(embedding, domains, k=5) - 1.0) <= 0.1


def test_alignment_score_unclamped_above_one_when_domains_anti_mix():
    # Strictly alternating points on a line: interior samples have zero
    # same-domain neighbors, so the score approaches 2.
    n = 20
    embedding = np.arange(n, dtype=np.float64)[:, None]
    domains = np.arange(n) % 2
    score = alignment_score(embedding, domains, k=2)
    assert score == pytest.approx(2.0 * (1.0 - 1.0 / n), abs=1e-12)
    assert score > 1.5


def test_alignment_score_requires_two_domains():
    embedding = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(DataValidationError):
        alignment_score(embedding, np.zeros(10, dtype=int))
    with pytest.raises(DataValidationError):
        alignment_score(embedding, np.arange(10) % 3)


# ---------------------------------------------------------------------------
# FOSCTTM
# ---------------------------------------------------------------------------


def test_foscttm_exact_coincidence_is_zero():
    gen = np.random.default_rng(4)
    a = gen.normal(size=(50, 3))
    assert foscttm(a, a.copy()) == 0.0


def test_foscttm_random_embeddings_near_half():
    vals = []
    for seed in range(8):
        gen = np.random.default_rng(seed)
        vals.append(foscttm(gen.normal(size=(300, 4)), gen.normal(size=(300, 4))))
    assert abs(np.mean(vals) - 0.5) <= 0.05


def test_foscttm_is_isometry_invariant():
    gen = np.random.default_rng(5)
    a = gen.normal(size=(60, 4))
    b = a + gen.normal(0.0, 0.5, size=(60, 4))
    q, _ = np.linalg.qr(gen.normal(size=(4, 4)))
    shift = gen.normal(size=4)
    before = foscttm(a, b)
    after = foscttm(a @ q + shift, b @ q + shift)
    assert after == pytest.approx(before, abs=1e-12)


def test_foscttm_rejects_mismatched_shapes():
    with pytest.raises(DataValidationError):
        foscttm(np.zeros((5, 2)), np.zeros((6, 2)))


# ---------------------------------------------------------------------------
# NMI / ARI
# ---------------------------------------------------------------------------


def test_nmi_identical_partitions():
    labels = np.array([0, 0, 1, 1, 2, 2])
    assert nmi(labels, labels.copy()) == 1.0
    # Identity is preserved under renaming of cluster ids.
    assert nmi(labels, (labels + 5) % 3) == pytest.approx(1.0, abs=1e-12)


def test_nmi_single_cluster_is_zero():
    assert nmi(np.array([0, 0, 1, 1]), np.zeros(4, dtype=int)) == 0.0


def test_nmi_worked_confusion_matrices():
    # N = [[2,0],[0,2]] -> 1;  N = [[1,1],[1,1]] -> 0.
    labels = np.array([0, 0, 1, 1])
    assert nmi(labels, np.array([0, 0, 1, 1])) == pytest.approx(1.0, abs=1e-12)
    assert nmi(labels, np.array([0, 1, 0, 1])) == pytest.approx(0.0, abs=1e-12)


def test_nmi_hand_value_for_unbalanced_table():
    # N = [[2,1],[0,3]]: MI = (1/2)ln3 - (1/3)ln2, H(L) = ln2,
    # H(C) = ln3 - (2/3)ln2, so NMI = (ln3 - (2/3)ln2) / ((1/3)ln2 + ln3).
    labels = np.array([0, 0, 0, 1, 1, 1])
    clusters = np.array([0, 0, 1, 1, 1, 1])
    expected = (math.log(3) - (2.0 / 3.0) * math.log(2)) / (
        (1.0 / 3.0) * math.log(2) + math.log(3)
    )
    assert nmi(labels, clusters) == pytest.approx(expected, abs=1e-12)


def test_nmi_symmetric_and_permutation_invariant():
    gen = np.random.default_rng(6)
    a = gen.integers(0, 3, size=100)
    b = gen.integers(0, 4, size=100)
    assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)
    relabel = np.array([2, 0, 1])
    assert nmi(relabel[a], b) == pytest.approx(nmi(a, b), abs=1e-12)


def test_nmi_degenerate_single_block_both_sides():
    assert nmi(np.zeros(5, dtype=int), np.full(5, 7)) == 1.0


def test_ari_identical_partitions():
    labels = np.array([0, 1, 1, 2, 2, 2])
    assert ari(labels, labels.copy()) == 1.0


def test_ari_two_classes_one_cluster_is_zero():
    assert ari(np.array([0, 0, 1, 1]), np.zeros(4, dtype=int)) == 0.0


def test_ari_hand_value_for_unbalanced_table():
    # N = [[2,1],[0,3]]: tp=8, fn=4, fp=6, tn=12 over ordered pairs, so
    # ARI = 2(8*12 - 4*6) / (12*16 + 14*18) = 144/444 = 12/37.
    labels = np.array([0, 0, 0, 1, 1, 1])
    clusters = np.array([0, 0, 1, 1, 1, 1])
    assert ari(labels, clusters) == pytest.approx(12.0 / 37.0, abs=1e-12)


def test_ari_random_partitions_near_zero():
    vals = []
    for seed in range(20):
        gen = np.random.default_rng(seed)
        vals.append(ari(gen.integers(0, 3, size=200), gen.integers(0, 4, size=200)))
    assert abs(np.mean(vals)) <= 0.02


def test_ari_symmetric_and_degenerate_convention():
    gen = np.random.default_rng(7)
    a = gen.integers(0, 3, size=80)
    b = gen.integers(0, 3, size=80)
    assert ari(a, b) == pytest.approx(ari(b, a), abs=1e-12)
    assert ari(np.zeros(4, dtype=int), np.full(4, 3)) == 1.0


def test_clustering_agreement_rejects_length_mismatch():
    with pytest.raises(DataValidationError):
        nmi(np.zeros(3, dtype=int), np.zeros(4, dtype=int))
    with pytest.raises(DataValidationError):
        ari(np.zeros(3, dtype=int), np.zeros(4, dtype=int))


def test_kmeans_variants_recover_separated_blobs():
    gen = np.random.default_rng(8)
    embedding = np.vstack(
        [_blob(gen, [0, 0], 30, scale=0.2), _blob(gen, [20, 0], 30, scale=0.2),
         _blob(gen, [0, 20], 30, scale=0.2)]
    )
    labels = np.repeat([0, 1, 2], 30)
    assert kmeans_nmi(embedding, labels, np.random.default_rng(9)) == 1.0
    assert kmeans_ari(embedding, labels, np.random.default_rng(10)) == 1.0


# ---------------------------------------------------------------------------
# Silhouette family
# ---------------------------------------------------------------------------


def test_silhouette_label_separated_clusters_near_one():
    gen = np.random.default_rng(11)
    embedding = np.vstack([_blob(gen, [0, 0], 25), _blob(gen, [100, 0], 25)])
    labels = np.repeat([0, 1], 25)
    assert silhouette_label(embedding, labels) >= 0.99


def test_silhouette_label_random_labels_near_half():
    vals = []
    for seed in range(6):
        gen = np.random.default_rng(seed)
        embedding = gen.normal(size=(200, 2))
        labels = gen.integers(0, 2, size=200)
        vals.append(silhouette_label(embedding, labels))
    assert abs(np.mean(vals) - 0.5) <= 0.05


def test_silhouette_label_singleton_classes_use_zero_convention():
    embedding = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    labels = np.array([0, 1, 2])
    assert silhouette_label(embedding, labels) == 0.5


def test_bras_coincident_batches_scores_exactly_one():
    gen = np.random.default_rng(12)
    base = gen.normal(size=(20, 2))
    embedding = np.vstack([base, base])
    batches = np.repeat([0, 1], 20)
    labels = np.zeros(40, dtype=int)
    assert bras(embedding, batches, labels) == 1.0


def test_bras_separated_batches_near_zero():
    gen = np.random.default_rng(13)
    embedding = np.vstack([_blob(gen, [0, 0], 25), _blob(gen, [80, 0], 25)])
    batches = np.repeat([0, 1], 25)
    labels = np.zeros(50, dtype=int)
    assert bras(embedding, batches, labels) <= 0.02


def test_bras_hand_computed_line_configuration():
    # Points at 0,1,2,3 with batches 0,1,0,1 and one label. Silhouette
    # values per point are 0.5, 0, 0, 0.5, so the score is
    # mean(1 - |s|) = (0.5 + 1 + 1 + 0.5) / 4 = 0.75.
    embedding = np.array([[0.0], [1.0], [2.0], [3.0]])
    batches = np.array([0, 1, 0, 1])
    labels = np.zeros(4, dtype=int)
    assert bras(embedding, batches, labels) == pytest.approx(0.75, abs=1e-12)


def test_isolated_labels_far_separated_isolated_label_near_one():
    gen = np.random.default_rng(14)
    shared_a = np.vstack([_blob(gen, [0, 0], 20), _blob(gen, [5, 0], 20)])
    shared_b = np.vstack([_blob(gen, [0, 5], 20), _blob(gen, [5, 5], 20)])
    lone = _blob(gen, [100, 100], 20)
    embedding = np.vstack([shared_a, shared_b, lone])
    labels = np.repeat([0, 1, 2], 40)[: 100]
    labels = np.concatenate([np.repeat(0, 40), np.repeat(1, 40), np.repeat(2, 20)])
    batches = np.concatenate(
        [np.tile([0, 1], 20), np.tile([0, 1], 20), np.ones(20, dtype=int)]
    )
    assert isolated_labels(embedding, labels, batches) >= 0.9


def test_isolated_labels_min_rule_takes_every_label_when_tied():
    # Both labels appear in both batches, so both are isolated by the
    # minimum rule; well-separated label blobs then score near 1.
    gen = np.random.default_rng(15)
    embedding = np.vstack([_blob(gen, [0, 0], 20), _blob(gen, [60, 0], 20)])
    labels = np.repeat([0, 1], 20)
    batches = np.tile([0, 1], 20)
    assert isolated_labels(embedding, labels, batches) >= 0.95


def test_isolated_labels_mixed_isolated_label_near_half():
    gen = np.random.default_rng(16)
    cloud = gen.normal(size=(90, 2))
    labels = np.concatenate([np.repeat(0, 30), np.repeat(1, 30), np.repeat(2, 30)])
    batches = np.concatenate([np.tile([0, 1], 15), np.tile([0, 1], 15), np.zeros(30, dtype=int)])
    score = isolated_labels(cloud, labels, batches)
    assert abs(score - 0.5) <= 0.1


# ---------------------------------------------------------------------------
# LISI family
# ---------------------------------------------------------------------------


def test_clisi_single_label_is_one():
    embedding = np.random.default_rng(17).normal(size=(30, 2))
    assert clisi(embedding, np.zeros(30, dtype=int)) == 1.0


def test_clisi_separated_labels_near_one():
    gen = np.random.default_rng(18)
    embedding = np.vstack([_blob(gen, [0, 0], 60), _blob(gen, [50, 0], 60)])
    labels = np.repeat([0, 1], 60)
    assert clisi(embedding, labels) >= 0.98


def test_ilisi_interleaved_batches_near_one():
    gen = np.random.default_rng(19)
    base = gen.normal(size=(100, 2))
    embedding = np.vstack([base, base + gen.normal(0.0, 1e-6, size=(100, 2))])
    batches = np.repeat([0, 1], 100)
    assert ilisi(embedding, batches) >= 0.98


def test_ilisi_separated_batches_near_zero():
    gen = np.random.default_rng(20)
    embedding = np.vstack([_blob(gen, [0, 0], 60), _blob(gen, [50, 0], 60)])
    batches = np.repeat([0, 1], 60)
    assert ilisi(embedding, batches) <= 0.02


def test_lisi_single_group_conventions():
    embedding = np.random.default_rng(21).normal(size=(20, 2))
    assert ilisi(embedding, np.zeros(20, dtype=int)) == 1.0


# ---------------------------------------------------------------------------
# kBET
# ---------------------------------------------------------------------------


def test_kbet_uniform_batches_accept_near_alpha():
    # Single draws fluctuate because anchor neighborhoods overlap, so the
    # null acceptance rate is checked in Monte Carlo mean over seeds.
    scores = []
    for seed in range(12):
        gen = np.random.default_rng(seed)
        embedding = gen.normal(size=(600, 2))
        batches = gen.integers(0, 2, size=600)
        labels = np.zeros(600, dtype=int)
        scores.append(kbet(embedding, batches, labels, np.random.default_rng(seed + 100)))
    assert abs(np.mean(scores) - 0.95) <= 0.03


def test_kbet_separated_batches_near_zero():
    gen = np.random.default_rng(24)
    embedding = np.vstack([_blob(gen, [0, 0], 300), _blob(gen, [50, 0], 300)])
    batches = np.repeat([0, 1], 300)
    labels = np.zeros(600, dtype=int)
    assert kbet(embedding, batches, labels, np.random.default_rng(25)) <= 0.02


def test_kbet_single_batch_is_one():
    embedding = np.random.default_rng(26).normal(size=(40, 2))
    assert kbet(embedding, np.zeros(40, dtype=int), np.zeros(40, dtype=int),
                np.random.default_rng(27)) == 1.0


def test_kbet_tiny_populations_count_as_accepted():
    # Three points per label: k is capped at 25% of the population, so no
    # test can run and the declared convention scores 1.
    embedding = np.random.default_rng(28).normal(size=(6, 2))
    batches = np.array([0, 1, 0, 1, 0, 1])
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert kbet(embedding, batches, labels, np.random.default_rng(29)) == 1.0


# ---------------------------------------------------------------------------
# Graph connectivity
# ---------------------------------------------------------------------------


def test_graph_connectivity_tight_blobs_are_fully_connected():
    gen = np.random.default_rng(30)
    embedding = np.vstack([_blob(gen, [0, 0], 20), _blob(gen, [30, 0], 20)])
    labels = np.repeat([0, 1], 20)
    assert graph_connectivity(embedding, labels) == 1.0


def test_graph_connectivity_split_label_counts_largest_component():
    # Label 0: a 7-point chain and a far 3-point chain; with k=2 the kNN
    # union graph keeps them apart, so that label scores 0.7. Label 1 is
    # one tight chain scoring 1; the mean is 0.85.
    seven = np.arange(7, dtype=np.float64)[:, None] * 0.1
    three = 100.0 + np.arange(3, dtype=np.float64)[:, None] * 0.1
    other = 200.0 + np.arange(5, dtype=np.float64)[:, None] * 0.1
    embedding = np.vstack([seven, three, other])
    labels = np.concatenate([np.zeros(10, dtype=int), np.ones(5, dtype=int)])
    assert graph_connectivity(embedding, labels, k=2) == pytest.approx(0.85, abs=1e-12)


def test_graph_connectivity_singleton_label_is_one():
    embedding = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    labels = np.array([0, 0, 1])
    assert graph_connectivity(embedding, labels, k=1) == 1.0


# ---------------------------------------------------------------------------
# PCR comparison
# ---------------------------------------------------------------------------


def _batched_features(gen, n=200):
    batches = np.repeat([0, 1], n // 2)
    x = gen.normal(size=(n, 4))
    x[:, 0] += np.where(batches == 0, -5.0, 5.0)
    return x, batches


def test_pcr_identical_embedding_is_zero():
    gen = np.random.default_rng(31)
    x, batches = _batched_features(gen)
    assert pcr_comparison(x, x.copy(), batches) == 0.0


def test_pcr_batch_free_embedding_is_one():
    gen = np.random.default_rng(32)
    x, batches = _batched_features(gen)
    # A constant embedding carries no variance at all, so no batch
    # variance survives the correction.
    assert pcr_comparison(x, np.zeros((x.shape[0], 2)), batches) == 1.0


def test_pcr_dropping_the_batch_component_near_one():
    gen = np.random.default_rng(33)
    x, batches = _batched_features(gen)
    embedding = x[:, 1:]  # drop the batch-carrying coordinate
    assert pcr_comparison(x, embedding, batches) >= 0.9


def test_pcr_no_batch_variance_in_raw_data_returns_zero():
    gen = np.random.default_rng(34)
    x = np.zeros((40, 3))
    batches = gen.integers(0, 2, size=40)
    assert pcr_comparison(x, gen.normal(size=(40, 2)), batches) == 0.0


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _score_dict(bio_vals, batch_vals):
    keys_bio = ("isolated_labels", "kmeans_nmi", "kmeans_ari", "silhouette_label", "clisi")
    keys_batch = ("bras", "ilisi", "kbet", "graph_connectivity", "pcr_comparison")
    out = dict(zip(keys_bio, bio_vals))
    out.update(zip(keys_batch, batch_vals))
    return out


def test_aggregate_all_ones_and_all_zeros():
    ones = aggregate_scores(_score_dict([1.0] * 5, [1.0] * 5))
    zeros = aggregate_scores(_score_dict([0.0] * 5, [0.0] * 5))
    assert (ones.bio, ones.batch) == (1.0, 1.0)
    assert (zeros.bio, zeros.batch) == (0.0, 0.0)


def test_aggregate_mixed_vector_hand_mean():
    scores = _score_dict([0.2, 0.4, 0.6, 0.8, 1.0], [0.1, 0.2, 0.3, 0.4, 0.5])
    report = aggregate_scores(scores)
    # Seven bio slots: the two k-means values stand in for the reserved
    # community-detection slots, so they are double-weighted.
    expected_bio = (0.2 + 2 * 0.4 + 2 * 0.6 + 0.8 + 1.0) / 7.0
    assert report.bio == pytest.approx(expected_bio, abs=1e-12)
    assert report.batch == pytest.approx(0.3, abs=1e-12)


def test_aggregate_flags_the_kmeans_substitution():
    report = aggregate_scores(_score_dict([0.5] * 5, [0.5] * 5))
    assert isinstance(report, AggregateReport)
    assert report.details["bio_slots"] == 7
    assert report.details["batch_slots"] == 5
    assert "kmeans" in report.details["cluster_nmi"]
    assert "kmeans" in report.details["cluster_ari"]


def test_aggregate_rejects_missing_metrics():
    scores = _score_dict([0.5] * 5, [0.5] * 5)
    del scores["kbet"]
    with pytest.raises(DataValidationError):
        aggregate_scores(scores)


# ---------------------------------------------------------------------------
# Integration suite
# ---------------------------------------------------------------------------


def _suite_instance():
    gen = np.random.default_rng(35)
    cells = []
    labels = []
    batches = []
    for lab, center in enumerate([[0.0, 0.0], [12.0, 0.0]]):
        for batch in range(2):
            pts = _blob(gen, center, 30, scale=0.5)
            cells.append(pts)
            labels.append(np.full(30, lab))
            batches.append(np.full(30, batch))
    embedding = np.vstack(cells)
    labels = np.concatenate(labels)
    batches = np.concatenate(batches)
    features = np.hstack([embedding, np.where(batches == 0, -3.0, 3.0)[:, None]])
    return embedding, labels, batches, features


def test_integration_suite_keys_aliases_and_ranges():
    embedding, labels, batches, features = _suite_instance()
    scores = integration_suite(embedding, labels, batches, features, RngConfig(40))
    expected_keys = {
        "nmi", "ari", "silhouette_label", "clisi", "isolated_labels",
        "bras", "ilisi", "kbet", "graph_connectivity", "pcr_comparison",
        "kmeans_nmi", "kmeans_ari", "bio_aggregate", "batch_aggregate",
    }
    assert set(scores) == expected_keys
    assert scores["kmeans_nmi"] == scores["nmi"]
    assert scores["kmeans_ari"] == scores["ari"]
    for key, value in scores.items():
        assert 0.0 <= value <= 1.0, f"{key}={value}"
    # Structured instance: labels separated, batches interleaved.
    assert scores["nmi"] == 1.0
    assert scores["graph_connectivity"] == 1.0
    assert scores["bio_aggregate"] >= 0.9


def test_integration_suite_is_deterministic():
    embedding, labels, batches, features = _suite_instance()
    first = integration_suite(embedding, labels, batches, features, RngConfig(41))
    second = integration_suite(embedding, labels, batches, features, RngConfig(41))
    assert first == second
