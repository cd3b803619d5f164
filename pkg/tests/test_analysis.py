import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_kde, naive_pairwise, partition_matches
from preyflock.analysis import (
    NOISE,
    SwarmMetrics,
    aggregate_caught_per_frame,
    avg_pairwise_distance,
    caught_per_frame,
    circular_mean,
    cluster_size_table,
    cluster_sizes,
    dbscan,
    density_before_death,
    density_trend,
    frame_metrics,
    kde_density,
    mean_angle_deviation,
    torus_distance_matrix,
    trajectory_metrics,
)
from preyflock.evaluation import Trajectory

L = 40.0
angle = st.floats(0, 360, allow_nan=False, exclude_max=True)


def angle_close(a, b, tol=1e-7):
    return abs((a - b + 180) % 360 - 180) < tol


@pytest.mark.parametrize("angles, mean", [([10, 350], 0.0), ([33, 33, 33], 33.0), ([0, 90], 45.0)])
def test_circular_mean_examples(angles, mean):
    m = circular_mean(angles)
    assert angle_close(m.angle, mean)
    assert not m.degenerate


def test_circular_mean_degenerate():
    m = circular_mean([0, 180])
    assert m.degenerate and m.angle == 0.0
    with pytest.raises(ValueError):
        circular_mean([])


def test_mean_angle_deviation_examples():
    assert mean_angle_deviation([10, 350]).value == pytest.approx(10.0)
    assert mean_angle_deviation([77, 77, 77]).value == pytest.approx(0.0, abs=1e-9)
    d = mean_angle_deviation([0, 180])
    assert d.value == pytest.approx(90.0) and d.degenerate


@settings(max_examples=200)
@given(st.lists(angle, min_size=1, max_size=20), angle)
def test_circular_mean_rotation_equivariance(angles, phi):
    m = circular_mean(angles)
    r = circular_mean([a + phi for a in angles])
    if not m.degenerate and not r.degenerate:
        assert angle_close(r.angle, m.angle + phi, 1e-6)
        assert mean_angle_deviation([a + phi for a in angles]).value == pytest.approx(
            mean_angle_deviation(angles).value, abs=1e-6)


def test_dbscan_coincident_points():
    labels = dbscan(np.full((6, 2), 7.0), 1.0, 3, L)
    assert set(labels.tolist()) == {0}


def test_dbscan_two_separated_groups():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal([5, 5], 0.3, (8, 2)), rng.normal([25, 25], 0.3, (6, 2))])
    labels = dbscan(pts, 2.0, 3, L)
    assert labels.max() == 1 and NOISE not in labels
    assert len(set(labels[:8])) == 1 and len(set(labels[8:])) == 1


def test_dbscan_clusters_across_the_seam():
    pts = [[0.5, 10], [39.5, 10], [1.0, 10.5], [39.0, 9.5]]
    assert set(dbscan(pts, 2.0, 3, L).tolist()) == {0}
    assert set(dbscan(pts, 2.0, 3, None).tolist()) == {NOISE}


def test_dbscan_inclusive_eps_and_self_count():
    pts = [[0, 0], [4, 0]]
    assert dbscan(pts, 4.0, 2, L).tolist() == [0, 0]
    assert dbscan(pts, 3.999, 2, L).tolist() == [NOISE, NOISE]
    assert dbscan([[1, 1]], 1.0, 1, L).tolist() == [0]


def test_dbscan_border_joins_first_cluster():
    # the point at x=1.5 sees one core of each group and is not core itself
    a = [[-1, 10], [-0.5, 10], [-0.2, 10], [0, 10]]
    b = [[3, 10], [3.2, 10], [3.5, 10], [4, 10]]
    pts = np.array(a + [[1.5, 10]] + b) % L
    labels = dbscan(pts, 1.5, 4, L)
    assert labels.tolist() == [0] * 5 + [1] * 4
    flipped = dbscan(pts[::-1], 1.5, 4, L)
    assert flipped.tolist() == [0] * 5 + [1] * 4


def test_dbscan_matches_reachability_oracle():
    rng = np.random.default_rng(42)
    for trial in range(200):
        n = 50
        centers = rng.uniform(0, L, size=(int(rng.integers(1, 6)), 2))
        pts = (centers[rng.integers(len(centers), size=n)] + rng.normal(0, 3, size=(n, 2))) % L
        eps = float(rng.uniform(1.0, 5.0))
        min_pts = int(rng.integers(1, 6))
        labels = dbscan(pts, eps, min_pts, L)
        assert partition_matches(labels, pts, eps, min_pts, L), trial


def test_dbscan_labels_contiguous_and_permutation_invariant():
    rng = np.random.default_rng(9)
    pts = rng.uniform(0, L, size=(60, 2))
    labels = dbscan(pts, 4.0, 3, L)
    ids = sorted(set(labels.tolist()) - {NOISE})
    assert ids == list(range(len(ids)))
    perm = rng.permutation(60)
    relabelled = np.empty(60, dtype=int)
    relabelled[perm] = dbscan(pts[perm], 4.0, 3, L)
    core = (torus_distance_matrix(pts, L) <= 4.0).sum(1) >= 3

    def core_groups(lab):
        return {frozenset(np.flatnonzero(core & (lab == c)).tolist()) for c in set(lab.tolist()) - {NOISE}}

    # border ties may resolve differently under another order; cores and noise may not
    assert core_groups(labels) == core_groups(relabelled)
    np.testing.assert_array_equal(labels == NOISE, relabelled == NOISE)


def test_dbscan_rejects_bad_parameters():
    with pytest.raises(ValueError):
        dbscan([[0, 0]], 0.0, 3)
    with pytest.raises(ValueError):
        dbscan([[0, 0]], 1.0, 0)


def test_cluster_size_table_examples():
    one = np.array([0] * 7 + [1] * 3 + [NOISE] * 2)
    sizes, noise = cluster_size_table([one])
    np.testing.assert_array_equal(sizes, [7, 3])
    assert noise == 2
    a = np.array([0] * 6 + [1] * 4)
    b = np.array([1] * 8 + [0] * 2)
    sizes, noise = cluster_size_table([a, b])
    np.testing.assert_array_equal(sizes, [7, 3])
    assert noise == 0


def test_cluster_size_table_pads_missing_ranks():
    sizes, noise = cluster_size_table([np.array([0, 0, 0, 0]), np.array([0, 0, 1, 1])])
    np.testing.assert_array_equal(sizes, [3, 1])
    assert sizes.sum() + noise == 4
    assert cluster_sizes([NOISE, NOISE]) == ([], 2)


def test_pairwise_examples():
    assert avg_pairwise_distance([[0, 0], [3, 4]], L) == pytest.approx(5 / L)
    assert avg_pairwise_distance(np.ones((5, 2)), L) == 0.0
    assert math.isnan(avg_pairwise_distance([[1, 1]], L))


def test_pairwise_matches_double_loop_and_translation():
    rng = np.random.default_rng(1)
    for _ in range(30):
        pts = rng.uniform(0, L, size=(int(rng.integers(2, 25)), 2))
        want = naive_pairwise(pts, L)
        assert avg_pairwise_distance(pts, L) == pytest.approx(want, abs=1e-12)
        shifted = (pts + rng.uniform(0, L, size=2)) % L
        assert avg_pairwise_distance(shifted, L) == pytest.approx(want, abs=1e-12)
        assert 0 <= want <= math.sqrt(2) / 2


def test_kde_examples():
    h = 2.0
    assert kde_density([[5, 5]], [5, 5], h, L) == pytest.approx(1 / (2 * math.pi * h * h))
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, L, size=(10, 2))
    for q in rng.uniform(0, L, size=(20, 2)):
        assert kde_density(pts, q, h, L) == pytest.approx(kde_density(pts, q + [L, 0], h, L))
        assert kde_density(pts, q, h, L) == pytest.approx(naive_kde(pts, q, h, L))
    assert kde_density([], [1, 1], h, L) == 0.0


def test_kde_integrates_to_point_count():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, L, size=(25, 2))
    step = 0.2
    g = np.arange(0, L, step) + step / 2
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    for h in (1.0, 2.0, 4.0):
        total = kde_density(pts, grid, h, L).sum() * step * step
        assert total == pytest.approx(25, rel=0.01)


def test_frame_metrics_sizes_plus_noise():
    rng = np.random.default_rng(4)
    for _ in range(20):
        pos = rng.uniform(0, L, size=(30, 2))
        m = frame_metrics(pos, rng.uniform(0, 360, 30), L)
        assert sum(m.sizes) + m.noise == 30
        assert len(m.cluster_deviation) == len(m.sizes)


def test_swarm_metrics_largest_fraction():
    pos = np.vstack([np.full((6, 2), 5.0), np.full((4, 2), 25.0)])
    m = frame_metrics(pos, np.zeros(10), L)
    s = SwarmMetrics.from_frames([m, m], 10)
    assert s.largest_fraction == pytest.approx(0.6)
    assert s.cluster_deviation == pytest.approx(0.0)
    assert s.mean_noise == 0


def test_caught_per_frame_examples(caplog):
    assert caught_per_frame(5, 1100) == pytest.approx(0.005)
    assert caught_per_frame(0, 500) == 0.0
    with caplog.at_level(logging.INFO):
        assert caught_per_frame(3, 100) is None
    assert "excluded" in caplog.text


def test_caught_per_frame_aggregation_order():
    by_seed = {0: [(1, 200), (3, 200)], 1: [(0, 1100)], 2: [(4, 50)]}
    # seed 0: mean(0.01, 0.03) = 0.02; seed 1: 0; seed 2 dropped
    assert aggregate_caught_per_frame(by_seed) == pytest.approx(0.01)


def synthetic_traj(positions, caught):
    T, N = positions.shape[:2]
    return Trajectory(positions, np.zeros((T, N)), caught, np.zeros((T, 2)), np.zeros(T))


def test_density_trace_alone_is_zero():
    pos = np.random.default_rng(0).uniform(0, L, size=(150, 1, 2))
    caught = np.zeros((150, 1), dtype=bool)
    caught[120, 0] = True
    tr = density_before_death([synthetic_traj(pos, caught)])
    assert tr.count == 1
    np.testing.assert_array_equal(tr.mean, np.zeros(100))


def test_density_trace_constant_configuration():
    frame = np.random.default_rng(1).uniform(0, L, size=(5, 2))
    pos = np.repeat(frame[None], 200, axis=0)
    caught = np.zeros((200, 5), dtype=bool)
    caught[150, 2] = True
    tr = density_before_death([synthetic_traj(pos, caught)])
    want = kde_density(np.delete(frame, 2, axis=0), frame[2], 2.0, L)
    np.testing.assert_allclose(tr.mean, want)


def test_density_trace_excludes_short_lives_and_victim():
    T = 300
    pos = np.zeros((T, 2, 2))
    pos[:, 1] = [20, 20]
    # agent 0 walks away from agent 1 and is caught at 250; its next life is only 30 frames
    pos[:, 0, 0] = np.linspace(20, 35, T)
    pos[:, 0, 1] = 20
    caught = np.zeros((T, 2), dtype=bool)
    caught[250, 0] = True
    caught[280, 0] = True
    tr = density_before_death([synthetic_traj(pos, caught)])
    assert tr.count == 1 and tr.excluded == 1
    for k, t in enumerate(range(150, 250)):
        assert tr.mean[k] == pytest.approx(naive_kde([pos[t, 1]], pos[t, 0], 2.0, L))
    rho, p = density_trend(tr)
    assert rho == pytest.approx(-1.0) and p < 0.05


def test_trajectory_metrics_skips_transient():
    rng = np.random.default_rng(0)
    pos = rng.uniform(0, L, size=(130, 10, 2))
    traj = synthetic_traj(pos, np.zeros((130, 10), dtype=bool))
    assert len(trajectory_metrics(traj, L)) == 30
    assert len(trajectory_metrics(traj, L, every=10)) == 3
