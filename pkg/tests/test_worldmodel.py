import itertools
import math

import numpy as np
import pytest

from fruittrack.geometry import BBox2D
from fruittrack.perception import Detection
from fruittrack.worldmodel import (
    CONFIRMED,
    TENTATIVE,
    Track,
    TrackerConfig,
    WorldModel,
    build_cost_matrix,
    count,
    kalman_update,
    lifecycle,
    predict,
    solve_assignment,
    step,
)

BOX = BBox2D(10, 10, 20, 20)


def make_track(mean, cov=None, track_id=0, status=CONFIRMED):
    return Track(
        id=track_id,
        mean=np.asarray(mean, dtype=float),
        cov=np.eye(3) if cov is None else np.asarray(cov, dtype=float),
        class_label="fruit",
        bbox=BOX,
        status=status,
    )


def make_detection(mean, cov=None, bbox=BOX):
    return Detection(
        mean=np.asarray(mean, dtype=float),
        cov=1e-4 * np.eye(3) if cov is None else np.asarray(cov, dtype=float),
        class_label="fruit",
        bbox=bbox,
        radius=0.03,
        sphere_valid=True,
    )


def brute_force_min_cost(cost):
    """Exhaustive minimum total cost over all maximal one-to-one assignments."""
    n, m = cost.shape
    best = math.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = min(best, sum(cost[i, j] for i, j in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = min(best, sum(cost[i, j] for j, i in enumerate(rows)))
    return best


class TestPredict:
    def test_zero_process_noise_keeps_track(self):
        world = WorldModel(config=TrackerConfig(process_noise=0.0))
        world.tracks.append(make_track([1, 2, 3], cov=np.diag([1e-4, 2e-4, 3e-4])))
        predict(world)
        assert np.array_equal(world.tracks[0].mean, [1, 2, 3])
        assert np.allclose(world.tracks[0].cov, np.diag([1e-4, 2e-4, 3e-4]))

    def test_noise_is_additive(self):
        world = WorldModel(config=TrackerConfig(process_noise=1e-6))
        world.tracks.append(make_track([0, 0, 0], cov=1e-4 * np.eye(3)))
        predict(world)
        assert np.allclose(world.tracks[0].cov, 1.01e-4 * np.eye(3))

    def test_empty_world_advances_frame(self):
        world = WorldModel()
        predict(world)
        assert world.frame_index == 1
        assert world.tracks == []


class TestCostMatrix:
    def test_detection_at_track_mean(self):
        cost = build_cost_matrix([make_track([0, 0, 0])], [make_detection([0, 0, 0])])
        assert cost[0, 0] == 0.0

    def test_identity_covariance(self):
        cost = build_cost_matrix([make_track([0, 0, 0])], [make_detection([1, 1, 1])])
        assert cost[0, 0] == pytest.approx(3.0)

    def test_hand_evaluated_two_by_two(self):
        tracks = [
            make_track([0, 0, 0], cov=np.diag([0.04, 0.01, 0.01])),
            make_track([1, 0, 0], cov=np.diag([0.01, 0.01, 0.04])),
        ]
        dets = [make_detection([0.2, 0.1, 0.0]), make_detection([1.0, 0.0, 0.2])]
        cost = build_cost_matrix(tracks, dets)
        assert cost[0, 0] == pytest.approx(0.2**2 / 0.04 + 0.1**2 / 0.01)
        assert cost[0, 1] == pytest.approx(1.0 / 0.04 + 0.2**2 / 0.01)
        assert cost[1, 0] == pytest.approx(0.8**2 / 0.01 + 0.1**2 / 0.01)
        assert cost[1, 1] == pytest.approx(0.2**2 / 0.04)

    def test_empty_inputs(self):
        assert build_cost_matrix([], []).shape == (0, 0)
        assert build_cost_matrix([make_track([0, 0, 0])], []).shape == (1, 0)


class TestSolveAssignment:
    def test_single_cell(self):
        assoc = solve_assignment(np.array([[0.0]]), gate=7.82)
        assert assoc.matched == [(0, 0)]
        assert assoc.unmatched_tracks == []
        assert assoc.unmatched_detections == []

    def test_prefers_diagonal(self):
        assoc = solve_assignment(np.array([[1.0, 10.0], [10.0, 1.0]]), gate=7.82)
        assert assoc.matched == [(0, 0), (1, 1)]

    def test_over_gate_discarded(self):
        assoc = solve_assignment(np.array([[9.0]]), gate=7.82)
        assert assoc.matched == []
        assert assoc.unmatched_tracks == [0]
        assert assoc.unmatched_detections == [0]

    def test_exact_gate_boundary(self):
        d_in = math.sqrt(7.81) ** 2
        d_out = math.sqrt(7.83) ** 2
        assert solve_assignment(np.array([[d_in]]), gate=7.82).matched == [(0, 0)]
        assert solve_assignment(np.array([[d_out]]), gate=7.82).matched == []

    def test_empty_matrix(self):
        assoc = solve_assignment(np.zeros((0, 3)), gate=7.82)
        assert assoc.matched == []
        assert assoc.unmatched_detections == [0, 1, 2]

    def test_gated_entries_not_preferred(self):
        # Using the over-gate cheap pair would strand an admissible pair.
        cost = np.array([[0.5, 100.0], [0.2, 0.6]])
        assoc = solve_assignment(cost, gate=7.82)
        assert assoc.matched == [(0, 0), (1, 1)]

    def test_lexicographic_tie_break(self):
        assoc = solve_assignment(np.ones((2, 2)), gate=7.82)
        assert assoc.matched == [(0, 0), (1, 1)]
        assoc = solve_assignment(np.zeros((2, 3)), gate=7.82)
        assert assoc.matched == [(0, 0), (1, 1)]
        assoc = solve_assignment(np.zeros((3, 2)), gate=7.82)
        assert assoc.matched == [(0, 0), (1, 1)]

    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 6))
            cost = rng.uniform(0, 10, size=(n, m))
            assoc = solve_assignment(cost, gate=np.inf)
            total = sum(cost[i, j] for i, j in assoc.matched)
            assert len(assoc.matched) == min(n, m)
            assert total == pytest.approx(brute_force_min_cost(cost), abs=1e-9)

    def test_one_to_one(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            cost = rng.uniform(0, 10, size=(5, 7))
            assoc = solve_assignment(cost, gate=5.0)
            rows = [i for i, _ in assoc.matched] + assoc.unmatched_tracks
            cols = [j for _, j in assoc.matched] + assoc.unmatched_detections
            assert sorted(rows) == list(range(5))
            assert sorted(cols) == list(range(7))
            for i, j in assoc.matched:
                assert cost[i, j] <= 5.0

    def test_permutation_robustness_unique_optimum(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            cost = rng.uniform(0, 10, size=(n, m))
            assoc = solve_assignment(cost, gate=np.inf)
            perm = rng.permutation(m)
            permuted = cost[:, perm]
            assoc_p = solve_assignment(permuted, gate=np.inf)
            remapped = sorted((i, int(perm[j])) for i, j in assoc_p.matched)
            assert remapped == assoc.matched


class TestKalmanUpdate:
    def test_uninformative_measurement_barely_moves_mean(self):
        track = make_track([0, 0, 0], cov=1e-4 * np.eye(3))
        det = make_detection([1, 1, 1], cov=1e6 * np.eye(3))
        kalman_update(track, det)
        assert np.linalg.norm(track.mean) < 1e-9

    def test_symmetric_fusion_is_midpoint(self):
        sigma_sq = 4e-4
        track = make_track([0, 0, 0], cov=sigma_sq * np.eye(3))
        det = make_detection([0.01, 0.02, 0.0], cov=sigma_sq * np.eye(3))
        kalman_update(track, det)
        assert np.allclose(track.mean, [0.005, 0.01, 0.0])
        assert np.allclose(track.cov, sigma_sq / 2 * np.eye(3))

    def test_hand_evaluated_gain(self):
        track = make_track([0, 0, 0], cov=np.diag([4.0, 1.0, 1.0]) * 1e-4)
        det = make_detection([0.01, 0.0, 0.0], cov=1e-4 * np.eye(3))
        kalman_update(track, det)
        assert track.mean[0] == pytest.approx(0.008)

    def test_overwrites_class_and_bbox_and_counts_hit(self):
        track = make_track([0, 0, 0])
        new_box = BBox2D(1, 2, 3, 4)
        det = make_detection([0, 0, 0], bbox=new_box)
        det.class_label = "other"
        hits = track.consecutive_hits
        kalman_update(track, det)
        assert track.bbox == new_box
        assert track.class_label == "other"
        assert track.consecutive_hits == hits + 1

    def test_trace_contraction_over_random_updates(self):
        rng = np.random.default_rng(31)
        track = make_track([0, 0, 0], cov=np.eye(3) * 1e-2)
        for _ in range(100):
            a = rng.normal(size=(3, 3))
            det = make_detection(rng.normal(size=3), cov=a @ a.T + 1e-6 * np.eye(3))
            before = np.trace(track.cov)
            kalman_update(track, det)
            after = np.trace(track.cov)
            assert after <= before + 1e-15

    def test_repeated_identical_measurements_approach_recursive_average(self):
        r = 2.5e-5
        world = WorldModel(config=TrackerConfig(n_init=0, process_noise=0.0))
        det = make_detection([0.0, -0.6, 0.9], cov=r * np.eye(3))
        k = 100
        for _ in range(k):
            step(world, [det])
        assert len(world.tracks) == 1
        expected = r / k
        assert np.allclose(world.tracks[0].cov, expected * np.eye(3), rtol=0.01)


class TestLifecycle:
    def test_n_init_zero_confirms_immediately(self):
        world = WorldModel(config=TrackerConfig(n_init=0))
        step(world, [make_detection([0, -0.6, 0.9])])
        assert count(world) == 1
        assert world.tracks[0].status == CONFIRMED

    def test_single_sighting_deleted_with_n_init_one(self):
        world = WorldModel(config=TrackerConfig(n_init=1))
        step(world, [make_detection([0, -0.6, 0.9])])
        assert count(world) == 0
        assert world.tracks[0].status == TENTATIVE
        step(world, [])
        assert world.tracks == []
        assert count(world) == 0

    def test_two_consecutive_sightings_confirm_with_n_init_one(self):
        world = WorldModel(config=TrackerConfig(n_init=1))
        det = make_detection([0, -0.6, 0.9])
        step(world, [det])
        step(world, [det])
        assert count(world) == 1
        assert world.tracks[0].status == CONFIRMED

    def test_confirmed_tracks_never_deleted(self):
        world = WorldModel(config=TrackerConfig(n_init=0))
        step(world, [make_detection([0, -0.6, 0.9])])
        for _ in range(5):
            step(world, [])
        assert count(world) == 1

    def test_ids_unique_and_never_reused(self):
        world = WorldModel(config=TrackerConfig(n_init=1))
        step(world, [make_detection([0, -0.6, 0.9])])
        first_id = world.tracks[0].id
        step(world, [])  # tentative dies
        step(world, [make_detection([0, -0.6, 0.9])])
        assert world.tracks[0].id != first_id


class TestStep:
    def test_three_detections_spawn_three_confirmed(self):
        world = WorldModel(config=TrackerConfig(n_init=0))
        dets = [
            make_detection([0.0, -0.6, 0.9]),
            make_detection([0.1, -0.6, 0.9]),
            make_detection([-0.1, -0.6, 0.9]),
        ]
        world, assoc = step(world, dets)
        assert count(world) == 3
        assert assoc.matched == []
        assert assoc.unmatched_detections == [0, 1, 2]

    def test_matched_update_contracts_covariance(self):
        world = WorldModel(config=TrackerConfig(n_init=0))
        det = make_detection([0.0, -0.6, 0.9])
        step(world, [det])
        before = np.trace(world.tracks[0].cov)
        world, assoc = step(world, [det])
        assert assoc.matched == [(world.tracks[0].id, 0)]
        assert np.trace(world.tracks[0].cov) < before

    def test_gate_semantics_through_step(self):
        cfg = TrackerConfig(n_init=0, process_noise=0.0)
        for dist_sq, expect_match in ((7.81, True), (7.83, False)):
            world = WorldModel(config=cfg)
            spawn = make_detection([0.0, 0.0, 0.0], cov=np.eye(3))
            step(world, [spawn])
            offset = math.sqrt(dist_sq)
            det = make_detection([offset, 0.0, 0.0], cov=np.eye(3))
            world, assoc = step(world, [det])
            assert (len(assoc.matched) == 1) == expect_match

    def test_two_fruits_stable_ids_vs_nearest_neighbor(self):
        # Well separated fruits with 5 mm measurement noise: optimal
        # assignment must agree with the nearest-neighbour pairing and keep
        # ids stable across frames.
        rng = np.random.default_rng(11)
        fruits = [np.array([0.0, -0.6, 0.8]), np.array([0.1, -0.6, 1.2])]
        world = WorldModel(config=TrackerConfig(n_init=0))
        id_by_fruit = {}
        for frame in range(2):
            dets = [
                make_detection(f + rng.normal(scale=0.005, size=3), cov=2.5e-5 * np.eye(3))
                for f in fruits
            ]
            world, assoc = step(world, dets)
            for tid, j in assoc.matched:
                nearest = min(range(2), key=lambda k: np.linalg.norm(dets[j].mean - fruits[k]))
                assert id_by_fruit[nearest] == tid
            for j in assoc.unmatched_detections:
                nearest = min(range(2), key=lambda k: np.linalg.norm(dets[j].mean - fruits[k]))
                new_track = [t for t in world.tracks if t.frames_since_init == 0][j]
                id_by_fruit[nearest] = new_track.id
        assert count(world) == 2

    def test_count_ignores_tentative(self):
        world = WorldModel(config=TrackerConfig(n_init=1))
        step(world, [make_detection([0, -0.6, 0.9])])
        step(
            world,
            [make_detection([0, -0.6, 0.9]), make_detection([0.1, -0.6, 1.2])],
        )
        assert count(world) == 1
        assert len(world.tracks) == 2

    def test_count_monotone_and_ids_fresh_over_random_run(self):
        rng = np.random.default_rng(37)
        world = WorldModel(config=TrackerConfig(n_init=1))
        fruits = [rng.uniform([-0.2, -0.8, 0.4], [0.2, -0.4, 1.8]) for _ in range(6)]
        prev_count = 0
        seen_ids = set()
        for _ in range(30):
            dets = [
                make_detection(f + rng.normal(scale=0.005, size=3), cov=2.5e-5 * np.eye(3))
                for f in fruits
                if rng.random() < 0.7
            ]
            world, assoc = step(world, dets)
            assert count(world) >= prev_count
            prev_count = count(world)
            matched_tracks = [tid for tid, _ in assoc.matched]
            matched_dets = [j for _, j in assoc.matched]
            assert len(set(matched_tracks)) == len(matched_tracks)
            assert len(set(matched_dets)) == len(matched_dets)
            for t in world.tracks:
                if t.frames_since_init == 0:
                    assert t.id not in seen_ids
                    seen_ids.add(t.id)
