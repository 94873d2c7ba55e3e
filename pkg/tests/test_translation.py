import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monopose import (
    CameraIntrinsics,
    FlowSegment,
    SceneSpec,
    compensate_rotation,
    estimate_epipole,
    generate_scene,
    intersect_pair,
    project_points,
    rotation_from_euler,
    sign_of_motion,
)
from monopose.errors import AllParallel, AmbiguousSign, BehindCamera, InsufficientParallax, NearParallel
from monopose.translation import (
    compensate_all,
    consistent_segments,
    epipolar_distance,
    pair_weight,
)

from conftest import bearings

INTR = CameraIntrinsics.default()


def seg(k, kp, id=0):
    return FlowSegment.from_points(np.asarray(k, float), np.asarray(kp, float), id=id)


def true_segments(matches, R, min_length=0.0):
    n_a, n_b = bearings(INTR, matches)
    k, kp, ok = compensate_all(R, n_a, n_b)
    out = [seg(k[i], kp[i], matches[i].id) for i in np.flatnonzero(ok)]
    return [s for s in out if s.length > min_length]


def near_scene(T, R=(0, 0, 0), seed=0, noise=0.0, count=30):
    spec = SceneSpec(n_near=count, n_far=0, T_true=T, R_true=R, seed=seed, noise_sigma_px=noise)
    return generate_scene(spec)


def test_pure_rotation_pair_compensates_to_zero():
    R = rotation_from_euler(10, 2, 5)
    n = np.array([0.1, -0.2, 1.0])
    n /= np.linalg.norm(n)
    s = compensate_rotation(R, n, R.T @ n, id=3)
    assert s.length <= 1e-9 and s.id == 3


def test_translation_only_segment_points_at_epipole():
    T = np.array([0.3, 0.2, 0.4])
    P = np.array([0.5, -0.4, 3.0])
    n, n_prime = P / np.linalg.norm(P), (P - T) / np.linalg.norm(P - T)
    s = compensate_rotation(np.eye(3), n, n_prime)
    e = T[:2] / T[2]
    d1, d2 = s.k_prime_rot - s.k, e - s.k
    assert abs(d1[0] * d2[1] - d1[1] * d2[0]) <= 1e-12 * np.linalg.norm(d1) * np.linalg.norm(d2)


def test_far_point_residual_flow_matches_analytic_length():
    # compensated flow of a static point at depth Z is T_z * (k - e) / (Z - T_z)
    T = np.array([0.3, 0.2, 0.4])
    R = rotation_from_euler(10, 2, 5)
    rng = np.random.default_rng(0)
    e = T[:2] / T[2]
    for _ in range(50):
        k = rng.uniform([-0.2, -0.15], [0.2, 0.15])
        P = np.append(k, 1.0) * 30.0
        n = P / np.linalg.norm(P)
        m = R.T @ (P - T)
        s = compensate_rotation(R, n, m / np.linalg.norm(m))
        expected = T[2] * np.linalg.norm(k - e) / (30.0 - T[2])
        assert s.length == pytest.approx(expected, rel=1e-9)


def test_behind_camera():
    with pytest.raises(BehindCamera):
        compensate_rotation(np.eye(3), [0, 0, 1.0], [0, 0, -1.0])
    _, _, ok = compensate_all(np.eye(3), [[0, 0, 1.0], [0, 0, 1.0]], [[0, 0, 1.0], [1.0, 0, 0]])
    assert ok.tolist() == [True, False]


def test_intersect_perpendicular_lines():
    mu, nu, p = intersect_pair(seg((1, 0), (2, 0)), seg((0, 1), (0, 2)))
    assert np.allclose(p, (0, 0), atol=1e-15)
    assert mu == pytest.approx(-1) and nu == pytest.approx(-1)


def test_intersect_parallel():
    with pytest.raises(NearParallel):
        intersect_pair(seg((0, 0), (1, 0)), seg((0, 1), (1, 1)))
    with pytest.raises(NearParallel):
        intersect_pair(seg((0, 0), (1, 0)), seg((0, 1), (1, 1 + 1e-10)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_intersection_same_from_both_segments(c):
    a, b = seg(c[0:2], c[2:4]), seg(c[4:6], c[6:8])
    try:
        mu, nu, p = intersect_pair(a, b)
    except NearParallel:
        return
    q = b.k + nu * (b.k_prime_rot - b.k)
    assert np.allclose(p, q, rtol=0, atol=1e-9 * max(1.0, np.abs(p).max()))


def test_noiseless_pair_hits_true_epipole():
    matches, truth = near_scene((0.3, 0.2, 0.4))
    segs = true_segments(matches, np.eye(3))
    _, _, p = intersect_pair(segs[0], segs[1])
    assert np.allclose(p, [0.75, 0.5], rtol=0, atol=1e-9)


def test_all_pairs_share_one_epipole():
    matches, truth = near_scene((-0.1, 0.25, 0.3), seed=4)
    segs = true_segments(matches, np.eye(3))
    e = truth.T[:2] / truth.T[2]
    for a, b in itertools.combinations(segs, 2):
        try:
            _, _, p = intersect_pair(a, b)
        except NearParallel:
            continue
        assert np.allclose(p, e, rtol=0, atol=1e-9)


def test_epipole_of_default_scene_with_true_rotation():
    matches, truth = generate_scene(SceneSpec())
    segs = true_segments(matches, truth.R, min_length=INTR.px_to_normalized(0.5))
    est = estimate_epipole(segs, INTR.px_to_normalized(12))
    assert np.allclose(est.e, [0.75, 0.5, 1.0], rtol=0, atol=1e-6)
    assert est.c == 1
    assert np.allclose(est.t_dir, truth.T / np.linalg.norm(truth.T), atol=1e-6)


def test_two_segments():
    a, b = seg((1, 0), (2, 0), 0), seg((0, 1), (0, 3), 1)
    est = estimate_epipole([a, b], L=1.0)
    assert np.allclose(est.e, [0, 0, 1], atol=1e-15)
    assert np.array_equal(est.covariance, np.zeros((2, 2)))
    assert est.n_intersections == 1 and est.c == 1
    assert est.segment_ids == (0, 1)


def test_epipole_errors():
    with pytest.raises(InsufficientParallax):
        estimate_epipole([seg((0, 0), (1, 0))], L=1.0)
    with pytest.raises(InsufficientParallax):
        estimate_epipole([seg((0, 0), (1e-6, 0)), seg((0, 1), (0, 1.000001))], L=1.0, min_length=1e-3)
    with pytest.raises(AllParallel):
        estimate_epipole([seg((0, 0), (1, 0)), seg((0, 1), (1, 1)), seg((0, 2), (3, 2))], L=1.0)
    with pytest.raises(ValueError):
        estimate_epipole([seg((1, 0), (2, 0)), seg((0, 1), (0, 2))], L=0)


def test_epipole_estimate_invariants():
    matches, truth = near_scene((0.2, -0.1, 0.35), R=(3, -2, 1), seed=2, noise=0.3)
    segs = true_segments(matches, truth.R, min_length=INTR.px_to_normalized(0.5))
    est = estimate_epipole(segs, INTR.px_to_normalized(12))
    assert abs(np.linalg.norm(est.t_dir) - 1) < 1e-12
    assert np.allclose(est.t_dir, est.c * est.e / np.linalg.norm(est.e))
    assert np.allclose(est.covariance, est.covariance.T)
    assert np.linalg.eigvalsh(est.covariance).min() >= -1e-15
    assert est.e[2] == 1.0


def test_sign_of_motion():
    e = np.zeros(2)
    out = [seg(d, 1.1 * np.asarray(d)) for d in [(1, 0), (0, 1), (-1, -1)]]
    inward = [seg(d, 0.9 * np.asarray(d)) for d in [(1, 0), (0, 1), (-1, -1)]]
    assert sign_of_motion(out, e) == 1
    assert sign_of_motion(inward, e) == -1
    with pytest.raises(AmbiguousSign):
        sign_of_motion(out[:1] + inward[:1], e)
    with pytest.raises(InsufficientParallax):
        sign_of_motion(out, e, min_length=10)


def test_backward_motion_gives_negative_sign():
    for s in range(20):
        rng = np.random.default_rng(s)
        T = np.append(rng.uniform(-0.2, 0.2, 2), -rng.uniform(0.2, 0.5))
        matches, truth = near_scene(tuple(T), R=tuple(rng.uniform(-5, 5, 3)), seed=s)
        segs = true_segments(matches, truth.R)
        est = estimate_epipole(segs, INTR.px_to_normalized(12))
        assert est.c == -1
        assert np.allclose(est.t_dir, T / np.linalg.norm(T), atol=1e-8)


def test_epipole_rotation_invariance():
    spec = SceneSpec(n_near=30, n_far=0, T_true=(0.25, -0.15, 0.3), R_true=(4, -3, 6), seed=5)
    _, truth = generate_scene(spec)
    P = truth.points
    n_a = P / np.linalg.norm(P, axis=1, keepdims=True)
    L = INTR.px_to_normalized(12)

    def epipole(P_b, R):
        k, kp, _ = compensate_all(R, n_a, P_b / np.linalg.norm(P_b, axis=1, keepdims=True))
        return estimate_epipole([seg(k[i], kp[i], i) for i in range(len(k))], L).e

    rotated = epipole((P - truth.T) @ truth.R, truth.R)
    plain = epipole(P - truth.T, np.eye(3))
    assert np.allclose(rotated, plain, rtol=0, atol=1e-6)


def test_sign_flip_under_reversed_translation():
    T = np.array([0.2, 0.1, 0.35])
    R = rotation_from_euler(2, -3, 4)
    plus, _ = generate_scene(SceneSpec(n_near=30, n_far=0, seed=9), R=R, T=T)
    minus, _ = generate_scene(SceneSpec(n_near=30, n_far=0, seed=9), R=R, T=-T)
    L = INTR.px_to_normalized(12)
    a = estimate_epipole(true_segments(plus, R), L)
    b = estimate_epipole(true_segments(minus, R), L)
    assert a.c == -b.c
    assert np.allclose(a.t_dir, -b.t_dir, atol=1e-8)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 10), st.floats(1e-6, 10), st.floats(0, 10), st.floats(1e-3, 20))
def test_pair_weight_bounds_and_monotonicity(la, lb, grow, L):
    w = pair_weight(la, lb, L)
    assert 0 < w <= 1
    assert pair_weight(la + grow, lb, L) >= w
    assert pair_weight(la, lb + grow, L) >= w


def test_weight_saturates_at_L():
    assert pair_weight(5.0, 12.0, 12.0) == pytest.approx(5 / 12)
    assert pair_weight(13.0, 20.0, 12.0) == 1.0


def test_epipolar_distance_and_mismatch_gate():
    matches, truth = near_scene((0.2, 0.1, 0.4), seed=3)
    segs = true_segments(matches, np.eye(3))
    k = np.array([s.k for s in segs])
    kp = np.array([s.k_prime_rot for s in segs])
    e_h = np.append(truth.T[:2] / truth.T[2], 1.0)
    assert epipolar_distance(k, kp, e_h).max() < 1e-12
    # the same lines written with an epipole at infinity along x
    assert np.isfinite(epipolar_distance(k, kp, [1.0, 0.0, 0.0])).all()

    broken = list(segs)
    rng = np.random.default_rng(0)
    for i in (2, 7, 11):
        broken[i] = seg(segs[i].k, segs[i].k + rng.uniform(-0.05, 0.05, 2), segs[i].id)
    mask = consistent_segments(broken, gate=1e-3)
    assert not mask[[2, 7, 11]].any()
    assert mask.sum() == len(segs) - 3


def test_covariance_shrinks_with_longer_flow():
    L = INTR.px_to_normalized(12)
    tiers = {0.5: [], 4.0: [], 8.0: []}
    for s in range(200):
        spec = SceneSpec.standard_protocol(seed=s, n_outliers=0, n_far=0)
        matches, truth = generate_scene(spec)
        segs = true_segments(matches, truth.R)
        for px in tiers:
            try:
                est = estimate_epipole(segs, L, min_length=INTR.px_to_normalized(px))
            except (InsufficientParallax, AllParallel, AmbiguousSign):
                continue
            tiers[px].append(np.trace(est.covariance))
    means = [np.mean(tiers[px]) for px in sorted(tiers)]
    assert means[0] >= means[1] >= means[2]
