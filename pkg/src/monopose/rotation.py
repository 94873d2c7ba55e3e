"""Rotation between two views from bearing-vector pairs.

Convention: a far point seen along ``n`` in frame A is seen along
``n' = R^T n`` in frame B, so ``R`` holds frame B's axes expressed in frame A.

The least-squares fit is orthogonal Procrustes on centroid-subtracted bearing
sets.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    GimbalLockWarning,
    InsufficientPoints,
    NoConsensus,
)

_RANK_TOL = 1e-10
# Tukey scale floor during the consensus refit, radians.
_MIN_ROBUST_SCALE = 1e-9


@dataclass(frozen=True)
class DirectionPair:
    n: np.ndarray
    n_prime: np.ndarray
    id: int = 0


def stack_pairs(pairs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Turn a sequence of :class:`DirectionPair` into ``(n, n_prime, ids)`` arrays."""
    pairs = list(pairs)
    if not pairs:
        return np.empty((0, 3)), np.empty((0, 3)), np.empty(0, dtype=int)
    n = np.array([p.n for p in pairs], dtype=float)
    n_prime = np.array([p.n_prime for p in pairs], dtype=float)
    ids = np.array([p.id for p in pairs], dtype=int)
    return n, n_prime, ids


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 0.004
    max_iterations: int = 500
    min_inliers: int = 6
    rng_seed: int = 0
    confidence: float = 0.999

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be at least 3")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class RotationResult:
    R: np.ndarray
    inliers: frozenset
    outliers: frozenset
    mean_residual: float
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_hypotheses: int = 0


def _check_pairs(n, n_prime):
    n = np.asarray(n, dtype=float).reshape(-1, 3)
    n_prime = np.asarray(n_prime, dtype=float).reshape(-1, 3)
    if n.shape != n_prime.shape:
        raise ValueError(f"bearing arrays differ in shape: {n.shape} vs {n_prime.shape}")
    return n, n_prime


def procrustes(n, n_prime, weights=None) -> np.ndarray:
    """Rotation ``R`` minimising ``sum w_i ||R^T n_i + t - n'_i||^2`` over ``R`` and ``t``.

    Both bearing sets are centred on their (weighted) centroids before the
    cross-covariance is decomposed; a reflection is corrected by flipping the
    singular vector of the smallest singular value.
    """
    n, n_prime = _check_pairs(n, n_prime)
    if n.shape[0] < 3:
        raise InsufficientPoints(f"need at least 3 pairs, got {n.shape[0]}")
    if weights is None:
        w = np.full(n.shape[0], 1.0 / n.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n.shape[0],) or np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be non-negative, one per pair, not all zero")
        w = w / w.sum()

    mean_a = w @ n
    mean_b = w @ n_prime
    a = n - mean_a
    b = n_prime - mean_b
    M = (b * w[:, None]).T @ a

    U, s, Vt = np.linalg.svd(M)
    if s[0] <= 0 or s[1] <= _RANK_TOL * s[0]:
        raise DegenerateConfiguration("bearing vectors are collinear; rotation is not determined")
    V = Vt.T
    if np.linalg.det(V @ U.T) < 0:
        V[:, -1] *= -1
    return V @ U.T


def _batched_fit(a, b):
    """Procrustes for K minimal samples at once; a, b are (K, m, 3)."""
    mean_a = a.mean(axis=1, keepdims=True)
    mean_b = b.mean(axis=1, keepdims=True)
    M = np.einsum("kmi,kmj->kij", b - mean_b, a - mean_a)
    U, s, Vt = np.linalg.svd(M)
    V = np.swapaxes(Vt, 1, 2)
    flip = np.linalg.det(V @ np.swapaxes(U, 1, 2)) < 0
    V[flip, :, -1] *= -1
    R = V @ np.swapaxes(U, 1, 2)
    valid = (s[:, 0] > 0) & (s[:, 1] > _RANK_TOL * s[:, 0])
    return R, valid


def _angle_between(x, y):
    cross = np.linalg.norm(np.cross(x, y), axis=-1)
    dot = np.sum(x * y, axis=-1)
    return np.arctan2(cross, dot)


def rotation_residual(R, n, n_prime):
    """Angle between the predicted bearing ``R^T n`` and the observed ``n'``.

    Works on single vectors or (N, 3) arrays.
    """
    pred = np.asarray(n, dtype=float) @ np.asarray(R, dtype=float)
    res = _angle_between(pred, np.asarray(n_prime, dtype=float))
    return float(res) if np.ndim(res) == 0 else res


def _required_iterations(inlier_ratio, confidence, sample_size=3):
    if inlier_ratio >= 1.0:
        return 1
    p_good = inlier_ratio**sample_size
    if p_good <= 0:
        return math.inf
    return math.ceil(math.log(1 - confidence) / math.log1p(-p_good))


def _tukey_weights(r, scale):
    c = max(4.685 * scale, _MIN_ROBUST_SCALE)
    u = r / c
    return np.where(u < 1, (1 - u * u) ** 2, 0.0)


def _refit(n, n_prime, mask, thr, max_rounds=20):
    """Refit on the consensus set, then iterate robust refits until the set is stable."""
    R = procrustes(n[mask], n_prime[mask])
    for _ in range(max_rounds):
        r = rotation_residual(R, n, n_prime)
        new_mask = r <= thr
        if new_mask.sum() < 3:
            break
        r_in = r[new_mask]
        w = _tukey_weights(r_in, 1.4826 * np.median(r_in))
        if np.count_nonzero(w) < 3:
            w = None
        try:
            R_new = procrustes(n[new_mask], n_prime[new_mask], w)
        except DegenerateConfiguration:
            break
        done = np.array_equal(new_mask, mask) and np.allclose(R_new, R, rtol=0, atol=1e-15)
        R, mask = R_new, new_mask
        if done:
            break
    return R


def estimate_rotation_ransac(n, n_prime, cfg: RansacConfig = RansacConfig(), ids=None) -> RotationResult:
    """RANSAC over 3-pair samples, then refit on the winning consensus set.

    Hypotheses are drawn in chunks from a generator seeded with
    ``cfg.rng_seed``; the loop stops early once the usual
    ``1 - (1 - w^3)^N >= confidence`` bound is met. Ties in consensus size go
    to the earliest hypothesis.
    """
    n, n_prime = _check_pairs(n, n_prime)
    count = n.shape[0]
    ids = np.arange(count) if ids is None else np.asarray(ids)
    if count < cfg.min_inliers:
        raise InsufficientPoints(f"need at least {cfg.min_inliers} pairs, got {count}")
    thr = cfg.inlier_threshold
    rng = np.random.default_rng(cfg.rng_seed)

    best_count = 0
    best_mask = None
    evaluated = 0
    needed = cfg.max_iterations
    chunk = 64
    while evaluated < min(cfg.max_iterations, needed):
        k = min(chunk, cfg.max_iterations - evaluated)
        sample = np.argpartition(rng.random((k, count)), 3, axis=1)[:, :3]
        R_k, valid = _batched_fit(n[sample], n_prime[sample])
        pred = np.einsum("nj,kji->kni", n, R_k)
        res = _angle_between(pred, n_prime[None, :, :])
        inl = (res <= thr) & valid[:, None]
        counts = inl.sum(axis=1)
        j = int(np.argmax(counts))
        if counts[j] > best_count:
            best_count = int(counts[j])
            best_mask = inl[j]
            needed = _required_iterations(best_count / count, cfg.confidence)
        evaluated += k

    if best_mask is None or best_count < cfg.min_inliers:
        raise NoConsensus(
            f"best hypothesis has {best_count} inliers, need {cfg.min_inliers} "
            f"(threshold {thr:g} rad)"
        )

    R = _refit(n, n_prime, best_mask, thr)
    residuals = rotation_residual(R, n, n_prime)
    mask = residuals <= thr
    if mask.sum() < cfg.min_inliers:
        raise NoConsensus(f"refit kept {int(mask.sum())} inliers, need {cfg.min_inliers}")

    return RotationResult(
        R=R,
        inliers=frozenset(int(i) for i in ids[mask]),
        outliers=frozenset(int(i) for i in ids[~mask]),
        mean_residual=float(residuals[mask].mean()),
        residuals=residuals,
        n_hypotheses=evaluated,
    )


def rotation_from_euler(alpha, beta, gamma) -> np.ndarray:
    """Fixed-axis x-y-z angles in degrees: ``R = Rz(gamma) @ Ry(beta) @ Rx(alpha)``."""
    a, b, c = np.radians([alpha, beta, gamma])
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    return np.array(
        [
            [cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa],
            [sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa],
            [-sb, cb * sa, cb * ca],
        ]
    )


def rotation_to_euler(R) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_from_euler`, degrees.

    At gimbal lock (beta = +-90 deg) gamma is set to 0 and a
    :class:`GimbalLockWarning` is issued.
    """
    R = np.asarray(R, dtype=float)
    beta = math.degrees(math.asin(max(-1.0, min(1.0, -R[2, 0]))))
    if abs(abs(beta) - 90.0) < 1e-6:
        warnings.warn("beta is at +-90 deg; alpha and gamma are coupled", GimbalLockWarning, stacklevel=2)
        if beta > 0:
            alpha = math.atan2(R[0, 1], R[0, 2])
        else:
            alpha = math.atan2(-R[0, 1], -R[0, 2])
        return math.degrees(alpha), beta, 0.0
    alpha = math.degrees(math.atan2(R[2, 1], R[2, 2]))
    gamma = math.degrees(math.atan2(R[1, 0], R[0, 0]))
    return alpha, beta, gamma


def rotation_error_deg(R_est, R_true) -> np.ndarray:
    """Signed per-axis error: Euler angles of ``R_true^T @ R_est``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GimbalLockWarning)
        return np.array(rotation_to_euler(np.asarray(R_true).T @ np.asarray(R_est)))
