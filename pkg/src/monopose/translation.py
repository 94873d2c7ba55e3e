"""Translation direction from rotation-compensated flow.

After the estimated rotation is removed from the second view, every tracked
point moves along a line through the epipole. Pairs of such flow lines are
intersected; the intersections are averaged with weights that grow with the
shorter segment's length and saturate at ``L``.

All 2D quantities live on the normalized image plane (z = 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllParallel,
    AmbiguousSign,
    BehindCamera,
    InsufficientParallax,
    NearParallel,
)

MAX_CONDITION = 1e8
MIN_DET = 1e-12
ALL_PAIRS_LIMIT = 64
# intersections farther than this many median distances from the weighted median are trimmed
TRIM_FACTOR = 3.0
SAMPLED_PAIRS = 2048


@dataclass(frozen=True)
class FlowSegment:
    k: np.ndarray
    k_prime_rot: np.ndarray
    length: float
    id: int = 0

    @classmethod
    def from_points(cls, k, k_prime_rot, id=0):
        k = np.asarray(k, dtype=float)
        kp = np.asarray(k_prime_rot, dtype=float)
        return cls(k=k, k_prime_rot=kp, length=float(np.linalg.norm(kp - k)), id=id)


@dataclass(frozen=True)
class EpipoleEstimate:
    e: np.ndarray
    c: int
    t_dir: np.ndarray
    n_intersections: int
    covariance: np.ndarray
    n_parallel: int = 0
    n_trimmed: int = 0
    segment_ids: tuple = field(default_factory=tuple)


def compensate_rotation(R, n, n_prime, id=0) -> FlowSegment:
    """Undo the rotation on the second bearing and return the 2D flow segment."""
    n = np.asarray(n, dtype=float)
    m = np.asarray(R, dtype=float) @ np.asarray(n_prime, dtype=float)
    if n[2] <= 1e-9 or m[2] <= 1e-9:
        raise BehindCamera(f"segment {id}: compensated ray leaves the forward image plane")
    return FlowSegment.from_points(n[:2] / n[2], m[:2] / m[2], id=id)


def compensate_all(R, n, n_prime):
    """Vectorized :func:`compensate_rotation`.

    Returns ``(k, k_prime_rot, ok)``; rows with ``ok == False`` point behind
    the image plane and hold NaN.
    """
    n = np.asarray(n, dtype=float).reshape(-1, 3)
    m = np.asarray(n_prime, dtype=float).reshape(-1, 3) @ np.asarray(R, dtype=float).T
    ok = (n[:, 2] > 1e-9) & (m[:, 2] > 1e-9)
    k = np.full((n.shape[0], 2), np.nan)
    kp = np.full((n.shape[0], 2), np.nan)
    k[ok] = n[ok, :2] / n[ok, 2:3]
    kp[ok] = m[ok, :2] / m[ok, 2:3]
    return k, kp, ok


def pair_weight(l_a, l_b, L):
    """Weight of one intersection: ``min(l_a, l_b) / L``, capped at 1."""
    return np.minimum(np.minimum(l_a, l_b) / L, 1.0)


def _solve_pairs(ka, kpa, kb, kpb):
    """Batched 2x2 solve; returns mu, nu, points and a usable-pair mask."""
    c0 = ka - kpa
    c1 = kpb - kb
    rhs = ka - kb
    det = c0[:, 0] * c1[:, 1] - c1[:, 0] * c0[:, 1]
    fro2 = np.sum(c0 * c0, axis=1) + np.sum(c1 * c1, axis=1)
    smax2 = 0.5 * (fro2 + np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cond = smax2 / np.abs(det)
        ok = (np.abs(det) >= MIN_DET) & (cond <= MAX_CONDITION)
        mu = (rhs[:, 0] * c1[:, 1] - c1[:, 0] * rhs[:, 1]) / det
        nu = (c0[:, 0] * rhs[:, 1] - rhs[:, 0] * c0[:, 1]) / det
        points = ka + mu[:, None] * (kpa - ka)
    return mu, nu, points, ok


def intersect_pair(a: FlowSegment, b: FlowSegment):
    """Intersect the lines carrying two flow segments.

    Returns ``(mu, nu, point)`` with ``point = a.k + mu * (a.k' - a.k)``.
    """
    mu, nu, points, ok = _solve_pairs(
        a.k[None], a.k_prime_rot[None], b.k[None], b.k_prime_rot[None]
    )
    if not ok[0]:
        raise NearParallel(f"segments {a.id} and {b.id} are (nearly) parallel")
    return float(mu[0]), float(nu[0]), points[0]


def _as_arrays(segments):
    k = np.array([s.k for s in segments], dtype=float).reshape(-1, 2)
    kp = np.array([s.k_prime_rot for s in segments], dtype=float).reshape(-1, 2)
    lengths = np.array([s.length for s in segments], dtype=float)
    ids = tuple(int(s.id) for s in segments)
    return k, kp, lengths, ids


def _pair_indices(count, rng_seed):
    ia, ib = np.triu_indices(count, k=1)
    if count > ALL_PAIRS_LIMIT:
        rng = np.random.default_rng(rng_seed)
        pick = np.sort(rng.choice(ia.size, size=min(SAMPLED_PAIRS, ia.size), replace=False))
        ia, ib = ia[pick], ib[pick]
    return ia, ib


def sign_of_motion(segments, e, min_length=0.0) -> int:
    """+1 when the flow points away from the epipole, -1 when toward it (majority vote)."""
    k, kp, lengths, _ = _as_arrays(segments)
    keep = lengths > min_length
    if not keep.any():
        raise InsufficientParallax("no segment is long enough to vote on the motion sign")
    e = np.asarray(e, dtype=float)[:2]
    votes = np.sign(np.sum((kp[keep] - k[keep]) * (k[keep] - e), axis=1))
    total = int(votes.sum())
    if total == 0:
        raise AmbiguousSign("flow votes for expansion and contraction are tied")
    return 1 if total > 0 else -1


def _weighted_median(x, w):
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(w[order])
    return x[order][np.searchsorted(cw, 0.5 * cw[-1])]


def estimate_epipole(segments, L, min_length=0.0, rng_seed=0, trim=TRIM_FACTOR) -> EpipoleEstimate:
    """Weighted average of pairwise flow-line intersections.

    Pairs are all O(n^2) combinations up to 64 segments, otherwise 2048
    pairs drawn with ``rng_seed``. Near-parallel pairs are dropped, and so
    are intersections farther than ``trim`` median distances from the
    weighted median (pass ``trim=None`` to keep them). ``covariance`` is the
    weighted scatter of the kept intersections around the returned epipole.
    """
    segments = [s for s in segments if s.length > min_length]
    if len(segments) < 2:
        raise InsufficientParallax(f"need two flow segments, have {len(segments)}")
    if not L > 0:
        raise ValueError("L must be positive")
    k, kp, lengths, ids = _as_arrays(segments)
    ia, ib = _pair_indices(len(segments), rng_seed)
    _, _, points, ok = _solve_pairs(k[ia], kp[ia], k[ib], kp[ib])
    if not ok.any():
        raise AllParallel("every pair of flow lines is parallel")

    w = pair_weight(lengths[ia[ok]], lengths[ib[ok]], L)
    pts = points[ok]
    n_trimmed = 0
    if trim is not None and len(pts) > 2:
        center = np.array([_weighted_median(pts[:, 0], w), _weighted_median(pts[:, 1], w)])
        dist = np.linalg.norm(pts - center, axis=1)
        keep = dist <= trim * _weighted_median(dist, w)
        n_trimmed = int((~keep).sum())
        pts, w = pts[keep], w[keep]
    w = w / w.sum()
    mean = w @ pts
    d = pts - mean
    cov = (d * w[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)

    e = np.array([mean[0], mean[1], 1.0])
    c = sign_of_motion(segments, mean)
    return EpipoleEstimate(
        e=e,
        c=c,
        t_dir=c * e / np.linalg.norm(e),
        n_intersections=int(ok.sum()),
        covariance=cov,
        n_parallel=int((~ok).sum()),
        n_trimmed=n_trimmed,
        segment_ids=ids,
    )


def _homogeneous(p):
    return np.column_stack([p, np.ones(p.shape[0])])


def epipolar_distance(k, kp, e_h):
    """Distance of each flow endpoint from the line joining its start to the epipole.

    ``e_h`` is homogeneous, so epipoles at infinity (z = 0) are allowed.
    """
    lines = np.cross(_homogeneous(k), np.asarray(e_h, dtype=float))
    norm = np.linalg.norm(lines[:, :2], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.abs(np.sum(lines * _homogeneous(kp), axis=1)) / norm
    return np.where(norm > 0, dist, np.inf)


def consistent_segments(segments, gate, rng_seed=0, max_hypotheses=300) -> np.ndarray:
    """Boolean mask of segments whose flow line passes near a common epipole.

    Small RANSAC: each hypothesis is the intersection of two flow lines and
    is scored by the sum of squared :func:`epipolar_distance` values, each
    capped at ``gate``. Segments of the best hypothesis within ``gate`` are kept.
    """
    k, kp, _, _ = _as_arrays(segments)
    count = k.shape[0]
    if count < 3:
        return np.ones(count, dtype=bool)
    ia, ib = np.triu_indices(count, k=1)
    if ia.size > max_hypotheses:
        rng = np.random.default_rng(rng_seed)
        pick = np.sort(rng.choice(ia.size, size=max_hypotheses, replace=False))
        ia, ib = ia[pick], ib[pick]
    kh, kph = _homogeneous(k), _homogeneous(kp)
    lines = np.cross(kh, kph)
    hyp = np.cross(lines[ia], lines[ib])
    valid = np.linalg.norm(hyp, axis=1) > 0
    if not valid.any():
        return np.ones(count, dtype=bool)
    hyp = hyp[valid]
    # same distance as epipolar_distance, for every hypothesis at once
    through = np.cross(kh[None, :, :], hyp[:, None, :])
    norm = np.linalg.norm(through[..., :2], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.abs(np.sum(through * kph[None], axis=2)) / norm
    dist = np.where(norm > 0, dist, np.inf)
    # truncated quadratic cost: short segments pass almost any gate, so plain counts tie too easily
    cost = np.sum(np.minimum(dist, gate) ** 2, axis=1)
    # argmin keeps the earliest hypothesis on ties
    return dist[int(np.argmin(cost))] <= gate
