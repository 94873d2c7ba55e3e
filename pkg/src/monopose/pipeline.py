"""Two-frame pose: rotation from far points, translation direction from the rest."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, lift_pixels
from .errors import AllParallel, AmbiguousSign, InsufficientParallax
from .rotation import RansacConfig, RotationResult, estimate_rotation_ransac, rotation_to_euler
from .translation import (
    EpipoleEstimate,
    FlowSegment,
    compensate_all,
    consistent_segments,
    epipolar_distance,
    estimate_epipole,
)

log = logging.getLogger(__name__)

FULL = "Full"
ROTATION_ONLY = "RotationOnly"


@dataclass(frozen=True)
class PipelineConfig:
    ransac: RansacConfig = field(default_factory=RansacConfig)
    L_px: float = 12.0
    min_translation_points: int = 2
    min_flow_px: float = 0.5
    # epipolar gate for translation points, in multiples of the inlier threshold
    mismatch_gate: float = 4.0

    def __post_init__(self):
        if self.min_translation_points < 2:
            raise ValueError("min_translation_points must be at least 2")
        if not self.L_px > 0:
            raise ValueError("L_px must be positive")
        if self.min_flow_px < 0:
            raise ValueError("min_flow_px must be non-negative")
        if not self.mismatch_gate > 0:
            raise ValueError("mismatch_gate must be positive")


@dataclass(frozen=True)
class PoseEstimate:
    R: np.ndarray
    euler_deg: tuple
    t_dir: np.ndarray | None
    epipole: EpipoleEstimate | None
    rotation_inliers: frozenset
    rotation_outliers: frozenset
    translation_points: frozenset
    mean_rotation_residual: float
    status: str
    rotation: RotationResult | None = None

    @property
    def rejected(self) -> frozenset:
        return self.rotation_outliers - self.translation_points


def _match_arrays(matches):
    ids = np.array([m.id for m in matches], dtype=int)
    uv_a = np.array([m.a for m in matches], dtype=float).reshape(-1, 2)
    uv_b = np.array([m.b for m in matches], dtype=float).reshape(-1, 2)
    return ids, uv_a, uv_b


def _translation_from_segments(segments, cfg, gate, L, floor, seed):
    """Gate mismatches, then estimate the epipole; one re-gate pass against the estimate."""
    mask = consistent_segments(segments, gate, rng_seed=seed)
    used = [s for s, keep in zip(segments, mask) if keep]
    if len(used) < cfg.min_translation_points:
        return None
    est = estimate_epipole(used, L, min_length=floor, rng_seed=seed)

    k = np.array([s.k for s in segments])
    kp = np.array([s.k_prime_rot for s in segments])
    regate = epipolar_distance(k, kp, est.e) <= gate
    if not np.array_equal(regate, mask):
        used2 = [s for s, keep in zip(segments, regate) if keep]
        if len(used2) >= cfg.min_translation_points:
            est = estimate_epipole(used2, L, min_length=floor, rng_seed=seed)
    return est


def estimate_pose(intr: CameraIntrinsics, matches, cfg: PipelineConfig = PipelineConfig()) -> PoseEstimate:
    """Rotation by RANSAC on bearings; translation direction from compensated outlier flow.

    Falls back to ``RotationOnly`` when fewer than
    ``cfg.min_translation_points`` usable flow segments remain. Raises
    :class:`~monopose.errors.NoConsensus` when no rotation can be found.
    """
    ids, uv_a, uv_b = _match_arrays(matches)
    _, n_a = lift_pixels(intr, uv_a)
    _, n_b = lift_pixels(intr, uv_b)

    rot = estimate_rotation_ransac(n_a, n_b, cfg.ransac, ids=ids)
    R = rot.R
    thr = cfg.ransac.inlier_threshold
    outlier_mask = ~(rot.residuals <= thr)

    k, kp, ok = compensate_all(R, n_a, n_b)
    with np.errstate(invalid="ignore"):
        lengths = np.linalg.norm(kp - k, axis=1)
    floor = intr.px_to_normalized(cfg.min_flow_px)
    L = intr.px_to_normalized(cfg.L_px)
    candidates = np.flatnonzero(outlier_mask & ok & (lengths > floor))
    segments = [
        FlowSegment(k=k[i], k_prime_rot=kp[i], length=float(lengths[i]), id=int(ids[i]))
        for i in candidates
    ]

    est = None
    if len(segments) >= cfg.min_translation_points:
        try:
            est = _translation_from_segments(
                segments, cfg, cfg.mismatch_gate * thr, L, floor, cfg.ransac.rng_seed
            )
        except (InsufficientParallax, AllParallel, AmbiguousSign) as exc:
            log.debug("translation unavailable: %s", exc)
            est = None

    translation_points = frozenset(est.segment_ids) if est is not None else frozenset()
    return PoseEstimate(
        R=R,
        euler_deg=rotation_to_euler(R),
        t_dir=None if est is None else est.t_dir,
        epipole=est,
        rotation_inliers=rot.inliers,
        rotation_outliers=rot.outliers,
        translation_points=translation_points,
        mean_rotation_residual=rot.mean_residual,
        status=FULL if est is not None else ROTATION_ONLY,
        rotation=rot,
    )
