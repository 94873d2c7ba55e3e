"""Synthetic two-view scenes with known motion and Monte Carlo accuracy runs.

Motion convention used by the generator: frame B's centre sits at ``T`` in
frame A coordinates and its axes are the columns of ``R``, so a point maps as
``P_B = R^T (P_A - T)``. The compensated epipole in image A is then
``T / T_z`` and the estimated ``t_dir`` should equal ``T / |T|``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .camera import CameraIntrinsics, PixelPoint, lift_pixels, project_points
from .errors import FrustumTooTight, NoConsensus
from .pipeline import FULL, PipelineConfig, estimate_pose
from .rotation import rotation_error_deg, rotation_from_euler
from .tracks import FeatureCorrespondence

MAX_ATTEMPTS = 10_000
ROTATION_FAILURE_DEG = 1.0
TRANSLATION_FAILURE_DEG = 30.0

NEAR, FAR, OUTLIER = "near", "far", "outlier"


@dataclass(frozen=True)
class SceneSpec:
    n_near: int = 30
    n_far: int = 70
    near_depth: tuple = (1.0, 4.0)
    far_depth: tuple = (25.0, 35.0)
    fov_deg: float | None = None
    T_true: tuple = (0.3, 0.2, 0.4)
    R_true: tuple = (10.0, 2.0, 5.0)
    noise_sigma_px: float = 0.0
    n_outliers: int = 0
    seed: int = 0
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics.default)
    # when set, every trial draws its own R and T instead of using R_true/T_true
    random_motion: bool = False
    max_rot_deg: float = 5.0
    t_norm_range: tuple = (0.02, 0.06)
    t_cone_deg: float = 45.0

    def __post_init__(self):
        for name in ("near_depth", "far_depth"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                raise ValueError(f"{name} must satisfy 0 < min < max, got {(lo, hi)}")
        if self.noise_sigma_px < 0:
            raise ValueError("noise_sigma_px must be non-negative")
        if min(self.n_near, self.n_far, self.n_outliers) < 0:
            raise ValueError("point counts must be non-negative")
        if self.fov_deg is not None and not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must lie in (0, 180)")
        if self.intrinsics.width is None or self.intrinsics.height is None:
            raise ValueError("simulation intrinsics need width and height")
        lo, hi = self.t_norm_range
        if not 0 <= lo <= hi:
            raise ValueError("t_norm_range must satisfy 0 <= min <= max")

    @classmethod
    def standard_protocol(cls, seed: int = 0, **overrides) -> "SceneSpec":
        """Randomized motion, sigma^2 = 0.05 px^2 pixel noise, 20 outliers."""
        params = dict(
            noise_sigma_px=math.sqrt(0.05),
            n_outliers=20,
            random_motion=True,
            seed=seed,
        )
        params.update(overrides)
        return cls(**params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["intrinsics"] = asdict(self.intrinsics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if "intrinsics" in d and isinstance(d["intrinsics"], dict):
            d["intrinsics"] = CameraIntrinsics(**d["intrinsics"])
        for key in ("near_depth", "far_depth", "T_true", "R_true", "t_norm_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class SceneTruth:
    R: np.ndarray
    T: np.ndarray
    labels: tuple
    points: np.ndarray


def random_motion(rng, spec: SceneSpec):
    """Euler angles uniform in +-max_rot_deg; T inside a cone around the optical axis."""
    euler = rng.uniform(-spec.max_rot_deg, spec.max_rot_deg, size=3)
    cos_max = math.cos(math.radians(spec.t_cone_deg))
    z = rng.uniform(cos_max, 1.0)
    phi = rng.uniform(0, 2 * math.pi)
    r = math.sqrt(max(0.0, 1 - z * z))
    direction = np.array([r * math.cos(phi), r * math.sin(phi), z])
    norm = rng.uniform(*spec.t_norm_range)
    return rotation_from_euler(*euler), norm * direction


def _in_image(uv, intr):
    return (uv[:, 0] >= 0) & (uv[:, 0] < intr.width) & (uv[:, 1] >= 0) & (uv[:, 1] < intr.height)


def _sample_band(rng, count, depth, R, T, spec):
    intr = spec.intrinsics
    if spec.fov_deg is None:
        u_range = (0.0, float(intr.width))
        v_range = (0.0, float(intr.height))
    else:
        half = math.tan(math.radians(spec.fov_deg) / 2) * intr.f
        du, dv = half / intr.s_x, half / intr.s_y
        u_range = (max(0.0, intr.c_x - du), min(float(intr.width), intr.c_x + du))
        v_range = (max(0.0, intr.c_y - dv), min(float(intr.height), intr.c_y + dv))

    points = np.empty((count, 3))
    filled = 0
    attempts = np.zeros(count, dtype=int)
    while filled < count:
        todo = count - filled
        uv = np.column_stack([rng.uniform(*u_range, size=todo), rng.uniform(*v_range, size=todo)])
        z = rng.uniform(*depth, size=todo)
        k, _ = lift_pixels(intr, uv)
        P = k * z[:, None]
        Pb = (P - T) @ R
        ok = Pb[:, 2] > 1e-6
        ok[ok] = _in_image(project_points(intr, Pb[ok]), intr)
        # keep accepted candidates in order; charge one attempt to every pending slot
        good = P[ok][: count - filled]
        points[filled : filled + len(good)] = good
        attempts[filled + len(good) :] += 1
        filled += len(good)
        if filled < count and attempts[filled] >= MAX_ATTEMPTS:
            raise FrustumTooTight(
                f"could not place a point in depth band {depth} visible in both views "
                f"after {MAX_ATTEMPTS} attempts"
            )
    return points


def generate_scene(spec: SceneSpec, R=None, T=None):
    """Sample a scene and return ``(matches, truth)``.

    ``R``/``T`` override the motion ``spec`` would otherwise produce.
    """
    rng = np.random.default_rng(spec.seed)
    if R is None or T is None:
        if spec.random_motion:
            R, T = random_motion(rng, spec)
        else:
            R, T = rotation_from_euler(*spec.R_true), np.asarray(spec.T_true, dtype=float)
    R = np.asarray(R, dtype=float)
    T = np.asarray(T, dtype=float)
    intr = spec.intrinsics

    near = _sample_band(rng, spec.n_near, spec.near_depth, R, T, spec)
    far = _sample_band(rng, spec.n_far, spec.far_depth, R, T, spec)
    P = np.vstack([near, far])
    uv_a = project_points(intr, P) if len(P) else np.empty((0, 2))
    uv_b = project_points(intr, (P - T) @ R) if len(P) else np.empty((0, 2))
    if spec.noise_sigma_px > 0:
        uv_a = uv_a + rng.normal(0.0, spec.noise_sigma_px, size=uv_a.shape)
        uv_b = uv_b + rng.normal(0.0, spec.noise_sigma_px, size=uv_b.shape)

    size = np.array([intr.width, intr.height], dtype=float)
    out_a = rng.uniform(0, 1, size=(spec.n_outliers, 2)) * size
    out_b = rng.uniform(0, 1, size=(spec.n_outliers, 2)) * size
    uv_a = np.vstack([uv_a, out_a])
    uv_b = np.vstack([uv_b, out_b])

    labels = (NEAR,) * spec.n_near + (FAR,) * spec.n_far + (OUTLIER,) * spec.n_outliers
    matches = [
        FeatureCorrespondence(id=i, a=PixelPoint(float(a[0]), float(a[1])), b=PixelPoint(float(b[0]), float(b[1])))
        for i, (a, b) in enumerate(zip(uv_a, uv_b))
    ]
    return matches, SceneTruth(R=R, T=T, labels=labels, points=P)


def translation_error_deg(t_est, T_true) -> float:
    t_est = np.asarray(t_est, dtype=float)
    T_true = np.asarray(T_true, dtype=float)
    cos = np.dot(t_est, T_true) / (np.linalg.norm(t_est) * np.linalg.norm(T_true))
    sin = np.linalg.norm(np.cross(t_est, T_true)) / (np.linalg.norm(t_est) * np.linalg.norm(T_true))
    return math.degrees(math.atan2(sin, cos))


@dataclass(frozen=True)
class TrialResult:
    n_matches: int
    rot_err_deg: tuple | None
    t_dir_err_deg: float | None
    rotation_failed: bool
    translation_failed: bool
    translation_expected: bool


@dataclass(frozen=True)
class SimulationReport:
    n_trials: int
    avg_matches: float
    mean_abs_rot_err_deg: tuple
    mean_t_dir_err_deg: float
    n_rotation_failures: int
    n_translation_failures: int
    mean_signed_rot_err_deg: tuple = (0.0, 0.0, 0.0)
    n_translation_trials: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_abs_rot_err_deg"] = list(self.mean_abs_rot_err_deg)
        d["mean_signed_rot_err_deg"] = list(self.mean_signed_rot_err_deg)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        rows = [
            ("average number of matches", f"{self.avg_matches:.4f}"),
            ("average rotation error around the x-axis", f"{self.mean_abs_rot_err_deg[0]:.4f} deg"),
            ("average rotation error around the y-axis", f"{self.mean_abs_rot_err_deg[1]:.4f} deg"),
            ("average rotation error around the z-axis", f"{self.mean_abs_rot_err_deg[2]:.4f} deg"),
            ("number of failed estimates of rotation", f"{self.n_rotation_failures} from {self.n_trials}"),
            ("number of failed estimates of translation", f"{self.n_translation_failures} from {self.n_trials}"),
            ("average error in the direction of the estimated translation vector",
             f"{self.mean_t_dir_err_deg:.4f} deg"),
        ]
        width = max(len(name) for name, _ in rows)
        vwidth = max(len(value) for _, value in rows)
        rule = "+" + "-" * (width + 2) + "+" + "-" * (vwidth + 2) + "+"
        lines = [rule]
        lines += [f"| {name:<{width}} | {value:>{vwidth}} |" for name, value in rows]
        lines.append(rule)
        return "\n".join(lines) + "\n"


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def run_trial(spec: SceneSpec, cfg: PipelineConfig, trial: int) -> TrialResult:
    seed = trial_seed(spec.seed, trial)
    trial_spec = replace(spec, seed=seed)
    matches, truth = generate_scene(trial_spec)
    trial_cfg = replace(cfg, ransac=replace(cfg.ransac, rng_seed=seed))
    expected = bool(np.linalg.norm(truth.T) > 0)
    try:
        pose = estimate_pose(spec.intrinsics, matches, trial_cfg)
    except NoConsensus:
        return TrialResult(0, None, None, True, expected, expected)

    err = rotation_error_deg(pose.R, truth.R)
    rot_failed = bool(np.max(np.abs(err)) > ROTATION_FAILURE_DEG)
    t_err = None
    if pose.status == FULL and expected:
        t_err = translation_error_deg(pose.t_dir, truth.T)
    trans_failed = expected and (t_err is None or t_err > TRANSLATION_FAILURE_DEG)
    used = len(pose.rotation_inliers) + len(pose.translation_points)
    return TrialResult(used, tuple(float(x) for x in err), t_err, rot_failed, trans_failed, expected)


def summarize(results) -> SimulationReport:
    results = list(results)
    n = len(results)
    rot = np.array([r.rot_err_deg for r in results if not r.rotation_failed]).reshape(-1, 3)
    t_errs = [r.t_dir_err_deg for r in results if r.t_dir_err_deg is not None and not r.translation_failed]
    return SimulationReport(
        n_trials=n,
        avg_matches=float(np.mean([r.n_matches for r in results])) if n else 0.0,
        mean_abs_rot_err_deg=tuple(float(x) for x in np.abs(rot).mean(axis=0)) if len(rot) else (0.0,) * 3,
        mean_t_dir_err_deg=float(np.mean(t_errs)) if t_errs else 0.0,
        n_rotation_failures=sum(r.rotation_failed for r in results),
        n_translation_failures=sum(r.translation_failed for r in results),
        mean_signed_rot_err_deg=tuple(float(x) for x in rot.mean(axis=0)) if len(rot) else (0.0,) * 3,
        n_translation_trials=sum(r.translation_expected for r in results),
    )


def run_monte_carlo(spec: SceneSpec, cfg: PipelineConfig = PipelineConfig(), n_trials: int = 200,
                    workers: int = 1) -> SimulationReport:
    """Repeat generate + estimate ``n_trials`` times with seeds derived from ``(spec.seed, trial)``.

    Failures are counted, not raised. With ``workers > 1`` trials run in a
    process pool; the report does not depend on scheduling.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_trial, [spec] * n_trials, [cfg] * n_trials, range(n_trials)))
    else:
        results = [run_trial(spec, cfg, t) for t in range(n_trials)]
    return summarize(results)
