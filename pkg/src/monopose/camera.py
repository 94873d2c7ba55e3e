"""Pinhole camera model: pixel <-> line-of-sight conversion.

All lengths in ``CameraIntrinsics`` share one unit (millimetres in the
calibration file). Only the ratios ``s/f`` enter the lifting, so any
consistent unit works.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateAngle, NonPositiveDepth, ParseError


class PixelPoint(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class Ray:
    """Un-normalized ray ``k`` (z == 1) and its unit direction ``n``."""

    k: np.ndarray
    n: np.ndarray


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    s_x: float
    s_y: float
    c_x: float
    c_y: float
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        for name in ("f", "s_x", "s_y"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.c_x) and math.isfinite(self.c_y)):
            raise ValueError("principal point must be finite")

    @classmethod
    def default(cls) -> "CameraIntrinsics":
        """8 mm lens, 11 um square pixels, 640x480 sensor, centred principal point."""
        return cls(f=8.0, s_x=0.011, s_y=0.011, c_x=320.0, c_y=240.0, width=640, height=480)

    @property
    def pixel_angle(self) -> float:
        """Normalized-plane length of one pixel (geometric mean of both axes)."""
        return math.sqrt(self.s_x * self.s_y) / self.f

    def px_to_normalized(self, length_px: float) -> float:
        return length_px * self.pixel_angle

    def normalized_to_px(self, length: float) -> float:
        return length / self.pixel_angle


def lift(intr: CameraIntrinsics, p) -> Ray:
    """Turn a pixel into a line of sight."""
    u, v = p
    k = np.array([(u - intr.c_x) * intr.s_x / intr.f, (v - intr.c_y) * intr.s_y / intr.f, 1.0])
    return Ray(k=k, n=k / np.linalg.norm(k))


def lift_pixels(intr: CameraIntrinsics, uv) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`lift` for an (N, 2) pixel array. Returns ``(k, n)``."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    k = np.empty((uv.shape[0], 3))
    k[:, 0] = (uv[:, 0] - intr.c_x) * intr.s_x / intr.f
    k[:, 1] = (uv[:, 1] - intr.c_y) * intr.s_y / intr.f
    k[:, 2] = 1.0
    n = k / np.linalg.norm(k, axis=1, keepdims=True)
    return k, n


def project(intr: CameraIntrinsics, P) -> PixelPoint:
    P = np.asarray(P, dtype=float)
    if not P[2] > 0:
        raise NonPositiveDepth(f"point has depth z={P[2]!r}; it must lie in front of the camera")
    u = P[0] / P[2] * intr.f / intr.s_x + intr.c_x
    v = P[1] / P[2] * intr.f / intr.s_y + intr.c_y
    return PixelPoint(float(u), float(v))


def project_points(intr: CameraIntrinsics, P) -> np.ndarray:
    """Vectorized :func:`project`; every point must have z > 0."""
    P = np.asarray(P, dtype=float).reshape(-1, 3)
    if np.any(~(P[:, 2] > 0)):
        raise NonPositiveDepth("all points must have positive depth")
    uv = np.empty((P.shape[0], 2))
    uv[:, 0] = P[:, 0] / P[:, 2] * intr.f / intr.s_x + intr.c_x
    uv[:, 1] = P[:, 1] / P[:, 2] * intr.f / intr.s_y + intr.c_y
    return uv


def z_infinity(intr: CameraIntrinsics, t_m: float) -> float:
    """Depth beyond which a motion ``t_m`` shifts a point by less than one pixel.

    Uses the smaller pixel pitch for non-square pixels.
    """
    if t_m < 0:
        raise ValueError("t_m must be non-negative")
    return intr.f / min(intr.s_x, intr.s_y) * t_m


def observable_motion(delta_t: float, gamma: float, phi: float) -> float:
    """Part of a motion ``delta_t`` visible in the image; angles in radians."""
    cos_phi = math.cos(phi)
    if abs(cos_phi) < 1e-9:
        raise DegenerateAngle(f"cos(phi) vanishes for phi={phi!r}")
    return delta_t * math.cos(gamma) / cos_phi


_CALIB_KEYS = {"f_mm": "f", "sx_mm": "s_x", "sy_mm": "s_y", "cx_px": "c_x", "cy_px": "c_y"}
_CALIB_OPTIONAL = {"width_px": "width", "height_px": "height"}


def parse_calibration(text: str) -> CameraIntrinsics:
    """Parse the key-value calibration format.

    One ``key = value`` (or ``key: value`` / ``key value``) per line, ``#``
    starts a comment. Required keys: f_mm, sx_mm, sy_mm, cx_px, cy_px.
    Optional: width_px, height_px.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, value = line.partition(sep)
                break
        else:
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
            key, value = parts
        key, value = key.strip(), value.strip()
        if key not in _CALIB_KEYS and key not in _CALIB_OPTIONAL:
            raise ParseError(f"unknown calibration key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate calibration key {key!r}", lineno)
        try:
            values[key] = float(value)
        except ValueError:
            raise ParseError(f"value for {key!r} is not a number: {value!r}", lineno) from None

    missing = [k for k in _CALIB_KEYS if k not in values]
    if missing:
        raise ParseError(f"missing calibration keys: {', '.join(missing)}")
    kwargs = {attr: values[key] for key, attr in _CALIB_KEYS.items()}
    for key, attr in _CALIB_OPTIONAL.items():
        if key in values:
            kwargs[attr] = int(values[key])
    try:
        return CameraIntrinsics(**kwargs)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def load_calibration(path) -> CameraIntrinsics:
    return parse_calibration(Path(path).read_text(encoding="utf-8"))


def format_calibration(intr: CameraIntrinsics) -> str:
    lines = [
        f"f_mm = {intr.f!r}",
        f"sx_mm = {intr.s_x!r}",
        f"sy_mm = {intr.s_y!r}",
        f"cx_px = {intr.c_x!r}",
        f"cy_px = {intr.c_y!r}",
    ]
    if intr.width is not None:
        lines.append(f"width_px = {intr.width}")
    if intr.height is not None:
        lines.append(f"height_px = {intr.height}")
    return "\n".join(lines) + "\n"
