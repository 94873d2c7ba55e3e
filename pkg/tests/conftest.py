import numpy as np
import pytest

from monopose import CameraIntrinsics, SceneSpec, lift_pixels

# Depth band far enough that translation leaves no measurable trace on the bearings.
AT_INFINITY = (1e9, 2e9)


def bearings(intr, matches):
    """Unit bearings for both frames of a correspondence list."""
    uv_a = np.array([m.a for m in matches], dtype=float)
    uv_b = np.array([m.b for m in matches], dtype=float)
    return lift_pixels(intr, uv_a)[1], lift_pixels(intr, uv_b)[1]


def exact_spec(seed, **overrides):
    """Noiseless, outlier-free scene with random motion and far points at infinity."""
    params = dict(random_motion=True, far_depth=AT_INFINITY, t_norm_range=(0.2, 0.6), seed=seed)
    params.update(overrides)
    return SceneSpec(**params)


def random_rotation(rng):
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


@pytest.fixture
def intr():
    return CameraIntrinsics.default()


# acceptance results, printed once at the end of the session
ACCEPTANCE = {}


def record_criterion(number, title, ok, detail):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    print(f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")
