from __future__ import annotations

import numpy as np
import pytest

from forcecap.kinematics import TaskFrame, describe, jacobian

FIXTURES = {
    # name: (task axes, (n, m))
    "planar2r": ("x,y", (2, 2)),
    "planar3r": ("x,y", (3, 2)),
    "planar4r": ("x,y", (4, 2)),
    "ur5_6dof": ("x,y,z", (6, 3)),
    "panda7": ("x,y,z", (7, 3)),
}


def nonsingular_configs(model, frame, count, seed, ratio=1e-4):
    """Seeded uniform configurations whose Jacobian condition stays below 1/ratio."""
    rng = np.random.default_rng(seed)
    lo, hi = model.position_limits
    out = []
    while len(out) < count:
        q = rng.uniform(lo, hi)
        J = jacobian(model, q, frame)
        s = np.linalg.svd(J, compute_uv=False)
        if s[-1] >= ratio * s[0]:
            out.append((q, J))
    return out


@pytest.fixture(scope="session")
def models():
    return {name: describe(name) for name in FIXTURES}


@pytest.fixture(scope="session")
def frames():
    return {name: TaskFrame.parse(axes) for name, (axes, _) in FIXTURES.items()}
