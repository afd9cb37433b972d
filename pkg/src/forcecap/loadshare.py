"""Dual-arm payload sharing driven by vertical force capacity.

Each robot's upward capacity against gravity is the m=1 force polytope along
the vertical, computed on gravity-shifted torque limits. The payload weight is
split proportionally to those capacities and audited joint by joint.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .kinematics import (ModelError, RobotModel, TaskFrame, _as_config, describe, gravity_torque,
                         jacobian, residual_limits)
from .vertex_search import RankDeficient, TorqueBox, force_polytope_vertices

STANDARD_GRAVITY = 9.81
MARGIN_TOL = 1e-6
TRACE_COLUMNS = ("t", "f1_max", "f2_max", "F_max", "lambda", "f1", "f2",
                 "feasible_adaptive", "feasible_half")

_LINEAR = TaskFrame(("x", "y", "z"))


class CapacityExhausted(RuntimeError):
    """Neither robot can carry any load."""


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    q1: np.ndarray
    q2: np.ndarray


@dataclass(frozen=True)
class DualArmScenario:
    robot1: RobotModel
    robot2: RobotModel
    trajectory: tuple[TrajectorySample, ...]
    payload_mass: float
    gravity_dir: np.ndarray

    def __post_init__(self) -> None:
        if not self.trajectory:
            raise ModelError("trajectory must not be empty")
        ts = [s.t for s in self.trajectory]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ModelError("trajectory times must be strictly increasing")
        if not self.payload_mass > 0:
            raise ModelError("payload_mass must be positive")
        g = np.asarray(self.gravity_dir, dtype=float)
        if g.shape != (3,) or not np.isclose(np.linalg.norm(g), 1.0):
            raise ModelError("gravity_dir must be a unit 3-vector")
        for s in self.trajectory:
            _as_config(self.robot1, s.q1)
            _as_config(self.robot2, s.q2)

    @property
    def weight(self) -> float:
        return self.payload_mass * STANDARD_GRAVITY


@dataclass(frozen=True)
class LoadShareTrace:
    t: np.ndarray
    f1_max: np.ndarray
    f2_max: np.ndarray
    F_max: np.ndarray
    lam: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    feasible_adaptive: np.ndarray
    feasible_half: np.ndarray
    margins1: np.ndarray  # per-step, per-joint torque margin of robot 1 under the selected policy
    margins2: np.ndarray
    weight: float
    policy: str

    def __len__(self) -> int:
        return self.t.size

    def infeasible_steps(self) -> dict[str, int]:
        return {"adaptive": int(np.count_nonzero(~self.feasible_adaptive)),
                "half": int(np.count_nonzero(~self.feasible_half))}

    def rows(self):
        for i in range(len(self)):
            yield (self.t[i], self.f1_max[i], self.f2_max[i], self.F_max[i], self.lam[i],
                   self.f1[i], self.f2[i], bool(self.feasible_adaptive[i]), bool(self.feasible_half[i]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows():
            writer.writerow([repr(float(v)) for v in row[:7]] + [str(row[7]).lower(), str(row[8]).lower()])
        return buf.getvalue()


def max_directional_force(model: RobotModel, q, direction, include_gravity: bool = True
                          ) -> tuple[float, float]:
    """Extreme scalar forces ``s`` such that applying ``s * direction`` is torque-feasible."""
    d = np.asarray(direction, dtype=float).reshape(3)
    d = d / np.linalg.norm(d)
    row = d @ jacobian(model, q, _LINEAR)
    lo, hi = model.torque_limits
    if include_gravity:
        lo, hi, _ = residual_limits((lo, hi), gravity_torque(model, q), warn=False)
    vs = force_polytope_vertices(row[None, :], TorqueBox(lo, hi))
    if len(vs) == 0:
        return float("nan"), float("nan")
    return float(vs.vertices.min()), float(vs.vertices.max())


def lambda_policy(f1_max: float, f2_max: float) -> float:
    if f1_max < 0 or f2_max < 0:
        raise ValueError("capacities must be non-negative")
    total = f1_max + f2_max
    if total <= 0:
        raise CapacityExhausted("both robots have zero capacity")
    return min(1.0, max(0.0, f1_max / total))


def _torque_margins(model: RobotModel, q, force: float, up: np.ndarray) -> np.ndarray:
    """min(hi - tau, tau - lo) per joint while holding the robot and pushing ``force`` upward."""
    lo, hi = model.torque_limits
    tau = gravity_torque(model, q) + jacobian(model, q, _LINEAR).T @ (force * up)
    return np.minimum(hi - tau, tau - lo)


def _parse_policy(policy: str | float) -> tuple[str, float | None]:
    if isinstance(policy, (int, float)):
        return "fixed", float(policy)
    if policy == "adaptive":
        return "adaptive", None
    if policy.startswith("fixed"):
        _, _, value = policy.partition(":")
        lam = float(value) if value else 0.5
        if not 0.0 <= lam <= 1.0:
            raise ValueError("fixed lambda must lie in [0, 1]")
        return "fixed", lam
    raise ValueError(f"unknown policy {policy!r}")


def _capacity(model: RobotModel, q, up: np.ndarray) -> float:
    try:
        return max(0.0, max_directional_force(model, q, up, include_gravity=True)[1])
    except RankDeficient:
        return 0.0


def _step(scn: DualArmScenario, sample: TrajectorySample, kind: str, fixed_lam: float | None):
    up = -scn.gravity_dir
    G = scn.weight
    c1 = _capacity(scn.robot1, sample.q1, up)
    c2 = _capacity(scn.robot2, sample.q2, up)
    try:
        lam_adaptive = lambda_policy(c1, c2)
    except CapacityExhausted:
        lam_adaptive = 0.5

    def audit(lam):
        f1, f2 = lam * G, G - lam * G
        m1 = _torque_margins(scn.robot1, sample.q1, f1, up)
        m2 = _torque_margins(scn.robot2, sample.q2, f2, up)
        ok = bool(m1.min() >= -MARGIN_TOL and m2.min() >= -MARGIN_TOL)
        return f1, f2, m1, m2, ok

    adaptive = audit(lam_adaptive)
    half = audit(0.5)
    if kind == "adaptive":
        lam, chosen = lam_adaptive, adaptive
    elif fixed_lam == 0.5:
        lam, chosen = 0.5, half
    else:
        lam, chosen = fixed_lam, audit(fixed_lam)
    f1, f2, m1, m2, _ = chosen
    return (sample.t, c1, c2, c1 + c2, lam, f1, f2, adaptive[4], half[4], m1, m2)


def simulate(scenario: DualArmScenario, policy: str | float = "adaptive",
             workers: int = 1) -> LoadShareTrace:
    """Per-sample capacities, load split and torque-level feasibility for both policies.

    ``feasible_adaptive`` and ``feasible_half`` are always reported; ``policy``
    selects which split fills the ``lambda``, ``f1``, ``f2`` and margin columns.
    """
    kind, lam = _parse_policy(policy)
    samples = scenario.trajectory
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            steps = list(pool.map(lambda s: _step(scenario, s, kind, lam), samples))
    else:
        steps = [_step(scenario, s, kind, lam) for s in samples]
    cols = list(zip(*steps))
    arr = [np.array(c, dtype=float) for c in cols[:7]]
    name = "adaptive" if kind == "adaptive" else f"fixed:{lam:g}"
    return LoadShareTrace(*arr, feasible_adaptive=np.array(cols[7], dtype=bool),
                          feasible_half=np.array(cols[8], dtype=bool),
                          margins1=np.array(cols[9]), margins2=np.array(cols[10]),
                          weight=scenario.weight, policy=name)


def load_scenario(path: str | Path, payload_mass: float | None = None) -> DualArmScenario:
    """Read a scenario JSON; robot paths resolve relative to the scenario file, then to bundled fixtures."""
    path = Path(path)
    if not path.exists():
        from importlib import resources
        bundled = resources.files("forcecap") / "scenarios" / path.name
        if not bundled.is_file():
            raise ModelError(f"scenario {str(path)!r} not found")
        path = Path(str(bundled))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    for key in ("robot1", "robot2", "payload_mass", "trajectory"):
        if key not in doc:
            raise ModelError(f"scenario: missing field {key!r}")

    def robot(ref):
        if not isinstance(ref, str):
            raise ModelError("scenario: robot entries must be file paths")
        local = path.parent / ref
        return describe(local if local.exists() else ref)

    r1, r2 = robot(doc["robot1"]), robot(doc["robot2"])
    if not isinstance(doc["trajectory"], list):
        raise ModelError("scenario: trajectory must be a list")
    samples = []
    for i, s in enumerate(doc["trajectory"]):
        try:
            samples.append(TrajectorySample(float(s["t"]), np.asarray(s["q1"], dtype=float),
                                            np.asarray(s["q2"], dtype=float)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"scenario: trajectory[{i}] malformed ({exc})") from None
    g = np.asarray(r1.gravity, dtype=float)
    mass = float(doc["payload_mass"]) if payload_mass is None else float(payload_mass)
    return DualArmScenario(r1, r2, tuple(samples), mass, g / np.linalg.norm(g))


def scenario_to_dict(robot1: str, robot2: str, payload_mass: float,
                     samples: Sequence[TrajectorySample]) -> dict:
    return {"robot1": robot1, "robot2": robot2, "payload_mass": payload_mass,
            "trajectory": [{"t": s.t, "q1": [float(v) for v in s.q1], "q2": [float(v) for v in s.q2]}
                           for s in samples]}
