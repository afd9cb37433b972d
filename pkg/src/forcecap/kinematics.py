"""Serial manipulator description, Jacobians, gravity torques and biased limits.

Robots are standard-DH chains of revolute joints. Planar robots are DH chains
with ``alpha = d = 0`` analysed in the ``x, y`` task frame.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

AXES = ("x", "y", "z", "rx", "ry", "rz")
JOINT_KINDS = ("revolute", "planar-revolute")


class ModelError(ValueError):
    """Invalid robot description or joint configuration."""


class BiasWarning(UserWarning):
    """A torque bias leaves a joint unable to produce zero torque."""


@dataclass(frozen=True)
class JointSpec:
    kind: str
    dh: tuple[float, float, float, float]  # a, alpha, d, theta_offset
    mass: float
    com: tuple[float, float, float]
    torque_min: float
    torque_max: float
    vel_min: float
    vel_max: float
    q_min: float = -math.pi
    q_max: float = math.pi

    def __post_init__(self) -> None:
        if self.kind not in JOINT_KINDS:
            raise ModelError(f"unknown joint kind {self.kind!r}")
        values = (*self.dh, self.mass, *self.com, self.torque_min, self.torque_max,
                  self.vel_min, self.vel_max, self.q_min, self.q_max)
        if not all(math.isfinite(v) for v in values):
            raise ModelError("joint parameters and limits must be finite")
        if self.mass < 0:
            raise ModelError("mass must be non-negative")
        if not self.torque_min < self.torque_max:
            raise ModelError("torque_min must be below torque_max")
        if not self.vel_min < self.vel_max:
            raise ModelError("vel_min must be below vel_max")
        if not self.q_min < self.q_max:
            raise ModelError("q_min must be below q_max")


@dataclass(frozen=True)
class RobotModel:
    name: str
    joints: tuple[JointSpec, ...]
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self) -> None:
        if len(self.joints) < 1:
            raise ModelError("a robot needs at least one joint")
        if len(self.gravity) != 3 or not all(math.isfinite(g) for g in self.gravity):
            raise ModelError("gravity must be a finite 3-vector")

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def torque_limits(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([j.torque_min for j in self.joints]),
                np.array([j.torque_max for j in self.joints]))

    @property
    def velocity_limits(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([j.vel_min for j in self.joints]),
                np.array([j.vel_max for j in self.joints]))

    @property
    def position_limits(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([j.q_min for j in self.joints]),
                np.array([j.q_max for j in self.joints]))

    @property
    def is_planar(self) -> bool:
        return all(j.kind == "planar-revolute" for j in self.joints)


@dataclass(frozen=True)
class TaskFrame:
    axes: tuple[str, ...]
    rows: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not 1 <= len(axes) <= 6:
            raise ModelError("task frame needs between 1 and 6 axes")
        bad = [a for a in axes if a not in AXES]
        if bad:
            raise ModelError(f"unknown task axes {bad}; expected a subset of {AXES}")
        if len(set(axes)) != len(axes):
            raise ModelError("task frame axes must not repeat")
        object.__setattr__(self, "rows", tuple(AXES.index(a) for a in axes))

    @classmethod
    def parse(cls, text: str | Sequence[str]) -> "TaskFrame":
        if isinstance(text, str):
            text = [a.strip() for a in text.split(",") if a.strip()]
        return cls(tuple(text))

    @property
    def m(self) -> int:
        return len(self.axes)


def _as_config(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != model.n:
        raise ModelError(f"configuration has {q.shape[0]} values, {model.name} has {model.n} joints")
    if not np.all(np.isfinite(q)):
        raise ModelError("configuration must be finite")
    return q


def _dh_matrix(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def link_frames(model: RobotModel, q) -> list[np.ndarray]:
    """Homogeneous transforms of frames 0..n in the world frame.

    Frame ``i`` (``i >= 1``) is attached to link ``i``; joint ``i`` rotates
    about the z-axis of frame ``i - 1``.
    """
    q = _as_config(model, q)
    frames = [np.eye(4)]
    for joint, qi in zip(model.joints, q):
        a, alpha, d, offset = joint.dh
        frames.append(frames[-1] @ _dh_matrix(a, alpha, d, qi + offset))
    return frames


def forward_kinematics(model: RobotModel, q) -> np.ndarray:
    """End-effector pose as a 4x4 homogeneous transform."""
    return link_frames(model, q)[-1]


def _point_jacobian(frames: list[np.ndarray], point: np.ndarray, upto: int) -> np.ndarray:
    """6 x n geometric Jacobian of a point rigidly attached to link ``upto``."""
    n = len(frames) - 1
    jac = np.zeros((6, n))
    for j in range(upto):
        z = frames[j][:3, 2]
        o = frames[j][:3, 3]
        jac[:3, j] = np.cross(z, point - o)
        jac[3:, j] = z
    return jac


def jacobian(model: RobotModel, q, frame: TaskFrame | None = None) -> np.ndarray:
    """Geometric end-effector Jacobian in the world frame, rows ordered by ``frame``."""
    frames = link_frames(model, q)
    full = _point_jacobian(frames, frames[-1][:3, 3], model.n)
    if frame is None:
        return full
    return full[list(frame.rows)]


def gravity_torque(model: RobotModel, q) -> np.ndarray:
    """Joint torques the actuators must produce to hold ``q`` statically."""
    frames = link_frames(model, q)
    g = np.asarray(model.gravity, dtype=float)
    tau = np.zeros(model.n)
    for i, joint in enumerate(model.joints, start=1):
        if joint.mass == 0.0:
            continue
        com = frames[i][:3, :3] @ np.asarray(joint.com) + frames[i][:3, 3]
        jc = _point_jacobian(frames, com, i)[:3]
        tau -= jc.T @ (joint.mass * g)
    return tau


def residual_limits(limits, tau_g=None, tau_d=None, tau_n=None, *, warn: bool = True):
    """Shift joint torque limits by gravity, dynamic and nominal torques.

    Returns ``(lo', hi', flagged)`` where ``flagged`` lists the joints whose
    shifted interval no longer contains zero.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in limits)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ModelError("limit vectors must be 1-D and of equal length")
    bias = np.zeros_like(lo)
    for name, vec in (("tau_g", tau_g), ("tau_d", tau_d), ("tau_n", tau_n)):
        if vec is None:
            continue
        vec = np.asarray(vec, dtype=float)
        if vec.shape != lo.shape:
            raise ModelError(f"{name} has length {vec.size}, expected {lo.size}")
        bias = bias + vec
    lo_r, hi_r = lo - bias, hi - bias
    flagged = [int(i) for i in np.flatnonzero((lo_r > 0) | (hi_r < 0))]
    if flagged and warn:
        warnings.warn(f"bias exceeds one-sided torque capacity on joints {flagged}",
                      BiasWarning, stacklevel=2)
    return lo_r, hi_r, flagged


# --- robot description files ---------------------------------------------

_JOINT_KEYS = ("kind", "dh", "mass", "com", "torque_min", "torque_max", "vel_min", "vel_max")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _vector(value, size: int, where: str) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != size:
        raise ModelError(f"{where}: expected a list of {size} numbers")
    return tuple(_number(v, f"{where}[{k}]") for k, v in enumerate(value))


def model_from_dict(doc: dict) -> RobotModel:
    if not isinstance(doc, dict):
        raise ModelError("robot description must be a JSON object")
    for key in ("name", "gravity", "joints"):
        if key not in doc:
            raise ModelError(f"missing field {key!r}")
    if not isinstance(doc["name"], str):
        raise ModelError("name: expected a string")
    if not isinstance(doc["joints"], list) or not doc["joints"]:
        raise ModelError("joints: expected a non-empty list")
    joints = []
    for i, jd in enumerate(doc["joints"]):
        where = f"joints[{i}]"
        if not isinstance(jd, dict):
            raise ModelError(f"{where}: expected an object")
        for key in _JOINT_KEYS:
            if key not in jd:
                raise ModelError(f"{where}: missing field {key!r}")
        extra = {}
        for key in ("q_min", "q_max"):
            if key in jd:
                extra[key] = _number(jd[key], f"{where}.{key}")
        try:
            joints.append(JointSpec(
                kind=jd["kind"],
                dh=_vector(jd["dh"], 4, f"{where}.dh"),
                mass=_number(jd["mass"], f"{where}.mass"),
                com=_vector(jd["com"], 3, f"{where}.com"),
                torque_min=_number(jd["torque_min"], f"{where}.torque_min"),
                torque_max=_number(jd["torque_max"], f"{where}.torque_max"),
                vel_min=_number(jd["vel_min"], f"{where}.vel_min"),
                vel_max=_number(jd["vel_max"], f"{where}.vel_max"),
                **extra,
            ))
        except ModelError as exc:
            raise ModelError(f"{where}: {exc}") from None
    return RobotModel(name=doc["name"], joints=tuple(joints),
                      gravity=_vector(doc["gravity"], 3, "gravity"))


def bundled_models() -> list[str]:
    root = resources.files("forcecap") / "robots"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_model_path(name: str | Path) -> Path:
    """Existing file path, else a bundled fixture name (with or without ``.json``)."""
    path = Path(name)
    if path.exists():
        return path
    stem = path.name if path.name.endswith(".json") else f"{path.name}.json"
    bundled = resources.files("forcecap") / "robots" / stem
    if bundled.is_file():
        return Path(str(bundled))
    raise ModelError(f"robot description {str(name)!r} not found")


def describe(model_file: str | Path) -> RobotModel:
    """Load and validate a robot description JSON file."""
    path = resolve_model_path(model_file)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)
