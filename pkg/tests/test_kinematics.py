import math
import warnings

import numpy as np
import pytest

from forcecap.kinematics import (BiasWarning, JointSpec, ModelError, RobotModel, TaskFrame, describe,
                                 forward_kinematics, gravity_torque, jacobian, link_frames,
                                 model_from_dict, residual_limits)

from conftest import FIXTURES


def planar(lengths, masses=None, coms=None, gravity=(0.0, -9.81, 0.0), limit=1.0):
    masses = masses or [0.0] * len(lengths)
    coms = coms or [(0.0, 0.0, 0.0)] * len(lengths)
    joints = tuple(JointSpec("planar-revolute", (a, 0.0, 0.0, 0.0), m, c, -limit, limit, -1.0, 1.0)
                   for a, m, c in zip(lengths, masses, coms))
    return RobotModel("toy", joints, gravity)


def fd_jacobian(model, q, h=1e-6):
    """Central differences of position and orientation (world-frame angular velocity)."""
    n = model.n
    J = np.zeros((6, n))
    R0 = forward_kinematics(model, q)[:3, :3]
    for i in range(n):
        dq = np.zeros(n)
        dq[i] = h
        Tp = forward_kinematics(model, q + dq)
        Tm = forward_kinematics(model, q - dq)
        J[:3, i] = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
        W = (Tp[:3, :3] - Tm[:3, :3]) / (2 * h) @ R0.T
        J[3:, i] = 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])
    return J


def gravity_by_moments(model, q):
    """Joint torques from moments of downstream link weights about each joint axis."""
    frames = link_frames(model, q)
    g = np.asarray(model.gravity)
    coms = [frames[i + 1][:3, :3] @ np.asarray(j.com) + frames[i + 1][:3, 3] for i, j in enumerate(model.joints)]
    tau = np.zeros(model.n)
    for k in range(model.n):
        z, o = frames[k][:3, 2], frames[k][:3, 3]
        moment = sum(np.cross(coms[i] - o, model.joints[i].mass * g) for i in range(k, model.n))
        tau[k] = -z @ moment
    return tau


class TestJacobian:
    def test_planar_2r_example(self):
        J = jacobian(planar([1.0, 1.0]), [0.0, math.pi / 2], TaskFrame.parse("x,y"))
        np.testing.assert_allclose(J, [[-1.0, -1.0], [1.0, 0.0]], atol=1e-12)

    def test_planar_2r_example_against_finite_differences(self):
        m = planar([1.0, 1.0])
        q = np.array([0.0, math.pi / 2])
        np.testing.assert_allclose(fd_jacobian(m, q)[:2], jacobian(m, q, TaskFrame.parse("x,y")), atol=1e-8)

    def test_planar_1r(self):
        m = planar([1.0])
        J = jacobian(m, [0.0], TaskFrame.parse("x,y"))
        np.testing.assert_allclose(J, [[0.0], [1.0]], atol=1e-12)
        np.testing.assert_allclose(fd_jacobian(m, np.zeros(1))[:2], J, atol=1e-8)

    @pytest.mark.parametrize("name", list(FIXTURES))
    def test_row_subset_consistency(self, models, name):
        model = models[name]
        q = np.random.default_rng(1).uniform(-2, 2, model.n)
        full = jacobian(model, q, TaskFrame.parse("x,y,z,rx,ry,rz"))
        np.testing.assert_array_equal(full[[0, 1]], jacobian(model, q, TaskFrame.parse("x,y")))
        np.testing.assert_array_equal(full[[5, 2]], jacobian(model, q, TaskFrame.parse("rz,z")))

    @pytest.mark.parametrize("name", list(FIXTURES))
    def test_finite_difference_100_configs(self, models, name):
        model = models[name]
        rng = np.random.default_rng(7)
        lo, hi = model.position_limits
        worst = 0.0
        for _ in range(100):
            q = rng.uniform(lo, hi)
            J = jacobian(model, q)
            err = np.linalg.norm(J - fd_jacobian(model, q)) / np.linalg.norm(J)
            worst = max(worst, err)
        assert worst <= 1e-6

    def test_deterministic(self, models):
        q = np.linspace(-1, 1, 7)
        assert np.array_equal(jacobian(models["panda7"], q), jacobian(models["panda7"], q))

    def test_dimension_mismatch(self, models):
        with pytest.raises(ModelError):
            jacobian(models["panda7"], [0.0, 0.0])

    @pytest.mark.parametrize("axes", ["", "x,x", "x,w", "x,y,z,rx,ry,rz,x"])
    def test_bad_frames(self, axes):
        with pytest.raises(ModelError):
            TaskFrame.parse(axes)


class TestGravity:
    def test_massless_is_zero(self):
        np.testing.assert_array_equal(gravity_torque(planar([1.0, 0.5]), [0.3, 0.2]), 0.0)

    def test_pendulum_horizontal(self):
        # COM at the joint-relative position (1, 0, 0): link frame 1 sits at the tip, so COM offset is 0
        m = planar([1.0], masses=[1.0])
        np.testing.assert_allclose(gravity_torque(m, [0.0]), [9.81], atol=1e-12)

    def test_pendulum_vertical(self):
        m = planar([1.0], masses=[1.0])
        np.testing.assert_allclose(gravity_torque(m, [math.pi / 2]), [0.0], atol=1e-12)

    @pytest.mark.parametrize("name", list(FIXTURES))
    def test_matches_moment_balance(self, models, name):
        model = models[name]
        rng = np.random.default_rng(3)
        for _ in range(20):
            q = rng.uniform(-math.pi, math.pi, model.n)
            np.testing.assert_allclose(gravity_torque(model, q), gravity_by_moments(model, q), rtol=0, atol=1e-9)

    @pytest.mark.parametrize("name", ["planar3r", "panda7"])
    def test_matches_potential_energy_gradient(self, models, name):
        model = models[name]
        g = np.asarray(model.gravity)

        def potential(q):
            frames = link_frames(model, q)
            return -sum(j.mass * g @ (frames[i + 1][:3, :3] @ np.asarray(j.com) + frames[i + 1][:3, 3])
                        for i, j in enumerate(model.joints))

        q = np.random.default_rng(5).uniform(-1, 1, model.n)
        h = 1e-6
        grad = np.array([(potential(q + h * e) - potential(q - h * e)) / (2 * h) for e in np.eye(model.n)])
        np.testing.assert_allclose(gravity_torque(model, q), grad, atol=1e-6)


class TestResidualLimits:
    def test_identity(self):
        lo, hi, flagged = residual_limits(([-1.0, -1.0], [1.0, 1.0]), np.zeros(2), np.zeros(2), np.zeros(2))
        np.testing.assert_array_equal(lo, [-1, -1])
        np.testing.assert_array_equal(hi, [1, 1])
        assert flagged == []

    def test_panda_class_shift(self):
        lo, hi, _ = residual_limits((np.full(7, -87.0), np.full(7, 87.0)), np.full(7, 10.0))
        np.testing.assert_array_equal(lo, np.full(7, -97.0))
        np.testing.assert_array_equal(hi, np.full(7, 77.0))

    def test_width_preserved_exactly_on_representable_values(self):
        rng = np.random.default_rng(0)
        lo = -rng.integers(1, 800, 7) / 8.0
        hi = rng.integers(1, 800, 7) / 8.0
        biases = [rng.integers(-400, 400, 7) / 16.0 for _ in range(3)]
        lo2, hi2, _ = residual_limits((lo, hi), *biases, warn=False)
        np.testing.assert_array_equal(hi2 - lo2, hi - lo)

    def test_width_preserved_to_rounding(self):
        rng = np.random.default_rng(1)
        lo = -rng.uniform(1, 100, 7)
        hi = rng.uniform(1, 100, 7)
        lo2, hi2, _ = residual_limits((lo, hi), *rng.normal(size=(3, 7)), warn=False)
        np.testing.assert_allclose(hi2 - lo2, hi - lo, rtol=1e-14)

    def test_warning_flags_one_sided_capacity(self):
        with pytest.warns(BiasWarning):
            _, _, flagged = residual_limits(([-2.0, -2.0], [2.0, 2.0]), [9.81, 0.0])
        assert flagged == [0]

    def test_length_mismatch(self):
        with pytest.raises(ModelError):
            residual_limits(([-1.0, -1.0], [1.0, 1.0]), [0.0])


class TestDescribe:
    def test_panda(self):
        assert describe("panda7.json").n == 7

    def test_planar3r(self):
        m = describe("planar3r")
        assert m.n == 3 and m.is_planar

    @pytest.mark.parametrize("name", list(FIXTURES))
    def test_all_fixtures_load(self, name):
        model = describe(name)
        assert model.n == FIXTURES[name][1][0]

    def _doc(self):
        return {"name": "bad", "gravity": [0, 0, -9.81], "joints": [
            {"kind": "revolute", "dh": [0, 0, 0, 0], "mass": 1, "com": [0, 0, 0],
             "torque_min": -1, "torque_max": 1, "vel_min": -1, "vel_max": 1}]}

    def test_inverted_torque_limits(self, tmp_path):
        doc = self._doc()
        doc["joints"][0]["torque_min"] = 2
        path = tmp_path / "bad.json"
        import json
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelError, match="torque_min"):
            describe(path)

    def test_missing_field_named(self):
        doc = self._doc()
        del doc["joints"][0]["vel_max"]
        with pytest.raises(ModelError, match="vel_max"):
            model_from_dict(doc)

    def test_non_finite(self):
        doc = self._doc()
        doc["joints"][0]["torque_max"] = float("inf")
        with pytest.raises(ModelError, match="finite"):
            model_from_dict(doc)

    def test_asymmetric_limits_allowed(self):
        doc = self._doc()
        doc["joints"][0]["torque_min"] = 0.5
        doc["joints"][0]["torque_max"] = 3.0
        assert model_from_dict(doc).torque_limits[0][0] == 0.5

    def test_unknown_kind(self):
        doc = self._doc()
        doc["joints"][0]["kind"] = "prismatic"
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_missing_file(self):
        with pytest.raises(ModelError):
            describe("no_such_robot.json")
