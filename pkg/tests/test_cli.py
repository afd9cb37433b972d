import csv
import io
import itertools
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from forcecap import bench
from forcecap.cli import main
from forcecap.export import read_off, read_polytope_json
from forcecap.geometry import hull, support, support_directions
from forcecap.kinematics import TaskFrame, describe, jacobian
from forcecap.vertex_search import TorqueBox, force_polytope_vertices, match_vertex_sets

IDENTITY_MODEL = {
    "name": "identity2", "gravity": [0.0, 0.0, -9.81],
    "joints": [
        {"kind": "revolute", "dh": [0.0, -math.pi / 2, 0.0, 0.0], "mass": 0.0, "com": [0.0, 0.0, 0.0],
         "torque_min": -1.0, "torque_max": 1.0, "vel_min": -2.0, "vel_max": 3.0},
        {"kind": "revolute", "dh": [0.0, 0.0, 0.0, 0.0], "mass": 0.0, "com": [0.0, 0.0, 0.0],
         "torque_min": -1.0, "torque_max": 1.0, "vel_min": -1.0, "vel_max": 1.0},
    ],
}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_segment(path, vertices):
    path.write_text(json.dumps({"task_dim": 2, "axes": ["x", "y"], "kind": "force", "vertices": vertices}))
    return str(path)


class TestPolytope:
    def test_planar2r_force(self, capsys):
        code, out, _ = run(capsys, "polytope", "planar2r.json", "--q", "0,1.5708", "--task", "x,y")
        assert code == 0
        doc = json.loads(out)
        assert doc["task_dim"] == 2 and doc["kind"] == "force"
        assert match_vertex_sets(np.array(doc["vertices"]), [[-1, -2], [-1, 0], [1, 0], [1, 2]], 1e-4)
        assert set(doc["stats"]) == {"faces_total", "faces_pruned_bounds", "faces_singular",
                                     "systems_solved", "runtime_ns"}
        assert len(doc["facets"]) == 4

    def test_json_round_trip_bit_exact(self, capsys, tmp_path):
        out_file = tmp_path / "p.json"
        code, _, _ = run(capsys, "polytope", "panda7", "--q", "0.1,-0.5,0.3,-2.0,0.2,1.6,0.7", "-o", str(out_file))
        assert code == 0
        vs, _ = read_polytope_json(out_file)
        model = describe("panda7")
        J = jacobian(model, [0.1, -0.5, 0.3, -2.0, 0.2, 1.6, 0.7], TaskFrame.parse("x,y,z"))
        ref = force_polytope_vertices(J, TorqueBox(*model.torque_limits))
        np.testing.assert_array_equal(vs.vertices, ref.vertices)

    def test_velocity_identity_model(self, capsys, tmp_path):
        model_file = tmp_path / "identity2.json"
        model_file.write_text(json.dumps(IDENTITY_MODEL))
        code, out, _ = run(capsys, "polytope", str(model_file), "--q", "0,0", "--task", "rz,ry",
                           "--kind", "velocity")
        assert code == 0
        corners = list(itertools.product([-2.0, 3.0], [-1.0, 1.0]))
        assert match_vertex_sets(np.array(json.loads(out)["vertices"]), corners, 1e-12)

    def test_singular_exit_2(self, capsys):
        code, _, err = run(capsys, "polytope", "planar2r.json", "--q", "0,0")
        assert code == 2 and "rank-deficient Jacobian" in err

    @pytest.mark.parametrize("argv", [
        ["polytope", "missing_robot.json", "--q", "0,0"],
        ["polytope", "planar2r.json", "--q", "0,1,2"],
        ["polytope", "planar2r.json", "--q", "0,abc"],
        ["polytope", "planar2r.json", "--q", "0,1", "--task", "x,q"],
        ["polytope", "planar2r.json", "--q", "0,1", "--bias-g"],
    ])
    def test_input_errors_exit_1(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 1 and err

    @pytest.mark.parametrize("argv", [["polytope", "planar2r.json"], ["nonsense"]])
    def test_argparse_errors_exit_1(self, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1

    def test_off_output(self, capsys):
        code, out, _ = run(capsys, "polytope", "ur5_6dof", "--q", "0.3,-1.0,1.2,-0.4,1.1,0.2", "--out", "off")
        assert code == 0
        verts, faces = read_off(out)
        assert len(faces) == 2 * len(verts) - 4  # closed triangulated sphere
        assert match_vertex_sets(verts, hull(verts).vertices, 0)

    def test_off_needs_3d(self, capsys):
        code, _, err = run(capsys, "polytope", "planar2r.json", "--q", "0,1.5", "--out", "off")
        assert code == 1 and "3-axis" in err

    def test_csv_output(self, capsys):
        code, out, _ = run(capsys, "polytope", "planar2r.json", "--q", "0,1.5708", "--out", "csv")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["x", "y"] and len(rows) == 5

    def test_residual_translation(self, capsys):
        q = "0.3,0.9,-0.4"
        _, plain, _ = run(capsys, "polytope", "planar3r", "--q", q)
        code, shifted, _ = run(capsys, "polytope", "planar3r", "--q", q, "--kind", "residual",
                               "--bias-n", "2.5,-1.0")
        assert code == 0
        a = np.array(json.loads(plain)["vertices"])
        b = np.array(json.loads(shifted)["vertices"])
        assert match_vertex_sets(b, a - [2.5, -1.0], 1e-9)

    def test_ellipsoid_included(self, capsys):
        code, out, _ = run(capsys, "polytope", "planar2r", "--q", "0,1.5708", "--ellipsoid")
        doc = json.loads(out)
        assert code == 0 and np.array(doc["ellipsoid"]["shape"]).shape == (2, 2)


class TestCombine:
    def test_sum_of_segments_is_square(self, capsys, tmp_path):
        a = write_segment(tmp_path / "a.json", [[-1.0, 0.0], [1.0, 0.0]])
        b = write_segment(tmp_path / "b.json", [[0.0, -1.0], [0.0, 1.0]])
        code, out, _ = run(capsys, "combine", a, b, "--op", "sum")
        assert code == 0
        assert match_vertex_sets(np.array(json.loads(out)["vertices"]),
                                 list(itertools.product([-1.0, 1.0], repeat=2)), 1e-12)

    def test_intersect_identical(self, capsys):
        q = "0.4,1.1,-0.6"
        code, out, _ = run(capsys, "combine", "planar3r", "planar3r", "--q1", q, "--q2", q, "--op", "intersect")
        _, single, _ = run(capsys, "polytope", "planar3r", "--q", q)
        assert code == 0
        assert match_vertex_sets(np.array(json.loads(out)["vertices"]),
                                 np.array(json.loads(single)["vertices"]), 1e-9)

    def test_planar4r_sum_support(self, capsys):
        q1, q2 = "0.2,0.7,-0.5,0.9", "-0.6,1.2,0.4,-0.8"
        code, out, _ = run(capsys, "combine", "planar4r", "planar4r", f"--q1={q1}", f"--q2={q2}")
        _, p1, _ = run(capsys, "polytope", "planar4r", "--q", q1)
        _, p2, _ = run(capsys, "polytope", "planar4r", f"--q={q2}")
        assert code == 0
        S, P, Q = (hull(np.array(json.loads(t)["vertices"])) for t in (out, p1, p2))
        for d in support_directions(2, 360):
            want = support(P, d) + support(Q, d)
            assert abs(support(S, d) - want) <= 1e-9 * abs(want) + 1e-12

    def test_missing_q(self, capsys):
        code, _, err = run(capsys, "combine", "planar3r", "planar3r", "--q1", "0,1,0")
        assert code == 1 and "configuration" in err


class TestLoadshare:
    def test_symmetric(self, capsys):
        code, out, err = run(capsys, "loadshare", "dual_panda_symmetric.json")
        assert code == 0 and "adaptive=0 fixed:0.5=0" in err
        rows = list(csv.DictReader(io.StringIO(out)))
        assert all(float(r["lambda"]) == 0.5 for r in rows)

    def test_asymmetric(self, capsys):
        code, out, err = run(capsys, "loadshare", "dual_panda_asymmetric.json", "--policy", "fixed:0.5")
        assert code == 0 and "adaptive=0 " in err
        half_bad = sum(r["feasible_half"] == "false" for r in csv.DictReader(io.StringIO(out)))
        assert half_bad > 0 and f"fixed:0.5={half_bad} " in err

    def test_heavy_payload(self, capsys):
        code, out, err = run(capsys, "loadshare", "dual_panda_asymmetric.json", "--payload-mass", "100")
        n = len(out.splitlines()) - 1
        assert code == 0 and f"adaptive={n} fixed:0.5={n} " in err

    def test_schema_error(self, capsys, tmp_path):
        bad = tmp_path / "s.json"
        bad.write_text(json.dumps({"robot1": "panda7", "robot2": "panda7", "trajectory": []}))
        code, _, err = run(capsys, "loadshare", str(bad))
        assert code == 1 and "payload_mass" in err


class TestBench:
    def test_csv_and_bound(self, capsys):
        code, out, err = run(capsys, "bench", "panda7", "--trials", "50", "--seed", "3")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 1
        assert int(rows[0]["systems_max"]) <= 35 and float(rows[0]["systems_mean"]) < 35
        assert "near-singular" in err

    def test_ur5_faces_total(self):
        model = describe("ur5_6dof")
        res = bench.run_bench(model, TaskFrame.parse("x,y,z"), trials=50, seed=1)
        assert all(r["faces"] == 20 for r in res.trial_results)
        assert res.records[0].faces_total == 20

    def test_baseline_planar4r(self, capsys):
        code, out, err = run(capsys, "bench", "planar4r", "--trials", "200", "--baseline", "--prune-check")
        assert code == 0 and "baseline equality: pass" in err and "pruning equality: pass" in err
        assert [r["path"] for r in csv.DictReader(io.StringIO(out))] == ["proposed", "full-Z"]

    def test_seed_reproducible(self):
        model, frame = describe("panda7"), TaskFrame.parse("x,y,z")
        a = bench.run_bench(model, frame, trials=30, seed=11)
        b = bench.run_bench(model, frame, trials=30, seed=11)
        c = bench.run_bench(model, frame, trials=30, seed=11, workers=2)
        assert a.records[0].deterministic_fields() == b.records[0].deterministic_fields() \
            == c.records[0].deterministic_fields()

    def test_zero_trials(self, capsys):
        code, _, _ = run(capsys, "bench", "planar2r", "--trials", "0")
        assert code == 1


def test_describe(capsys):
    code, out, _ = run(capsys, "describe", "planar3r")
    assert code == 0 and out.startswith("planar3r: n=3")


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "forcecap.cli", "polytope", "planar2r", "--q", "0,0"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "rank-deficient Jacobian" in proc.stderr
