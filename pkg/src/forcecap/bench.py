"""Seeded benchmark of the reduced vertex search against the full-system baseline."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .kinematics import RobotModel, TaskFrame, jacobian
from .vertex_search import (SearchOptions, TorqueBox, force_polytope_vertices, full_system_solve,
                            match_vertex_sets)

NEAR_SINGULAR_RATIO = 1e-4
WARMUP = 5
MAX_REJECTS_PER_TRIAL = 1000


@dataclass(frozen=True)
class BenchRecord:
    robot: str
    path: str
    n: int
    m: int
    trials: int
    seed: int
    faces_total: int
    systems_mean: float
    systems_sd: float
    systems_max: int
    pruned_mean: float
    runtime_us_mean: float
    runtime_us_sd: float
    runtime_us_max: float
    rejected: int
    matrix_size: str

    def summary(self) -> str:
        return (f"{self.robot:<12} {self.path:<9} ({self.n},{self.m})  "
                f"systems {self.systems_mean:.1f}±{self.systems_sd:.1f} ({self.systems_max}) of {self.faces_total}  "
                f"{self.matrix_size:>5}  time[us] {self.runtime_us_mean:.0f}±{self.runtime_us_sd:.0f} "
                f"({self.runtime_us_max:.0f})  trials {self.trials}  rejected {self.rejected}")

    def deterministic_fields(self) -> tuple:
        d = asdict(self)
        return tuple(v for k, v in d.items() if not k.startswith("runtime"))


def sample_configuration(model: RobotModel, frame: TaskFrame, rng: np.random.Generator):
    """Uniform sample within joint ranges, resampled while near-singular.

    Returns ``(q, J, rejected)``.
    """
    lo, hi = model.position_limits
    rejected = 0
    while True:
        q = rng.uniform(lo, hi)
        J = jacobian(model, q, frame)
        s = np.linalg.svd(J, compute_uv=False)
        if s[-1] >= NEAR_SINGULAR_RATIO * s[0]:
            return q, J, rejected
        rejected += 1
        if rejected > MAX_REJECTS_PER_TRIAL:
            raise RuntimeError(f"{model.name}: no non-singular configuration found in the {frame.axes} frame")


def trial_seeds(seed: int, trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


def _run_trial(args):
    model, frame, seq, baseline, prune_check = args
    rng = np.random.default_rng(seq)
    q, J, rejected = sample_configuration(model, frame, rng)
    lo, hi = model.torque_limits
    box = TorqueBox(lo, hi)
    t0 = time.perf_counter_ns()
    vs = force_polytope_vertices(J, box)
    t_prop = time.perf_counter_ns() - t0
    out = {"rejected": rejected, "systems": vs.stats.systems_solved, "pruned": vs.stats.faces_pruned_bounds,
           "faces": vs.stats.faces_total, "t_prop": t_prop, "vertices": vs.vertices}
    if baseline:
        t0 = time.perf_counter_ns()
        ref = full_system_solve(J, box)
        out["t_base"] = time.perf_counter_ns() - t0
        out["base_systems"] = ref.stats.systems_solved
        out["base_equal"] = match_vertex_sets(vs, ref, 1e-9)
    if prune_check:
        unpruned = force_polytope_vertices(J, box, SearchOptions(prune=False))
        out["prune_equal"] = bool(np.array_equal(unpruned.vertices, vs.vertices))
        out["unpruned_systems"] = unpruned.stats.systems_solved
    return out


def _record(model, frame, seed, results, key_sys, key_t, path, size) -> BenchRecord:
    sys_counts = np.array([r[key_sys] for r in results], dtype=float)
    times = np.array([r[key_t] for r in results], dtype=float) / 1e3
    return BenchRecord(
        robot=model.name, path=path, n=model.n, m=frame.m, trials=len(results), seed=seed,
        faces_total=math.comb(model.n, frame.m),
        systems_mean=float(sys_counts.mean()), systems_sd=float(sys_counts.std()),
        systems_max=int(sys_counts.max()),
        pruned_mean=float(np.mean([r["pruned"] for r in results])) if path == "proposed" else 0.0,
        runtime_us_mean=float(times.mean()), runtime_us_sd=float(times.std()), runtime_us_max=float(times.max()),
        rejected=int(sum(r["rejected"] for r in results)), matrix_size=size,
    )


@dataclass(frozen=True)
class BenchResult:
    records: tuple[BenchRecord, ...]
    baseline_equal: bool | None
    prune_equal: bool | None
    trial_results: tuple[dict, ...]


def run_bench(model: RobotModel, frame: TaskFrame, trials: int = 1000, seed: int = 0,
              baseline: bool = False, prune_check: bool = False, workers: int = 1) -> BenchResult:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n, m = model.n, frame.m
    # warm-up, excluded from statistics
    warm = np.random.default_rng(np.random.SeedSequence(seed).spawn(trials + 1)[-1])
    lo, hi = model.torque_limits
    for _ in range(WARMUP):
        _, J, _ = sample_configuration(model, frame, warm)
        force_polytope_vertices(J, TorqueBox(lo, hi))
    jobs = [(model, frame, s, baseline, prune_check) for s in trial_seeds(seed, trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_run_trial(j) for j in jobs]
    records = [_record(model, frame, seed, results, "systems", "t_prop", "proposed", f"{n - m}x{n - m}")]
    base_ok = None
    if baseline:
        records.append(_record(model, frame, seed, results, "base_systems", "t_base", "full-Z", f"{n}x{n}"))
        base_ok = all(r["base_equal"] for r in results)
    prune_ok = all(r["prune_equal"] for r in results) if prune_check else None
    return BenchResult(tuple(records), base_ok, prune_ok, tuple(results))


BENCH_COLUMNS = ("robot", "path", "n", "m", "trials", "seed", "faces_total", "systems_mean", "systems_sd",
                 "systems_max", "pruned_mean", "runtime_us_mean", "runtime_us_sd", "runtime_us_max",
                 "rejected", "matrix_size")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for r in records:
        d = asdict(r)
        writer.writerow([d[c] for c in BENCH_COLUMNS])
    return buf.getvalue()
