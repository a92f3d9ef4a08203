"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (collected and
repeated in the pytest terminal summary). Criteria 1-4 share one desk-scale
suite run: 3x3 rooms, 1500 episodes, advisor accuracy 0.93, 10 passes,
three seeds per condition.

Run on its own with ``python3 -m pytest tests/test_acceptance.py -v``.
"""

import dataclasses
import os
import time

import numpy as np
import pytest

import gradcheck
from bruteforce import check_planner, layout_starts
from uashape import experiment as ex
from uashape import kernels
from uashape.advisor import AdvisorProfile, base_distribution
from uashape.gridworld import GridConfig, is_terminal, new_env, step
from uashape.metrics import CalibrationRecord, auc, brier, discrimination, ece, moving_average
from uashape.oracle import cost_to_go, greedy_rollout, optimal_action
from uashape.shaping import mix_entropy

LINES: list[str] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    configs = [ex.ExperimentConfig(condition=c, **ex.DESK_PRESET) for c in ex.CONDITIONS]
    t0 = time.perf_counter()
    rows, results = ex.run_suite(configs, ex.DESK_REPEATS, str(out))
    elapsed = time.perf_counter() - t0
    return {r["condition"]: r for r in rows}, results, elapsed


def test_criterion_1_guidance_benefit(desk):
    rows, results, elapsed = desk
    cal = rows[ex.CALIBRATED_ENTROPY]["auc_mean"]
    ung = rows[ex.UNGUIDED]["auc_mean"]
    runs = rows[ex.CALIBRATED_ENTROPY]["runs"] + rows[ex.UNGUIDED]["runs"]
    ok = runs == 2 * ex.DESK_REPEATS and cal >= 2 * ung and cal > 0
    report(1, ok, f"AUC calibrated-entropy {cal:.1f} vs unguided {ung:.1f} (need >= 2x); "
                  f"suite wall time {elapsed / 60:.1f} min for {len(results)} runs")


def test_criterion_2_entropy_beats_linear_decay(desk):
    rows, _, _ = desk
    ent = rows[ex.CALIBRATED_ENTROPY]["auc_mean"]
    dec = rows[ex.CALIBRATED_DECAY]["auc_mean"]
    report(2, ent > dec, f"AUC calibrated-entropy {ent:.1f} vs calibrated-linear-decay {dec:.1f}")


def test_criterion_3_calibration_benefit(desk):
    rows, _, _ = desk
    cal, det = rows[ex.CALIBRATED_ENTROPY], rows[ex.UNCALIBRATED]
    a = cal["ece_entropy_mean"] <= det["ece_entropy_mean"]
    b = all(r["ece_entropy_mean"] < r["ece_maxprob_mean"] and r["bs_entropy_mean"] < r["bs_maxprob_mean"]
            for r in (cal, det))
    detail = (f"ECE/BS entropy vs maxprob: calibrated {cal['ece_entropy_mean']:.3f}/{cal['bs_entropy_mean']:.3f}"
              f" vs {cal['ece_maxprob_mean']:.3f}/{cal['bs_maxprob_mean']:.3f}; deterministic "
              f"{det['ece_entropy_mean']:.3f}/{det['bs_entropy_mean']:.3f} vs "
              f"{det['ece_maxprob_mean']:.3f}/{det['bs_maxprob_mean']:.3f}")
    report(3, a and b, detail)


def test_criterion_4_discrimination(desk):
    rows, results, _ = desk
    cal, det = rows[ex.CALIBRATED_ENTROPY], rows[ex.UNCALIBRATED]
    wrong = [r.summary["n_incorrect"] for r in results if r.config.condition == ex.CALIBRATED_ENTROPY]
    ok = (cal["disc_entropy_mean"] is not None and det["disc_entropy_mean"] is not None
          and cal["disc_entropy_mean"] > det["disc_entropy_mean"]
          and cal["disc_entropy_mean"] >= 0.6 and min(wrong) >= 500)
    report(4, ok, f"discrimination calibrated {cal['disc_entropy_mean']} vs deterministic "
                  f"{det['disc_entropy_mean']}; incorrect records per calibrated run {wrong}")


def test_criterion_5_metric_oracles():
    tol = 1e-12
    rec = lambda f, o, u=None: CalibrationRecord(f, o, 1 - f if u is None else u, 0, 0 if o else 1)  # noqa: E731
    ramp = np.linspace(0, 1, 1000)
    checks = {
        "ece perfect": abs(ece([rec(1.0, 1)] * 3)) <= tol,
        "ece 0.9 pair": abs(ece([rec(0.9, 0), rec(0.9, 1)], 10) - 0.4) <= tol,
        "brier (1,1)": brier([rec(1.0, 1)]) == 0.0,
        "brier (1,0)": abs(brier([rec(1.0, 0)]) - 1.0) <= tol,
        "brier pair": abs(brier([rec(0.8, 1), rec(0.4, 0)]) - 0.10) <= tol,
        "disc all high": discrimination([rec(0.1, 0, 0.9)] * 2) == 1.0,
        "disc 0.67/0.23": abs(discrimination([rec(0.33, 0, 0.67), rec(0.77, 0, 0.23)]) - 0.5) <= tol,
        "ma constant": np.max(np.abs(moving_average([0.7] * 30, 5) - 0.7)) <= tol,
        "ma window 2": abs(moving_average([0, 0, 0, 1], 2)[-1] - 0.5) <= tol,
        "ma ramp": abs(moving_average(ramp, 250)[999] - (750 + 999) / 2 / 999) <= tol,
        "auc constant": abs(auc([1.42] * 3040) - 4316.8) <= 1e-9,
        "auc zero": auc(np.zeros(10)) == 0.0,
        "auc ones": abs(auc([1, 1, 1]) - 3) <= tol,
    }
    rng = np.random.default_rng(0)
    f = rng.random(100_000)
    synth = ece((f, (rng.random(f.size) < f).astype(float)), 10)
    checks["synthetic ece < 0.01"] = synth < 0.01
    failed = [k for k, v in checks.items() if not v]
    report(5, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks; synthetic ECE {synth:.4f}"
                          + (f"; failed {failed}" if failed else ""))


def test_criterion_6_mixture_properties():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(5))
    q = rng.dirichlet(np.ones(5))
    ends = np.array_equal(mix_entropy(p, q, 0.0).dist, p) and np.array_equal(mix_entropy(p, q, 1.0).dist, q)
    interior = mix_entropy(np.eye(5)[0], np.eye(5)[1], 0.25).dist
    inter_ok = np.max(np.abs(interior - [0.75, 0.25, 0, 0, 0])) <= 1e-12
    worst = 0.0
    for _ in range(10_000):
        a = rng.dirichlet(np.full(5, rng.uniform(0.05, 5)))
        b = rng.dirichlet(np.full(5, rng.uniform(0.05, 5)))
        d = mix_entropy(a, b, float(rng.uniform())).dist
        worst = max(worst, abs(d.sum() - 1.0))
    report(6, ends and inter_ok and worst <= 1e-9,
           f"endpoints exact {ends}; interior ok {inter_ok}; worst |sum-1| over 10000 mixes {worst:.1e}")


def test_criterion_7_oracle_correctness():
    cfg = GridConfig(3, 3)
    total, bad = check_planner(cfg, cost_to_go, optimal_action, layout_starts(cfg))
    rng = np.random.default_rng(2)
    done = 0
    for _ in range(1000):
        final, _, _ = greedy_rollout(new_env(cfg, rng), cfg)
        done += final.agent_pos == final.goal_pos and final.mission == 3 and final.door_open
    report(7, bad == 0 and total > 0 and done == 1000,
           f"{total - bad}/{total} enumerated states match brute force; {done}/1000 greedy rollouts finished")


def test_criterion_8_gradient_check():
    worst = {}
    for name, kernel in (("numba", kernels.ppo_loss_grad_loops), ("numpy", kernels.ppo_loss_grad_numpy)):
        rng = np.random.default_rng(3)
        worst[name] = max(gradcheck.max_relative_error(
            *gradcheck.random_case(rng, kernel, guided=i % 2 == 0), kernel) for i in range(50))
    ok = all(w < 1e-4 for w in worst.values())
    report(8, ok, "max relative error over 50 batches: "
                  + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_9_determinism(tmp_path):
    base = ex.ExperimentConfig(episodes=40, room_width=3, room_height=3, passes=5, seed=11, accuracy=0.85)
    mismatched = []
    for cond in ex.CONDITIONS:
        cfg = dataclasses.replace(base, condition=cond)
        blobs = []
        for run in ("a", "b"):
            out = tmp_path / f"{cond}_{run}"
            ex.emit_run(ex.run_condition(cfg), str(out))
            blobs.append({name: (out / name).read_bytes() for name in sorted(os.listdir(out))})
        if blobs[0] != blobs[1] or not blobs[0]:
            mismatched.append(cond)
    report(9, not mismatched, f"curve/advice CSVs byte-identical across reruns for {len(ex.CONDITIONS)} conditions"
                              + (f"; mismatched {mismatched}" if mismatched else ""))


def test_criterion_10_advisor_accuracy():
    cfg = GridConfig(4, 4)
    profile = AdvisorProfile(accuracy=0.90, error_seed=7)
    rng = np.random.default_rng(4)
    states = {}
    while len(states) < 10_000:
        s = new_env(cfg, rng)
        for _ in range(int(rng.integers(0, 60))):
            s, out = step(s, int(rng.integers(5)), cfg)
            if out.done:
                break
        if not is_terminal(s, cfg):
            states.setdefault(s.situation(), s)
    agree = np.mean([int(np.argmax(base_distribution(s, profile, cfg))) == optimal_action(s, cfg)
                     for s in states.values()])
    report(10, 0.88 <= agree <= 0.92, f"oracle agreement {agree:.4f} over 10000 distinct states")
