"""Run the four training conditions and write curves, advice logs and tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from uashape import metrics
from uashape.advisor import AdvisorProfile, advise_deterministic, advise_mc
from uashape.gridworld import GridConfig, UnlockPickupEnv, observation_length, prompt_hash, render_prompt
from uashape.oracle import optimal_action
from uashape.ppo import (
    Adam,
    PpoConfig,
    Transition,
    compute_returns_and_advantages,
    forward_actor,
    init_params,
    make_batch,
    ppo_update,
    save_checkpoint,
)
from uashape.shaping import agent_only, linear_decay_coeff, mix_entropy, mix_fixed, sample_action

log = logging.getLogger(__name__)

UNGUIDED = "unguided"
UNCALIBRATED = "uncalibrated-guided"
CALIBRATED_ENTROPY = "calibrated-entropy"
CALIBRATED_DECAY = "calibrated-linear-decay"
CONDITIONS = (UNGUIDED, UNCALIBRATED, CALIBRATED_ENTROPY, CALIBRATED_DECAY)

ADVICE_COLUMNS = ("episode", "step", "prompt_hash", "predicted_action", "oracle_action",
                  "entropy_norm", "one_minus_max", "passes")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    condition: str = CALIBRATED_ENTROPY
    episodes: int = 3040
    room_width: int = 4
    room_height: int = 4
    max_steps: Optional[int] = None
    fixed_layout: bool = False
    accuracy: float = 0.90
    concentration: float = 9.0
    pass_noise: float = 1.0
    error_noise_gain: float = 8.0
    error_seed: Optional[int] = None
    passes: int = 10
    seed: int = 0
    window: int = 250
    bins: int = 10
    out_dir: Optional[str] = None
    gamma: float = 0.99
    clip_epsilon: float = 0.2
    learning_rate: float = 1e-4
    minibatch_size: int = 15
    epochs_per_update: int = 4
    hidden_width: int = 64
    value_loss_weight: float = 0.5
    entropy_bonus_weight: float = 0.01

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}; choose from {', '.join(CONDITIONS)}")
        if self.episodes < 1:
            raise ValueError("episodes must be positive")
        if self.condition in (CALIBRATED_ENTROPY, CALIBRATED_DECAY) and self.passes < 2:
            raise ValueError(f"{self.condition} needs passes >= 2")
        if self.condition == CALIBRATED_DECAY and self.episodes < 2:
            raise ValueError("linear decay needs at least 2 episodes")

    @property
    def guided(self) -> bool:
        return self.condition != UNGUIDED

    def grid(self) -> GridConfig:
        return GridConfig(self.room_width, self.room_height, self.max_steps, self.seed)

    def advisor(self) -> AdvisorProfile:
        return AdvisorProfile(self.accuracy, self.concentration, self.pass_noise, self.error_noise_gain,
                              self.seed if self.error_seed is None else self.error_seed)

    def ppo(self) -> PpoConfig:
        return PpoConfig(gamma=self.gamma, clip_epsilon=self.clip_epsilon, learning_rate=self.learning_rate,
                         minibatch_size=self.minibatch_size, epochs_per_update=self.epochs_per_update,
                         hidden_width=self.hidden_width, value_loss_weight=self.value_loss_weight,
                         entropy_bonus_weight=self.entropy_bonus_weight)

    @property
    def tag(self) -> str:
        return f"{self.condition}_{self.seed}"


DESK_PRESET = dict(episodes=1500, room_width=3, room_height=3, passes=10, accuracy=0.93)
DESK_REPEATS = 3


@dataclass
class AdviceLog:
    episode: list = field(default_factory=list)
    step: list = field(default_factory=list)
    prompt_hash: list = field(default_factory=list)
    predicted: list = field(default_factory=list)
    oracle: list = field(default_factory=list)
    entropy_norm: list = field(default_factory=list)
    one_minus_max: list = field(default_factory=list)
    passes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episode)

    def outcomes(self) -> np.ndarray:
        return (np.asarray(self.predicted) == np.asarray(self.oracle)).astype(float)

    def records(self, flavor: str = metrics.ENTROPY_FLAVOR) -> list:
        unc = self.entropy_norm if flavor == metrics.ENTROPY_FLAVOR else self.one_minus_max
        return [metrics.CalibrationRecord.from_advice(u, p, o)
                for u, p, o in zip(unc, self.predicted, self.oracle)]


@dataclass
class RunResult:
    config: ExperimentConfig
    rewards: np.ndarray
    advice: AdviceLog
    summary: dict
    duration: float
    advisor_queries: int
    params: object = None


def calibration_summary(advice: AdviceLog, bins: int = 10) -> dict:
    out = {}
    if not len(advice):
        return out
    o = advice.outcomes()
    for flavor, unc in ((metrics.ENTROPY_FLAVOR, np.asarray(advice.entropy_norm)),
                        (metrics.MAXPROB_FLAVOR, np.asarray(advice.one_minus_max))):
        conf = 1.0 - unc
        key = "entropy" if flavor == metrics.ENTROPY_FLAVOR else "maxprob"
        out[f"ece_{key}"] = metrics.ece((conf, o), bins)
        out[f"bs_{key}"] = metrics.brier((conf, o))
        out[f"disc_{key}"] = metrics.discrimination_arrays(unc, o)
    out["advice_accuracy"] = float(o.mean())
    out["n_records"] = int(o.size)
    out["n_incorrect"] = int((o == 0).sum())
    return out


def run_condition(config: ExperimentConfig, checkpoint_dir: Optional[str] = None) -> RunResult:
    """Train one agent under ``config.condition``; fully determined by ``config``."""
    t0 = time.perf_counter()
    grid = config.grid()
    profile = config.advisor()
    ppo_cfg = config.ppo()
    layout_ss, init_ss, act_ss, pass_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(5)
    env = UnlockPickupEnv(grid, np.random.default_rng(layout_ss))
    act_rng = np.random.default_rng(act_ss)
    pass_rng = np.random.default_rng(pass_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    n_in = observation_length(grid)
    params = init_params(n_in, ppo_cfg, np.random.default_rng(init_ss))
    optimizer = Adam(params.flat.size)

    rewards = np.zeros(config.episodes)
    advice = AdviceLog()
    queries = 0
    for ep in range(config.episodes):
        if config.fixed_layout:
            env.layout_rng = np.random.default_rng(layout_ss)
        state = env.reset()
        lam = linear_decay_coeff(ep, config.episodes) if config.condition == CALIBRATED_DECAY else None
        trajectory = []
        total = 0.0
        try:
            while True:
                obs = env.observe()
                p_agent = forward_actor(params, obs)
                p_llm = coeff = None
                if config.guided:
                    if config.condition == UNCALIBRATED:
                        adv = advise_deterministic(state, profile, grid)
                    else:
                        adv = advise_mc(state, profile, grid, config.passes, pass_rng)
                    queries += 1
                    advice.episode.append(ep)
                    advice.step.append(state.step_count)
                    advice.prompt_hash.append(prompt_hash(render_prompt(state, grid)))
                    advice.predicted.append(adv.predicted_action)
                    advice.oracle.append(optimal_action(state, grid))
                    advice.entropy_norm.append(adv.entropy_norm)
                    advice.one_minus_max.append(adv.one_minus_max)
                    advice.passes.append(adv.passes_used)
                    if lam is None:
                        policy = mix_entropy(adv.mean_dist, p_agent, adv.entropy_norm)
                    else:
                        policy = mix_fixed(adv.mean_dist, p_agent, lam)
                    p_llm, coeff = adv.mean_dist, policy.coeff_agent
                else:
                    policy = agent_only(p_agent)
                action, logp = sample_action(policy, act_rng)
                outcome = env.step(action)
                state = env.state
                total += outcome.reward
                trajectory.append(Transition(obs, action, logp, outcome.reward, outcome.done, p_llm, coeff))
                if outcome.done:
                    break
            final_obs = env.observe() if outcome.truncated else None
            returns, advantages = compute_returns_and_advantages(trajectory, params, ppo_cfg.gamma, final_obs)
            params, _ = ppo_update(params, make_batch(trajectory, returns, advantages), ppo_cfg,
                                   optimizer, shuffle_rng)
        except Exception as exc:
            raise ExperimentError(
                f"{config.tag}: episode {ep}, step {state.step_count}: {type(exc).__name__}: {exc}"
            ) from exc
        rewards[ep] = total

    smoothed = metrics.moving_average(rewards, config.window)
    summary = {"auc": metrics.auc(smoothed), "final_reward": float(smoothed[-1]),
               "mean_reward": float(rewards.mean())}
    summary.update(calibration_summary(advice, config.bins))
    result = RunResult(config, rewards, advice, summary, time.perf_counter() - t0, queries, params)
    if checkpoint_dir is not None:
        save_checkpoint(os.path.join(checkpoint_dir, f"checkpoint_{config.tag}.npz"), params, ppo_cfg)
    return result


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def curve_csv(result: RunResult, window: Optional[int] = None) -> str:
    window = window or result.config.window
    smoothed = metrics.moving_average(result.rewards, window)
    return _csv_text(("episode", "reward", "smoothed"),
                     ((i, float(r), float(s)) for i, (r, s) in enumerate(zip(result.rewards, smoothed))))


def advice_csv(result: RunResult) -> str:
    a = result.advice
    rows = zip(a.episode, a.step, a.prompt_hash, a.predicted, a.oracle,
               map(float, a.entropy_norm), map(float, a.one_minus_max), a.passes)
    return _csv_text(ADVICE_COLUMNS, rows)


def emit_curves(results: Sequence[RunResult], window: int, out_dir: str) -> list:
    paths = []
    for res in results:
        path = os.path.join(out_dir, f"curve_{res.config.tag}.csv")
        write_atomic(path, curve_csv(res, window))
        paths.append(path)
    return paths


def emit_run(result: RunResult, out_dir: str) -> None:
    emit_curves([result], result.config.window, out_dir)
    if result.config.guided:
        write_atomic(os.path.join(out_dir, f"advice_{result.config.tag}.csv"), advice_csv(result))


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

SUMMARY_METRICS = ("auc", "final_reward", "ece_entropy", "bs_entropy", "disc_entropy",
                   "ece_maxprob", "bs_maxprob", "disc_maxprob", "advice_accuracy", "n_incorrect")


def _run_one(args):
    config, out_dir = args
    try:
        res = run_condition(config, checkpoint_dir=out_dir)
        if out_dir:
            emit_run(res, out_dir)
        res.params = None
        return config, res, None
    except Exception as exc:
        log.exception("run %s failed", config.tag)
        return config, None, f"{type(exc).__name__}: {exc}"


def aggregate(results: Sequence[RunResult]) -> list[dict]:
    """One row per condition: mean and sample std of every summary metric."""
    rows = []
    for cond in CONDITIONS:
        runs = [r for r in results if r.config.condition == cond]
        if not runs:
            continue
        row = {"condition": cond, "runs": len(runs)}
        for key in SUMMARY_METRICS:
            vals = [r.summary.get(key) for r in runs]
            vals = [v for v in vals if v is not None]
            row[f"{key}_mean"] = float(np.mean(vals)) if vals else None
            row[f"{key}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else (0.0 if vals else None)
        rows.append(row)
    return rows


TABLE2_ROWS = (
    (UNCALIBRATED, "entropy", "Deterministic by Mean Entropy"),
    (UNCALIBRATED, "maxprob", "Deterministic by Max Probability"),
    (CALIBRATED_ENTROPY, "entropy", "Sample Consistency by Mean Entropy"),
    (CALIBRATED_ENTROPY, "maxprob", "Sample Consistency by Max Probability"),
)


def write_tables(rows: list[dict], runs: list, out_dir: str) -> None:
    summary_header = ["condition", "runs"] + [f"{k}_{s}" for k in SUMMARY_METRICS for s in ("mean", "std")]
    write_atomic(os.path.join(out_dir, "summary.csv"),
                 _csv_text(summary_header, ([row[h] for h in summary_header] for row in rows)))
    write_atomic(os.path.join(out_dir, "table1_auc.csv"),
                 _csv_text(("condition", "auc_mean", "auc_std"),
                           ((r["condition"], r["auc_mean"], r["auc_std"]) for r in rows)))
    by_cond = {r["condition"]: r for r in rows}
    t2 = []
    for cond, key, label in TABLE2_ROWS:
        if cond in by_cond:
            r = by_cond[cond]
            t2.append((label, r[f"ece_{key}_mean"], r[f"bs_{key}_mean"], r[f"disc_{key}_mean"]))
    write_atomic(os.path.join(out_dir, "table2_calibration.csv"),
                 _csv_text(("method", "ece", "bs", "discrimination"), t2))
    run_header = ["condition", "seed", "status", "duration_s"] + list(SUMMARY_METRICS)
    write_atomic(os.path.join(out_dir, "runs.csv"), _csv_text(run_header, runs))


def run_suite(configs: Sequence[ExperimentConfig], repeats: int = 1, out_dir: Optional[str] = None,
              jobs: int = 1) -> tuple[list[dict], list[RunResult]]:
    """Run every config for ``repeats`` consecutive seeds and tabulate.

    A failing run is logged and recorded in ``runs.csv``; the suite carries on.
    """
    if not configs:
        raise ValueError("no configs")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    jobs_list = [(dataclasses.replace(c, seed=c.seed + r), out_dir) for c in configs for r in range(repeats)]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, jobs_list))
    else:
        outcomes = [_run_one(j) for j in jobs_list]
    results = [res for _, res, _ in outcomes if res is not None]
    run_rows = []
    for cfg, res, err in outcomes:
        if res is None:
            run_rows.append([cfg.condition, cfg.seed, f"failed: {err}", None] + [None] * len(SUMMARY_METRICS))
        else:
            run_rows.append([cfg.condition, cfg.seed, "ok", round(res.duration, 3)]
                            + [res.summary.get(k) for k in SUMMARY_METRICS])
    rows = aggregate(results)
    if out_dir:
        write_tables(rows, run_rows, out_dir)
    return rows, results


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    f = _FIELDS[name]
    text = raw.strip()
    kind = str(f.type)
    if text.lower() in ("none", "") and "Optional" in kind:
        return None
    if "bool" in kind:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. ``room = WxH`` is accepted."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "room":
            out["room_width"], out["room_height"] = parse_room(value)
        elif key == "conditions":
            out["conditions"] = [c.strip() for c in value.split(",") if c.strip()]
        elif key in ("repeats", "jobs"):
            out[key] = int(value)
        elif key in _FIELDS:
            out[key] = _coerce(key, value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return out


def load_config_file(path: str) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def parse_room(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ValueError(f"room size must look like 4x4, got {text!r}") from None
