"""Experiment orchestration: training, evaluation, benchmark summaries."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .baselines import VicinityRule, random_backup, wcs_backup
from .config import ScenarioConfig
from .ddpg import (
    DdpgAgent,
    Transition,
    assignment_scores,
    decode_action,
    encode_state,
)
from .env import BackupAction, HandoverEnv
from .metrics import EpisodeLog, MetricsRecord, compute_metrics

STREAM_TRAIN = 0
STREAM_EVAL = 1

POLICY_NAMES = ("ddpg", "rand", "wcs")


class TrainingDiverged(RuntimeError):
    pass


# ---------- policies ----------


class DdpgPolicy:
    """Frozen actor: greedy decode of the score matrix."""

    def __init__(self, agent: DdpgAgent):
        self.agent = agent

    def __call__(self, env, state, mask, rng):
        vec = encode_state(state, env.cfg)
        scores = self.agent.act(vec)
        return decode_action(scores, state.serving, mask, env.cfg.n_bs)


class RandPolicy:
    def __init__(self, vicinity: VicinityRule | None = None):
        self.vicinity = vicinity or VicinityRule()

    def __call__(self, env, state, mask, rng):
        return random_backup(
            state, mask, env.locations(state.slot + 1), env.bs_positions,
            rng, self.vicinity,
        )


class WcsPolicy:
    def __call__(self, env, state, mask, rng):
        return wcs_backup(state, mask, env, rng)


def make_policy(name: str, cfg: ScenarioConfig, checkpoint: str | None = None):
    if name == "ddpg":
        if checkpoint is None:
            raise ValueError("ddpg policy needs a checkpoint")
        agent = DdpgAgent(cfg)
        agent.load(checkpoint)
        return DdpgPolicy(agent)
    if name == "rand":
        return RandPolicy(VicinityRule(cfg.vicinity_radius_m))
    if name == "wcs":
        return WcsPolicy()
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


# ---------- episode running ----------


def run_episode(env: HandoverEnv, policy, rng: np.random.Generator) -> tuple[EpisodeLog, float]:
    """Roll one full episode under a frozen policy; returns the log and total reward."""
    state = env.reset()
    states, outcomes = [], []
    total = 0.0
    while not env.done:
        mask, _ = env.probe()
        backup = policy(env, state, mask, rng)
        states.append(state)
        state, outcome = env.step(BackupAction(backup))
        outcomes.append(outcome)
        total += outcome.reward
    log = EpisodeLog.from_episode(
        states, outcomes, state, env.r_th_gbps, env.cfg.lambda_t, env.cfg.lambda_h
    )
    return log, total


# ---------- training ----------


# Epsilon-greedy schedule for exploring decoded backup choices on top of the
# score-space OU noise; decays linearly alongside the noise.
EPS_EXPLORE_START = 0.25
EPS_EXPLORE_FINAL = 0.05


def train_agent(cfg: ScenarioConfig, progress_cb=None) -> tuple[DdpgAgent, list[dict]]:
    """Off-policy training over seeded episodes; returns the agent and curve rows.

    The replay buffer stores the executed assignment (as the score matrix it
    decodes from) together with the per-UE reward split, which the factored
    critic consumes. The returned agent carries the parameters from the best
    `snapshot_window`-episode stretch of training reward, which guards the
    delivered policy against late-training drift.
    """
    agent = DdpgAgent(cfg)
    act_rng = np.random.default_rng([cfg.seed, 31])
    batch_rng = np.random.default_rng([cfg.seed, 37])
    total_steps = max(1, cfg.train_episodes * cfg.n_slots)
    step = 0
    curve = []
    best_avg = -np.inf
    best_params = None
    best_episode = -1
    reward_window: list[float] = []
    for ep in range(cfg.train_episodes):
        env = HandoverEnv(cfg, (cfg.seed, STREAM_TRAIN, ep))
        state = env.reset()
        vec = encode_state(state, cfg)
        agent.noise.reset()
        ep_reward = 0.0
        last_loss = 0.0
        sigma = cfg.ou_sigma
        while not env.done:
            frac = min(1.0, step / total_steps)
            sigma = cfg.ou_sigma + frac * (cfg.ou_sigma_final - cfg.ou_sigma)
            eps = EPS_EXPLORE_START + frac * (EPS_EXPLORE_FINAL - EPS_EXPLORE_START)
            mask, _ = env.probe()
            scores = agent.act(vec, noise_sigma=sigma, rng=act_rng)
            backup = decode_action(scores, state.serving, mask, cfg.n_bs)
            for i in np.flatnonzero(mask):
                if act_rng.random() < eps:
                    backup[i] = int(act_rng.integers(cfg.n_bs))
            state, outcome = env.step(BackupAction(backup))
            next_vec = encode_state(state, cfg)
            reward_per_ue = cfg.reward_scale * (
                outcome.rates_gbps
                - cfg.lambda_t * outcome.outage_flags
                - cfg.lambda_h * outcome.handover_flags
            )
            agent.buffer.add(
                Transition(
                    state=vec,
                    action=assignment_scores(state.serving, cfg.n_bs),
                    reward=outcome.reward * cfg.reward_scale,
                    next_state=next_vec,
                    done=env.done,
                    reward_per_ue=reward_per_ue,
                )
            )
            vec = next_vec
            ep_reward += outcome.reward
            step += 1
            if agent.buffer.size >= max(cfg.batch_size, cfg.warmup_steps):
                c_loss, a_obj = agent.train_step(batch_rng)
                last_loss = c_loss
                if not (np.isfinite(c_loss) and np.isfinite(a_obj)):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step}: critic={c_loss} actor={a_obj}"
                    )
        agent.train_episodes_done += 1
        reward_window.append(ep_reward)
        if len(reward_window) > cfg.snapshot_window:
            reward_window.pop(0)
        window_avg = float(np.mean(reward_window))
        if window_avg > best_avg:
            best_avg = window_avg
            best_params = [a.copy() for a in agent._arrays()]
            best_episode = ep
        curve.append(
            {
                "episode": ep,
                "reward": ep_reward,
                "critic_loss": last_loss,
                "noise_sigma": sigma,
                "window_avg": window_avg,
            }
        )
        if progress_cb is not None:
            progress_cb(ep, ep_reward)
    if best_params is not None:
        for mine, saved in zip(agent._arrays(), best_params):
            mine[...] = saved
        agent.best_episode = best_episode
    return agent, curve


def run_training(cfg: ScenarioConfig, out_dir: str) -> str:
    """Train, persist checkpoint + curve + resolved config; returns checkpoint path."""
    os.makedirs(out_dir, exist_ok=True)
    cfg.to_json(os.path.join(out_dir, "config.json"))
    t0 = time.perf_counter()
    try:
        agent, curve = train_agent(cfg)
    except TrainingDiverged as exc:
        dump = os.path.join(out_dir, "divergence.json")
        with open(dump, "w") as fh:
            json.dump({"error": str(exc)}, fh, indent=2)
        raise
    wall = time.perf_counter() - t0
    ckpt = os.path.join(out_dir, "policy.ckpt")
    agent.save(ckpt)
    with open(os.path.join(out_dir, "training_curve.csv"), "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "reward", "critic_loss", "noise_sigma", "window_avg"])
        for row in curve:
            writer.writerow(
                [
                    row["episode"],
                    repr(float(row["reward"])),
                    repr(float(row["critic_loss"])),
                    repr(float(row["noise_sigma"])),
                    repr(float(row["window_avg"])),
                ]
            )
    with open(os.path.join(out_dir, "training_meta.json"), "w") as fh:
        json.dump(
            {"episodes": len(curve), "wall_s": wall, "best_episode": agent.best_episode},
            fh, indent=2,
        )
    return ckpt


# ---------- evaluation ----------


def _eval_one(args):
    cfg, name, checkpoint, ep, write_log, out_dir = args
    policy = make_policy(name, cfg, checkpoint)
    seed_key = (cfg.seed, STREAM_EVAL, ep)
    env = HandoverEnv(cfg, seed_key)
    rng = np.random.default_rng([cfg.seed, 53, ep])
    t0 = time.perf_counter()
    log, _total = run_episode(env, policy, rng)
    wall = time.perf_counter() - t0
    rec = compute_metrics(
        log, cfg.window_k, cfg.lambda_t, cfg.lambda_h, episode=ep, seed_key=seed_key
    )
    rec.wall_s = wall
    text = log.to_csv_text() if write_log else None
    return ep, rec, text


def run_evaluation(
    cfg: ScenarioConfig,
    policy_name: str,
    checkpoint: str | None,
    out_dir: str,
    write_slot_logs: bool = True,
) -> list[MetricsRecord]:
    """Frozen-policy evaluation over the held-out episode stream."""
    if policy_name == "ddpg" and (checkpoint is None or not os.path.exists(checkpoint)):
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    make_policy(policy_name, cfg, checkpoint)  # fail fast on bad names
    os.makedirs(out_dir, exist_ok=True)
    cfg.to_json(os.path.join(out_dir, "config.json"))
    jobs = [
        (cfg, policy_name, checkpoint, ep, write_slot_logs, out_dir)
        for ep in range(cfg.eval_episodes)
    ]
    if cfg.workers > 1:
        import multiprocessing

        with multiprocessing.Pool(cfg.workers) as pool:
            results = pool.map(_eval_one, jobs)
    else:
        results = [_eval_one(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    records = []
    for ep, rec, text in results:
        records.append(rec)
        if text is not None:
            with open(os.path.join(out_dir, f"slots_ep{ep:04d}.csv"), "w") as fh:
                fh.write(text)
    write_episode_csv(os.path.join(out_dir, "episodes.csv"), records)
    return records


def write_episode_csv(path: str, records: list[MetricsRecord]):
    with open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "f1_gbps", "f2_count", "f3_count", "reward_sum"])
        for rec in records:
            writer.writerow(
                [
                    rec.episode,
                    repr(float(rec.f1_gbps)),
                    rec.f2_count,
                    rec.f3_count,
                    repr(float(rec.reward_sum)),
                ]
            )


# ---------- bench ----------


@dataclass
class PolicySummary:
    policy: str
    mean_f1: float
    sem_f1: float
    mean_f2: float
    sem_f2: float
    mean_f3: float
    sem_f3: float
    mean_reward: float


def summarize(records: list[MetricsRecord], name: str) -> PolicySummary:
    f1 = np.array([r.f1_gbps for r in records])
    f2 = np.array([r.f2_count for r in records], dtype=float)
    f3 = np.array([r.f3_count for r in records], dtype=float)
    rw = np.array([r.reward_sum for r in records])
    sem = lambda x: float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0
    return PolicySummary(
        policy=name,
        mean_f1=float(f1.mean()), sem_f1=sem(f1),
        mean_f2=float(f2.mean()), sem_f2=sem(f2),
        mean_f3=float(f3.mean()), sem_f3=sem(f3),
        mean_reward=float(rw.mean()),
    )


def paired_less_p(a: list[float], b: list[float]) -> float:
    """One-sided paired t-test p-value for mean(a) < mean(b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.allclose(a, b):
        return 1.0
    res = stats.ttest_rel(a, b, alternative="less")
    return float(res.pvalue)


def run_bench(cfg: ScenarioConfig, out_dir: str, checkpoint: str | None = None) -> dict:
    """Train (unless given a checkpoint), evaluate all policies, write summaries."""
    os.makedirs(out_dir, exist_ok=True)
    cfg.to_json(os.path.join(out_dir, "config.json"))
    if checkpoint is None:
        checkpoint = run_training(cfg, os.path.join(out_dir, "train"))
    all_records: dict[str, list[MetricsRecord]] = {}
    for name in POLICY_NAMES:
        all_records[name] = run_evaluation(
            cfg, name, checkpoint if name == "ddpg" else None,
            os.path.join(out_dir, f"eval_{name}"),
        )
    summaries = {name: summarize(recs, name) for name, recs in all_records.items()}
    p_f2 = paired_less_p(
        [r.f2_count for r in all_records["ddpg"]],
        [r.f2_count for r in all_records["rand"]],
    )
    p_f3 = paired_less_p(
        [r.f3_count for r in all_records["ddpg"]],
        [r.f3_count for r in all_records["rand"]],
    )
    lines = [
        "policy     mean_F1_gbps       mean_F2    mean_F3    mean_reward",
    ]
    for name in POLICY_NAMES:
        s = summaries[name]
        lines.append(
            f"{name:<8} {s.mean_f1:12.3f}+-{s.sem_f1:.3f} "
            f"{s.mean_f2:7.3f}+-{s.sem_f2:.3f} {s.mean_f3:7.3f}+-{s.sem_f3:.3f} "
            f"{s.mean_reward:12.3f}"
        )
    lines.append(f"paired one-sided p (ddpg < rand), outages:   {p_f2:.6f}")
    lines.append(f"paired one-sided p (ddpg < rand), handovers: {p_f3:.6f}")
    summary_text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_text)
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["policy", "mean_f1_gbps", "sem_f1", "mean_f2", "sem_f2",
             "mean_f3", "sem_f3", "mean_reward"]
        )
        for name in POLICY_NAMES:
            s = summaries[name]
            writer.writerow(
                [name, repr(s.mean_f1), repr(s.sem_f1), repr(s.mean_f2),
                 repr(s.sem_f2), repr(s.mean_f3), repr(s.sem_f3), repr(s.mean_reward)]
            )
    return {
        "summaries": summaries,
        "p_f2": p_f2,
        "p_f3": p_f3,
        "records": all_records,
        "checkpoint": checkpoint,
    }
