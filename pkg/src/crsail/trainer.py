"""The training loop: rollout, post hoc querying, aggregation, update.

Budgets are checked only at loop entry, so the episode that crosses a budget
runs to completion and its queries are counted. Evaluation rollouts are
seeded separately and never touch the step or query counters.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from crsail.conformal import CalibratedThreshold, calibrate_radius
from crsail.core import evaluate_policy, rollout
from crsail.dataset import ExpertDataset
from crsail.exceptions import ConfigurationError
from crsail.policy import MLPPolicy, TrainConfig, behavioral_cloning, update
from crsail.strategies import StrategyConfig, label_queries, select_queries

CSV_COLUMNS = (
    "episode", "steps_cum", "queries_episode", "queries_cum",
    "eval_mean", "eval_std", "converged_flag",
)


@dataclass
class Budget:
    """Caps on expert labels and environment steps; None means unbounded."""

    max_queries: int | None = None
    max_steps: int | None = None

    def __post_init__(self):
        if self.max_queries is None and self.max_steps is None:
            raise ConfigurationError("at least one of max_queries/max_steps must be finite")

    def exhausted(self, queries: int, steps: int) -> bool:
        if self.max_queries is not None and queries >= self.max_queries:
            return True
        if self.max_steps is not None and steps >= self.max_steps:
            return True
        return False


@dataclass
class EpisodeMetrics:
    episode: int
    length: int
    n_queries: int
    steps_cum: int
    queries_cum: int
    eval_mean: float
    eval_std: float
    wall_time: float
    converged_flag: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def is_expert_level(eval_mean: float, expert_mean: float) -> bool:
    """Convergence rule: within 5% of the expert's mean return.

    Written as eval >= expert - 0.05 |expert| so it also behaves sensibly for
    negative returns; for positive expert returns it reduces to the usual
    95%-of-expert rule.
    """
    return eval_mean >= expert_mean - 0.05 * abs(expert_mean)


@dataclass
class RunRecord:
    """Everything one training run produced, serializable to JSON + CSV."""

    config: dict
    episodes: list[EpisodeMetrics] = field(default_factory=list)
    threshold: dict | None = None
    expert_mean: float | None = None
    summary: dict = field(default_factory=dict)

    def compute_summary(self) -> dict:
        total_queries = sum(e.n_queries for e in self.episodes)
        total_steps = sum(e.length for e in self.episodes)
        best = max((e.eval_mean for e in self.episodes), default=None)
        qte = None
        converged = False
        if self.expert_mean is not None:
            for e in self.episodes:
                if is_expert_level(e.eval_mean, self.expert_mean):
                    qte = e.queries_cum
                    converged = True
                    break
        return {
            "episodes": len(self.episodes),
            "total_queries": total_queries,
            "total_steps": total_steps,
            "best_eval_mean": best,
            "converged": converged,
            "queries_to_expert": qte,
            "expert_mean": self.expert_mean,
        }

    def finalize(self) -> "RunRecord":
        self.summary = self.compute_summary()
        return self

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "threshold": self.threshold,
            "expert_mean": self.expert_mean,
            "episodes": [e.as_dict() for e in self.episodes],
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        rec = cls(
            config=data["config"],
            episodes=[EpisodeMetrics(**e) for e in data["episodes"]],
            threshold=data.get("threshold"),
            expert_mean=data.get("expert_mean"),
            summary=data.get("summary", {}),
        )
        if rec.summary and rec.summary != rec.compute_summary():
            raise ConfigurationError("stored summary does not match the episode series")
        return rec

    def save_json(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load_json(cls, path) -> "RunRecord":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_csv(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for e in self.episodes:
                writer.writerow([
                    e.episode, e.steps_cum, e.n_queries, e.queries_cum,
                    f"{e.eval_mean:.17g}", f"{e.eval_std:.17g}", e.converged_flag,
                ])
        os.replace(tmp, path)


def build_initial_dataset(env, expert, m: int, seed) -> ExpertDataset:
    """Concatenate whole expert rollouts until at least m pairs are collected."""
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    states, actions, total = [], [], 0
    while total < m:
        traj = rollout(env, expert, seed.spawn(1)[0])
        states.append(traj.states[:-1])
        actions.append(traj.actions)
        total += traj.length
    return ExpertDataset(np.concatenate(states), np.concatenate(actions))


def _train_ensemble(dataset: ExpertDataset, config: TrainConfig, size: int,
                    rng: np.random.Generator) -> list[MLPPolicy]:
    """Bootstrap-resampled policies for the ensemble-variance gate."""
    ensemble = []
    for _ in range(size):
        idx = rng.integers(0, len(dataset), size=len(dataset))
        boot = ExpertDataset(dataset.states[idx], dataset.actions[idx],
                             dataset.standardizer)
        ensemble.append(behavioral_cloning(boot, config, rng=rng))
    return ensemble


def train(env, expert, dataset: ExpertDataset, policy: MLPPolicy,
          strategy: StrategyConfig, budget: Budget, train_config: TrainConfig,
          seed, threshold: CalibratedThreshold | None = None,
          expert_mean: float | None = None, eval_episodes: int = 20,
          recalibrate_every: int = 0, m_cal: int = 30,
          run_config: dict | None = None) -> tuple[MLPPolicy, RunRecord]:
    """Iterate episodes until a budget is exhausted; returns the final policy.

    `dataset` and `policy` are the initial expert dataset and the policy
    behavior-cloned on it. For the crsail strategy a calibrated threshold is
    required. `recalibrate_every` > 0 re-runs calibration with the current
    policy and dataset every that many episodes (off by default; it is known
    to flatten the query-rate decay).
    """
    if strategy.kind == "crsail" and threshold is None:
        raise ConfigurationError("crsail strategy requires a calibrated threshold")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rollout_ss, eval_ss, update_ss, strat_ss, recal_ss = seed.spawn(5)
    update_rng = np.random.default_rng(update_ss)
    strat_rng = np.random.default_rng(strat_ss)

    if threshold is not None:
        strategy = StrategyConfig(**{**strategy.__dict__, "radius": threshold.radius})

    dataset = dataset.copy()
    policy = policy.copy()
    initial_size = len(dataset)
    record = RunRecord(
        config=run_config or {},
        threshold=threshold.as_dict() if threshold is not None else None,
        expert_mean=expert_mean,
    )

    i, steps, queries = 0, 0, 0
    while not budget.exhausted(queries, steps):
        t0 = time.perf_counter()
        try:
            traj = rollout(env, policy, rollout_ss.spawn(1)[0])
            aux = {"rng": strat_rng}
            if strategy.kind == "ensemble-variance":
                aux["ensemble"] = _train_ensemble(
                    dataset, train_config, strategy.ensemble_size, update_rng
                )
            qs = select_queries(strategy, traj, dataset, aux)
            q_states, q_actions = label_queries(expert, traj, qs)
            dataset.append(q_states, q_actions)
            policy = update(policy, dataset, train_config, rng=update_rng)
        except Exception as exc:
            raise type(exc)(f"iteration {i}: {exc}") from exc
        steps += traj.length
        queries += len(qs)
        eval_mean, eval_std = evaluate_policy(env, policy, eval_episodes, eval_ss.spawn(1)[0])
        flag = int(expert_mean is not None and is_expert_level(eval_mean, expert_mean))
        record.episodes.append(EpisodeMetrics(
            episode=i, length=traj.length, n_queries=len(qs), steps_cum=steps,
            queries_cum=queries, eval_mean=eval_mean, eval_std=eval_std,
            wall_time=time.perf_counter() - t0, converged_flag=flag,
        ))
        i += 1
        if recalibrate_every > 0 and i % recalibrate_every == 0 and strategy.kind == "crsail":
            new_thr = calibrate_radius(
                env, policy, dataset, strategy.novelty_config(),
                threshold.alpha, m_cal, recal_ss.spawn(1)[0],
            )
            strategy = StrategyConfig(**{**strategy.__dict__, "radius": new_thr.radius})

    assert len(dataset) == initial_size + queries
    return policy, record.finalize()


def queries_to_expert(record: RunRecord, expert_mean: float) -> int | None:
    """Cumulative queries when the eval mean first reaches expert level."""
    for e in record.episodes:
        if is_expert_level(e.eval_mean, expert_mean):
            return e.queries_cum
    return None
