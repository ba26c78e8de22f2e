"""Configuration-driven experiment runner.

Config files are flat INI-style key=value text with one section per module.
Every run embeds its fully resolved config snapshot, so any output is
reproducible from its own header.
"""

from __future__ import annotations

import configparser
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from crsail.conformal import calibrate_radius
from crsail.core import evaluate_policy
from crsail.envs import make_env, make_expert
from crsail.exceptions import ConfigurationError
from crsail.policy import TrainConfig, behavioral_cloning
from crsail.strategies import StrategyConfig
from crsail.trainer import Budget, RunRecord, build_initial_dataset, train

DEFAULT_CONFIG = {
    "experiment": {
        "env": "",
        "strategy": "",
        "seeds": "0,1,2,3,4",
        "m_values": "250,500,1000,2000",
        "output_dir": "runs",
        "workers": "1",
        "eval_episodes": "20",
    },
    "env": {},
    "strategy": {
        "alpha": "0.93",
        "k": "5",
        "rate": "0.5",
        "tau": "0.1",
        "tau_doubt": "0.01",
        "ensemble_size": "5",
        "backend": "brute",
        "standardize": "true",
        "radius": "",
    },
    "train": {
        "learning_rate": "0.01",
        "batch_size": "64",
        "bc_epochs": "50",
        "update_epochs": "10",
        "init_scale": "0.1",
        "retrain_from_scratch": "false",
    },
    "conformal": {
        "m_cal": "30",
        "recalibrate_every": "0",
    },
    "budget": {
        "max_steps": "10000",
        "max_queries": "",
    },
}


def _convert(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


@dataclass
class ExperimentConfig:
    env: str
    strategy: str
    seeds: list[int]
    m_values: list[int]
    output_dir: str
    workers: int = 1
    eval_episodes: int = 20
    env_overrides: dict = field(default_factory=dict)
    strategy_params: dict = field(default_factory=dict)
    train_params: dict = field(default_factory=dict)
    m_cal: int = 30
    recalibrate_every: int = 0
    max_steps: int | None = 10000
    max_queries: int | None = None

    def __post_init__(self):
        if not self.env:
            raise ConfigurationError("config must set experiment.env")
        if not self.strategy:
            raise ConfigurationError("config must set experiment.strategy")
        # fail fast on invalid kind/params before any run starts
        self.make_strategy_config()
        self.make_train_config(0)
        Budget(max_queries=self.max_queries, max_steps=self.max_steps)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "ExperimentConfig":
        merged = {s: dict(v) for s, v in DEFAULT_CONFIG.items()}
        for section in parser.sections():
            if section not in merged:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, val in parser.items(section):
                if section != "env" and key not in merged[section]:
                    raise ConfigurationError(f"unknown config key {section}.{key}")
                merged[section][key] = val
        exp = merged["experiment"]
        strat = {k: _convert(v) for k, v in merged["strategy"].items() if v.strip() != ""}
        budget = merged["budget"]

        def int_list(text):
            return [int(tok) for tok in str(text).split(",") if tok.strip() != ""]

        def opt_int(text):
            return int(text) if str(text).strip() != "" else None

        return cls(
            env=exp["env"].strip(),
            strategy=exp["strategy"].strip(),
            seeds=int_list(exp["seeds"]),
            m_values=int_list(exp["m_values"]),
            output_dir=exp["output_dir"].strip(),
            workers=int(exp["workers"]),
            eval_episodes=int(exp["eval_episodes"]),
            env_overrides={k: _convert(v) for k, v in merged["env"].items()},
            strategy_params=strat,
            train_params={k: _convert(v) for k, v in merged["train"].items()},
            m_cal=int(merged["conformal"]["m_cal"]),
            recalibrate_every=int(merged["conformal"]["recalibrate_every"]),
            max_steps=opt_int(budget["max_steps"]),
            max_queries=opt_int(budget["max_queries"]),
        )

    @classmethod
    def from_file(cls, path, overrides: list[str] | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigurationError(f"config file not found: {path}")
        for item in overrides or []:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigurationError(f"override must look like section.key=value: {item!r}")
            target, value = item.split("=", 1)
            section, key = target.split(".", 1)
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section.strip(), key.strip(), value.strip())
        return cls.from_parser(parser)

    def make_strategy_config(self) -> StrategyConfig:
        params = dict(self.strategy_params)
        params.pop("alpha", None)
        return StrategyConfig(kind=self.strategy, **params)

    def make_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.train_params)

    @property
    def alpha(self) -> float:
        return float(self.strategy_params.get("alpha", 0.93))

    def resolved_text(self) -> str:
        """Fully resolved config in the same INI format it was read from."""
        lines = []
        sections = {
            "experiment": {
                "env": self.env, "strategy": self.strategy,
                "seeds": ",".join(map(str, self.seeds)),
                "m_values": ",".join(map(str, self.m_values)),
                "output_dir": self.output_dir, "workers": self.workers,
                "eval_episodes": self.eval_episodes,
            },
            "env": self.env_overrides,
            "strategy": {"alpha": self.alpha, **self.strategy_params},
            "train": self.train_params,
            "conformal": {"m_cal": self.m_cal, "recalibrate_every": self.recalibrate_every},
            "budget": {
                "max_steps": "" if self.max_steps is None else self.max_steps,
                "max_queries": "" if self.max_queries is None else self.max_queries,
            },
        }
        for name, body in sections.items():
            lines.append(f"[{name}]")
            for key, val in body.items():
                lines.append(f"{key} = {val}")
            lines.append("")
        return "\n".join(lines)

    def snapshot(self, m: int, seed: int) -> dict:
        return {
            "env": self.env, "env_overrides": dict(self.env_overrides),
            "strategy": self.strategy, "strategy_params": dict(self.strategy_params),
            "alpha": self.alpha, "train_params": dict(self.train_params),
            "m": m, "seed": seed, "m_cal": self.m_cal,
            "recalibrate_every": self.recalibrate_every,
            "max_steps": self.max_steps, "max_queries": self.max_queries,
            "eval_episodes": self.eval_episodes,
        }


def run_basename(strategy: str, m: int, seed: int) -> str:
    return f"{strategy}_M{m}_seed{seed}"


def run_single(config: ExperimentConfig, m: int, seed: int) -> RunRecord:
    """One fully seeded run: dataset, cloning, calibration, training."""
    env = make_env(config.env, **config.env_overrides)
    expert = make_expert(env)
    train_config = config.make_train_config(seed)
    strategy = config.make_strategy_config()

    expert_mean, _ = evaluate_policy(env, expert, config.eval_episodes,
                                     np.random.SeedSequence((seed, 101)))
    dataset = build_initial_dataset(env, expert, m, np.random.SeedSequence((seed, 102)))
    policy = behavioral_cloning(dataset, train_config)
    threshold = None
    if strategy.kind == "crsail":
        threshold = calibrate_radius(
            env, policy, dataset, strategy.novelty_config(), config.alpha,
            config.m_cal, np.random.SeedSequence((seed, 103)),
        )
    budget = Budget(max_queries=config.max_queries, max_steps=config.max_steps)
    _, record = train(
        env, expert, dataset, policy, strategy, budget, train_config,
        np.random.SeedSequence((seed, 104)), threshold=threshold,
        expert_mean=expert_mean, eval_episodes=config.eval_episodes,
        recalibrate_every=config.recalibrate_every, m_cal=config.m_cal,
        run_config=config.snapshot(m, seed),
    )
    return record


def _run_and_persist(config: ExperimentConfig, m: int, seed: int) -> RunRecord:
    record = run_single(config, m, seed)
    os.makedirs(config.output_dir, exist_ok=True)
    base = os.path.join(config.output_dir, run_basename(config.strategy, m, seed))
    record.save_json(base + ".json")
    record.save_csv(base + ".csv")
    return record


def run(config: ExperimentConfig) -> tuple[list[RunRecord], list[str]]:
    """Execute the (M, seed) grid; returns completed records and failure notes."""
    jobs = [(m, seed) for m in config.m_values for seed in config.seeds]
    records, failures = [], []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {pool.submit(_run_and_persist, config, m, s): (m, s) for m, s in jobs}
            for fut, (m, s) in futures.items():
                try:
                    records.append(fut.result())
                except Exception as exc:
                    failures.append(f"M={m} seed={s}: {exc}")
    else:
        for m, s in jobs:
            try:
                records.append(_run_and_persist(config, m, s))
            except Exception as exc:
                failures.append(f"M={m} seed={s}: {exc}\n{traceback.format_exc()}")
    return records, failures


def load_records(directory) -> list[RunRecord]:
    records = []
    for name in sorted(os.listdir(directory)):
        if name.endswith(".json"):
            records.append(RunRecord.load_json(os.path.join(directory, name)))
    return records


def _mean_std(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return math.nan, math.nan
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return mean, std


def summarize(records: list[RunRecord]) -> list[dict]:
    """Per (method, M): convergence rate, queries-to-expert, total queries.

    Queries-to-expert statistics are computed over converged runs only.
    """
    if not records:
        raise ConfigurationError("no records to summarize")
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        key = (rec.config.get("strategy", "?"), rec.config.get("m", 0))
        groups.setdefault(key, []).append(rec)
    rows = []
    for (method, m) in sorted(groups):
        recs = groups[(method, m)]
        converged = [r for r in recs if r.summary.get("converged")]
        qte_mean, qte_std = _mean_std([r.summary["queries_to_expert"] for r in converged])
        tot_mean, tot_std = _mean_std([r.summary["total_queries"] for r in recs])
        rows.append({
            "method": method, "m": m, "runs": len(recs),
            "convergence_pct": 100.0 * len(converged) / len(recs),
            "queries_to_expert_mean": qte_mean, "queries_to_expert_std": qte_std,
            "total_queries_mean": tot_mean, "total_queries_std": tot_std,
        })
    return rows


def write_summary_csv(rows: list[dict], path) -> None:
    cols = list(rows[0].keys())
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in cols) + "\n")
    os.replace(tmp, path)


def format_summary_text(rows: list[dict]) -> str:
    header = f"{'method':<20}{'M':>8}{'runs':>6}{'conv%':>8}{'Q->exp':>20}{'total Q':>20}"
    lines = [header, "-" * len(header)]
    for row in rows:
        qte = f"{row['queries_to_expert_mean']:.0f}±{row['queries_to_expert_std']:.0f}" \
            if not math.isnan(row["queries_to_expert_mean"]) else "n/a"
        tot = f"{row['total_queries_mean']:.0f}±{row['total_queries_std']:.0f}"
        lines.append(
            f"{row['method']:<20}{row['m']:>8}{row['runs']:>6}"
            f"{row['convergence_pct']:>8.0f}{qte:>20}{tot:>20}"
        )
    return "\n".join(lines)


def _write_csv(path, header: list[str], rows) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    os.replace(tmp, path)


def emit_plot_data(records: list[RunRecord], outdir) -> list[str]:
    """Plot-ready CSVs: reward vs queries, queries vs steps, queries vs length.

    One file triple per (method, M) group, aggregated across seeds with mean
    and std columns.
    """
    if not records:
        raise ConfigurationError("no records to emit plot data from")
    os.makedirs(outdir, exist_ok=True)
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        key = (rec.config.get("strategy", "?"), rec.config.get("m", 0))
        groups.setdefault(key, []).append(rec)
    written = []
    for (method, m), recs in sorted(groups.items()):
        tag = f"{method}_M{m}"
        n_eps = max(len(r.episodes) for r in recs)

        def stats(getter):
            rows = []
            for j in range(n_eps):
                vals = [getter(r.episodes[j]) for r in recs if j < len(r.episodes)]
                rows.append(_mean_std(vals))
            return rows

        q = stats(lambda e: e.queries_cum)
        s = stats(lambda e: e.steps_cum)
        ev = stats(lambda e: e.eval_mean)

        path = os.path.join(outdir, f"reward_vs_queries_{tag}.csv")
        _write_csv(path, ["episode", "queries_cum_mean", "queries_cum_std",
                          "eval_mean_mean", "eval_mean_std"],
                   [(j, *q[j], *ev[j]) for j in range(n_eps)])
        written.append(path)

        path = os.path.join(outdir, f"queries_vs_steps_{tag}.csv")
        _write_csv(path, ["episode", "steps_cum_mean", "steps_cum_std",
                          "queries_cum_mean", "queries_cum_std"],
                   [(j, *s[j], *q[j]) for j in range(n_eps)])
        written.append(path)

        by_length: dict[int, list[int]] = {}
        for rec in recs:
            for e in rec.episodes:
                by_length.setdefault(e.length, []).append(e.n_queries)
        path = os.path.join(outdir, f"queries_per_episode_vs_length_{tag}.csv")
        _write_csv(path, ["episode_length", "queries_mean", "queries_std", "count"],
                   [(length, *_mean_std(vals), len(vals))
                    for length, vals in sorted(by_length.items())])
        written.append(path)
    return written
