"""Benchmark harness: JSON experiment configs with strict validation,
seeded runs writing per-epoch metric CSVs, KPI aggregation, and multi-agent
comparisons on a shared traffic trace.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .env import (VnfSpec, CostParams, PoolConfig, TrafficConfig, VnfEnv,
                  EpochMetrics)
from .pat import PatConfig, PatAgent, Transition
from .baselines import (GreedyAgent, CloudAgent, RandomAgent, DiscretizedGrid,
                        BaselineRlConfig, DdqnPairAgent, DdpgPairAgent)

SEED_ENV_VAR = "VNF_LAB_SEED"

CSV_HEADER = ("epoch,network_cost,latency_per_user,financial_per_user,"
              "sla_per_user,cpu_util,mem_util,cloud_fraction,active_users,"
              "mean_reward,eps,clip_c")

# stable stream tags so every agent kind draws from its own seed lineage
AGENT_KINDS = {"pat": 1, "greedy": 2, "cloud": 3, "random": 4, "ddqn": 5, "ddpg": 6}
LEARNERS = {"pat", "ddqn", "ddpg"}

# default catalogue: ten service profiles
# (c0, cr, dc, m0, mr, dm, qos_min, qos_max, gamma_sla, mu_arr, sigma_arr)
DEFAULT_VNF_ROWS = [
    (3, 5, 4, 6, 5, 3, 35, 70, 2, 2.0, 1.5),
    (2, 3, 2, 4, 4, 2, 36, 80, 2, 2.5, 0.2),
    (1, 4, 2, 2, 3, 2, 27, 63, 2, 4.0, 0.5),
    (1, 4, 3, 1, 3, 1, 40, 90, 2, 1.0, 1.0),
    (2, 6, 2, 3, 4, 3, 20, 100, 2, 2.5, 1.0),
    (1, 2, 1, 0, 3, 2, 5, 30, 2, 2.0, 1.5),
    (2, 3, 2, 2, 5, 3, 56, 80, 2, 5.0, 1.0),
    (3, 4, 2, 3, 6, 5, 20, 53, 2, 2.0, 1.0),
    (1, 4, 3, 4, 4, 2, 40, 90, 2, 3.0, 0.5),
    (2, 6, 2, 3, 4, 3, 20, 100, 2, 2.0, 1.0),
]


class ConfigError(ValueError):
    """Invalid experiment document; the message names the offending path."""


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    total_epochs: int = 1000
    eval_epochs: int = 100
    metrics_every: int = 1
    checkpoint_path: str | None = None
    smoothing_window: int = 100

    def __post_init__(self):
        if self.total_epochs < 1 or self.eval_epochs < 0:
            raise ValueError("run.total_epochs must be >= 1 and run.eval_epochs >= 0")
        if self.metrics_every < 1 or self.smoothing_window < 1:
            raise ValueError("run.metrics_every and run.smoothing_window must be >= 1")


@dataclass
class ExperimentConfig:
    pool: PoolConfig
    vnfs: list
    costs: CostParams
    traffic: TrafficConfig
    agent: dict
    run: RunConfig


def default_vnfs(count: int | None = None) -> list:
    rows = DEFAULT_VNF_ROWS if count is None else DEFAULT_VNF_ROWS[:count]
    return [VnfSpec(i, *row) for i, row in enumerate(rows)]


def default_agent_config(kind: str) -> dict:
    if kind not in AGENT_KINDS:
        raise ConfigError(f"agent.kind: unknown agent {kind!r}")
    if kind == "pat":
        return {"kind": "pat", **asdict(PatConfig())}
    if kind in ("ddqn", "ddpg"):
        return {"kind": kind, **asdict(BaselineRlConfig())}
    return {"kind": kind}


def defaults() -> ExperimentConfig:
    """The shipped experiment: full pool, catalogue and learner tables."""
    return ExperimentConfig(
        pool=PoolConfig(),
        vnfs=default_vnfs(),
        costs=CostParams(),
        traffic=TrafficConfig(),
        agent=default_agent_config("pat"),
        run=RunConfig(),
    )


# ---------------------------------------------------------------------------
# document <-> config

def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "pool": asdict(cfg.pool),
        "vnfs": [asdict(v) for v in cfg.vnfs],
        "costs": asdict(cfg.costs),
        "traffic": asdict(cfg.traffic),
        "agent": dict(cfg.agent),
        "run": asdict(cfg.run),
    }


def _build_section(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    known = {"pool", "vnfs", "costs", "traffic", "agent", "run"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{key}: unknown key")
    pool = _build_section(PoolConfig, doc.get("pool", {}), "pool")
    raw_vnfs = doc.get("vnfs")
    if raw_vnfs is None:
        vnfs = default_vnfs(pool.n_vnfs)
        if len(vnfs) != pool.n_vnfs:
            raise ConfigError("pool.n_vnfs: no default rows beyond the shipped catalogue")
    else:
        if not isinstance(raw_vnfs, list) or not raw_vnfs:
            raise ConfigError("vnfs: expected a non-empty array")
        vnfs = [_build_section(VnfSpec, v, f"vnfs[{i}]") for i, v in enumerate(raw_vnfs)]
    if len(vnfs) != pool.n_vnfs:
        raise ConfigError("vnfs: length must equal pool.n_vnfs")
    if [v.id for v in vnfs] != list(range(pool.n_vnfs)):
        raise ConfigError("vnfs: ids must be 0..n_vnfs-1 in order")
    costs = _build_section(CostParams, doc.get("costs", {}), "costs")
    traffic = _build_section(TrafficConfig, doc.get("traffic", {}), "traffic")
    agent_doc = doc.get("agent", {"kind": "pat"})
    if not isinstance(agent_doc, dict):
        raise ConfigError("agent: expected an object")
    kind = agent_doc.get("kind", "pat")
    base = default_agent_config(kind)
    for key in agent_doc:
        if key not in base:
            raise ConfigError(f"agent.{key}: unknown key for agent {kind!r}")
    agent = {**base, **agent_doc}
    _validate_agent(agent)
    run = _build_section(RunConfig, doc.get("run", {}), "run")
    return ExperimentConfig(pool, vnfs, costs, traffic, agent, run)


def _validate_agent(agent: dict):
    kind = agent["kind"]
    rest = {k: v for k, v in agent.items() if k != "kind"}
    try:
        if kind == "pat":
            PatConfig(**rest)
        elif kind in ("ddqn", "ddpg"):
            BaselineRlConfig(**rest)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"agent: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(doc)


def export_defaults() -> str:
    return json.dumps(config_to_dict(defaults()), indent=2) + "\n"


def resolve_seed(cfg: ExperimentConfig, cli_seed: int | None = None) -> int:
    """Priority: explicit argument, config value, environment fallback, zero."""
    if cli_seed is not None:
        return int(cli_seed)
    if cfg.run.seed is not None:
        return int(cfg.run.seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR}: not an integer ({env!r})") from exc
    return 0


# ---------------------------------------------------------------------------
# wiring

def build_env(cfg: ExperimentConfig, seed: int, stream: int = 0) -> VnfEnv:
    """stream 0 is the training trace, stream 1 the shared evaluation trace."""
    agent = cfg.agent
    beta = float(agent.get("beta", 0.2))
    gamma_max = float(agent.get("gamma_max", 100.0))
    return VnfEnv(cfg.pool, cfg.vnfs, cfg.costs, cfg.traffic,
                  seed=np.random.SeedSequence([seed, stream]),
                  beta=beta, gamma_max=gamma_max)


def build_agent(cfg: ExperimentConfig, env: VnfEnv, seed: int):
    agent = cfg.agent
    kind = agent["kind"]
    agent_seed = np.random.SeedSequence([seed, 2, AGENT_KINDS[kind]])
    rest = {k: v for k, v in agent.items() if k != "kind"}
    scale = (cfg.pool.rho_max, cfg.pool.eta_max)
    if kind == "pat":
        return PatAgent(env.feature_length, env.n_targets, scale,
                        PatConfig(**rest), seed=agent_seed)
    if kind == "greedy":
        return GreedyAgent(cfg.pool, cfg.vnfs)
    if kind == "cloud":
        return CloudAgent(cfg.pool)
    if kind == "random":
        return RandomAgent(cfg.pool, seed=agent_seed)
    if kind == "ddqn":
        bcfg = BaselineRlConfig(**rest)
        grid = DiscretizedGrid(bcfg.resolution, cfg.pool.rho_max, cfg.pool.eta_max)
        return DdqnPairAgent(env.feature_length, env.n_targets, grid, bcfg, seed=agent_seed)
    if kind == "ddpg":
        return DdpgPairAgent(env.feature_length, env.n_targets, scale,
                             BaselineRlConfig(**rest), seed=agent_seed)
    raise ConfigError(f"agent.kind: unknown agent {kind!r}")


# ---------------------------------------------------------------------------
# runs

def format_float(x: float) -> str:
    return f"{x:.9g}"


def metrics_row(m: EpochMetrics) -> str:
    return ",".join([
        str(m.epoch),
        format_float(m.network_cost),
        format_float(m.latency_per_user),
        format_float(m.financial_per_user),
        format_float(m.sla_per_user),
        format_float(m.cpu_util),
        format_float(m.mem_util),
        format_float(m.cloud_fraction),
        str(m.active_users),
        format_float(m.mean_reward),
        format_float(m.eps),
        format_float(m.clip_c),
    ])


def _drive(env: VnfEnv, agent, epochs: int, learner: bool,
           updates_per_epoch: int = 1, sink=None, metrics_every: int = 1):
    """Run epochs, feeding transitions/updates to a learner; returns metrics."""
    rows = []
    for _ in range(epochs):
        summary = env.advance_epoch(agent.select)
        if learner:
            for rec in summary.records:
                agent.store(Transition(rec.state, rec.action.target,
                                       np.array([rec.action.d_cpu, rec.action.d_mem]),
                                       -rec.cost_psi, rec.next_state))
            for _ in range(updates_per_epoch):
                agent.train_step()
            summary.metrics.eps = agent.eps
            summary.metrics.clip_c = agent.clip_c
        rows.append(summary.metrics)
        if sink is not None and summary.metrics.epoch % metrics_every == 0:
            sink.write(metrics_row(summary.metrics) + "\n")
            sink.flush()
    return rows


def compute_kpis(rows) -> dict:
    """Epoch means of the headline metrics."""
    if not rows:
        return {}
    keys = ("network_cost", "latency_per_user", "financial_per_user",
            "sla_per_user", "cpu_util", "mem_util", "cloud_fraction",
            "active_users", "mean_reward")
    return {k: float(np.mean([getattr(m, k) for m in rows])) for k in keys}


def aggregate_kpis(per_seed: list) -> dict:
    """Across-seed mean and standard deviation per KPI."""
    out = {}
    for key in per_seed[0]:
        vals = np.array([d[key] for d in per_seed])
        out[key] = (float(vals.mean()), float(vals.std()))
    return out


@dataclass
class RunResult:
    seed: int
    train_rows: list
    eval_rows: list
    train_kpis: dict
    eval_kpis: dict
    metrics_path: str | None
    checkpoint_path: str | None


def run_experiment(cfg: ExperimentConfig, out_dir=None, seed=None,
                   quiet: bool = True, log=print) -> RunResult:
    """Train (when the agent learns) and evaluate one agent on seeded traces.

    Writes metrics.csv, summary.json and checkpoint.npz under out_dir when
    given; rows are flushed as they are produced."""
    seed = resolve_seed(cfg, seed)
    kind = cfg.agent["kind"]
    learner = kind in LEARNERS
    env = build_env(cfg, seed, stream=0)
    agent = build_agent(cfg, env, seed)
    updates = int(cfg.agent.get("updates_per_epoch", 1))

    metrics_path = checkpoint_path = None
    sink = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        sink = open(metrics_path, "w")
        sink.write(CSV_HEADER + "\n")
    try:
        train_rows = _drive(env, agent, cfg.run.total_epochs, learner, updates,
                            sink, cfg.run.metrics_every)
    finally:
        if sink is not None:
            sink.close()
    if not quiet:
        log(f"[{kind}] seed {seed}: trained {cfg.run.total_epochs} epochs")

    eval_rows = []
    if cfg.run.eval_epochs > 0:
        eval_env = build_env(cfg, seed, stream=1)
        if hasattr(agent, "set_eval"):
            agent.set_eval(True)
        eval_rows = _drive(eval_env, agent, cfg.run.eval_epochs, learner=False)
        if hasattr(agent, "set_eval"):
            agent.set_eval(False)

    result = RunResult(seed, train_rows, eval_rows,
                       compute_kpis(train_rows), compute_kpis(eval_rows),
                       metrics_path, None)
    if out_dir is not None:
        target = cfg.run.checkpoint_path or os.path.join(out_dir, "checkpoint.npz")
        if hasattr(agent, "save"):
            agent.save(target)
            result.checkpoint_path = target
        summary = {
            "agent": kind,
            "seed": seed,
            "total_epochs": cfg.run.total_epochs,
            "eval_epochs": cfg.run.eval_epochs,
            "smoothing_window": cfg.run.smoothing_window,
            "train_kpis": result.train_kpis,
            "eval_kpis": result.eval_kpis,
            "config": config_to_dict(cfg),
        }
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return result


def evaluate_agent(cfg: ExperimentConfig, agent, seed: int, epochs: int):
    """Exploration-free rollout on the shared evaluation trace."""
    env = build_env(cfg, seed, stream=1)
    if hasattr(agent, "set_eval"):
        agent.set_eval(True)
    rows = _drive(env, agent, epochs, learner=False)
    if hasattr(agent, "set_eval"):
        agent.set_eval(False)
    return rows


@dataclass
class ComparisonResult:
    kpis: dict        # agent -> {kpi: (mean, std)}
    per_seed: dict    # agent -> [per-seed kpi dicts]
    long_rows: list   # (agent, seed, epoch, metric, value)


def compare(cfg: ExperimentConfig, agent_names, seeds=None, out_dir=None,
            quiet: bool = True, log=print) -> ComparisonResult:
    """Train each learner, then evaluate every agent on the identical traffic
    trace per seed, and tabulate KPI means across seeds."""
    names = list(agent_names)
    if not names:
        raise ConfigError("compare: need at least one agent")
    seeds = [resolve_seed(cfg)] if seeds is None else [int(s) for s in seeds]
    per_seed = {name: [] for name in names}
    long_rows = []
    long_keys = ("network_cost", "latency_per_user", "financial_per_user",
                 "sla_per_user", "cpu_util", "mem_util", "cloud_fraction",
                 "mean_reward")
    for seed in seeds:
        for name in names:
            if cfg.agent.get("kind") == name:
                agent_doc = dict(cfg.agent)
            else:
                agent_doc = default_agent_config(name)
            acfg = dataclasses.replace(cfg, agent=agent_doc)
            learner = name in LEARNERS
            env = build_env(acfg, seed, stream=0)
            agent = build_agent(acfg, env, seed)
            if learner:
                _drive(env, agent, acfg.run.total_epochs, True,
                       int(acfg.agent.get("updates_per_epoch", 1)))
            rows = evaluate_agent(acfg, agent, seed, max(acfg.run.eval_epochs, 1))
            per_seed[name].append(compute_kpis(rows))
            for m in rows:
                for key in long_keys:
                    long_rows.append((name, seed, m.epoch, key, getattr(m, key)))
            if not quiet:
                log(f"[compare] seed {seed} agent {name}: done")
    kpis = {name: aggregate_kpis(per_seed[name]) for name in names}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "compare_kpis.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent", "kpi", "mean", "std"])
            for name in names:
                for key, (mean, std) in kpis[name].items():
                    w.writerow([name, key, format_float(mean), format_float(std)])
        with open(os.path.join(out_dir, "compare_long.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent", "seed", "epoch", "metric", "value"])
            for row in long_rows:
                w.writerow([row[0], row[1], row[2], row[3], format_float(row[4])])
    return ComparisonResult(kpis, per_seed, long_rows)


def compare_configs(cfgs: list, agent_names, **kwargs) -> ComparisonResult:
    """Variant taking one config per agent; refuses mismatched environments."""
    names = list(agent_names)
    if len(cfgs) != len(names):
        raise ConfigError("compare: one config per agent expected")
    base = cfgs[0]
    for other in cfgs[1:]:
        same = (other.pool == base.pool and other.vnfs == base.vnfs
                and other.costs == base.costs and other.traffic == base.traffic
                and other.run == base.run)
        if not same:
            raise ConfigError("compare: configs disagree outside the agent section")
    return compare(base, names, **kwargs)
