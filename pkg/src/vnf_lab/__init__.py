"""Edge VNF orchestration lab: simulator, learners, benchmark harness."""

from .env import (
    VnfSpec, CostParams, PoolConfig, TrafficConfig, ParamAction,
    AllocationState, EpochTraffic, EpochMetrics, StepOutcome, StepRecord,
    EpochSummary, VnfEnv,
    resource_range, qos, resize_latency, deployment_latency, offload_latency,
    instance_latency, instance_financial, sla_cost, instance_cost,
    network_cost, agent_cost,
    sample_rate_block, sample_arrivals, sample_cloud_rate, apply_departures,
)
from .nn import Mlp, AdamState, gaussian_init, forward, forward_cached, \
    backward, input_grad, soft_update, softmax, clone
from .pat import PatConfig, PatAgent, ReplayBuffer, Transition
from .baselines import (GreedyAgent, CloudAgent, RandomAgent, DiscretizedGrid,
                        BaselineRlConfig, DdqnPairAgent, DdpgPairAgent)
from .harness import (ExperimentConfig, RunConfig, ConfigError, defaults,
                      load_config, config_from_dict, config_to_dict,
                      export_defaults, resolve_seed, build_env, build_agent,
                      run_experiment, evaluate_agent, compare, compare_configs,
                      compute_kpis, aggregate_kpis)

__version__ = "0.1.0"
