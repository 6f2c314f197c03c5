"""Cluster-parallel split learning over wireless networks: latency modeling,
two-timescale resource management, and toy-scale protocol training."""

from .clustering import (
    ClusterAssignment,
    GibbsParams,
    GibbsResult,
    acceptance_probability,
    cluster_exhaustive,
    evaluate_assignment,
    gibbs_cluster,
    heuristic_assignment,
    propose_swap,
    random_assignment,
)
from .cut_selection import CutLatencyTable, SaaParams, select_cut
from .env import (
    DeviceState,
    EnvSpec,
    expected_subcarrier_rate,
    heterogeneous_env,
    sample_devices,
    subcarrier_rate,
)
from .errors import ConfigError, GuardError, InfeasibleError
from .latency import (
    ComponentLatencies,
    LatencyBreakdown,
    RoundLatency,
    component_latencies,
    cpsl_round_latency,
    fl_round_latency,
    phase_latencies,
    server_latency,
    vanilla_sl_round_latency,
)
from .profiler import (
    CutProfile,
    LayerSpec,
    ModelConfig,
    enumerate_cuts,
    layer_forward_flops,
    lenet_config,
    load_layer_specs,
    load_model_config,
    profile_cut,
    profile_model,
)
from .scenario import Scenario, load_scenario
from .spectrum import SpectrumAllocation, allocate_exhaustive, allocate_greedy, allocation_total
from .training import (
    SplitModel,
    TrainerConfig,
    TrainMetrics,
    backward_split,
    build_model,
    fedavg,
    forward_device,
    forward_server_concat,
    partition_non_iid,
    run_cpsl_round,
    run_training,
)

__version__ = "0.1.0"
