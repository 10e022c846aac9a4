"""Strong-noise two-state diffusions, their spike-process limit, and
the machinery connecting the two: matrix and scalar steppers, scale
function and local-time clock, limit-law samplers, a graph metric, and
a numbered validation battery. The `spikesde` console script drives
configured experiment runs."""

from .rng import stream
from .belavkin import (
    DensityMatrix,
    BelavkinModel,
    ThermalModel,
    PositivityError,
    em_step_matrix,
    componentwise_step,
    reduce_two_state,
    random_thermal_model,
    simulate_belavkin,
)
from .twostate import TwoStateParams, Path, em_step, simulate
from .scale_time import (
    ScaleFunction,
    BrownianPath,
    TimeChange,
    MixedClock,
    InsufficientHorizon,
    ClockExhausted,
    sample_brownian,
    time_change_inverse,
    mixed_local_time_clock,
    coupled_trajectory,
)
from .spike_limit import (
    JumpChain,
    FirstSpikes,
    SpikeSet,
    LimitGraph,
    sample_Q,
    sample_first_spike,
    sample_spikes,
    limit_graph,
)
from .graph_metric import PlanarSet, graph_of, planar_from_limit, hausdorff
from .stats import (
    RateEstimate,
    occupation_functional,
    smooth,
    estimate_jump_rates,
    count_spikes,
)

__version__ = "0.1.0"

__all__ = [
    "stream",
    "DensityMatrix", "BelavkinModel", "ThermalModel", "PositivityError",
    "em_step_matrix", "componentwise_step", "reduce_two_state",
    "random_thermal_model", "simulate_belavkin",
    "TwoStateParams", "Path", "em_step", "simulate",
    "ScaleFunction", "BrownianPath", "TimeChange", "MixedClock",
    "InsufficientHorizon", "ClockExhausted", "sample_brownian",
    "time_change_inverse", "mixed_local_time_clock", "coupled_trajectory",
    "JumpChain", "FirstSpikes", "SpikeSet", "LimitGraph",
    "sample_Q", "sample_first_spike", "sample_spikes", "limit_graph",
    "PlanarSet", "graph_of", "planar_from_limit", "hausdorff",
    "RateEstimate", "occupation_functional", "smooth",
    "estimate_jump_rates", "count_spikes",
    "__version__",
]
