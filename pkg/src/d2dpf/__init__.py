"""Proportional-fair scheduling for SC-FDMA uplinks with underlay D2D pairs."""

from .model import (
    Allocation,
    CueUser,
    D2dPair,
    GainTensor,
    NetworkState,
    RateVector,
    StructuralError,
    Violation,
    pf_utility,
    update_avg_rates,
    validate_allocation,
)
from .scheduler import (
    SchedulerConfig,
    ScheduleOutcome,
    complexity_estimate,
    count_wf_calls,
    optimal_pf,
    phpfs_schedule,
)
from .waterfill import (
    BLOCKED,
    NoFeasibleChannel,
    StairProfile,
    WaterfillResult,
    adjacent_waterfill,
    best_start,
    capped_rate_adjust,
    geometric_waterfill,
)

__version__ = "0.1.0"
