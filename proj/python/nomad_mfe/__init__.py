"""Mean field equilibrium solver for nomadic agents competing for resources."""

from ._core import (
    EventProbs,
    ModelParams,
    NumericalError,
    RewardFn,
    ThresholdPolicy,
    bounds,
    calibrate_kappa,
    evaluate,
    event_probs,
    g_bound,
    mean_occupancy,
    reward_eval,
    search,
    simulate,
    stationary,
    switch_probability,
    total_variation,
    value_iterate,
)

__all__ = [
    "EventProbs",
    "ModelParams",
    "NumericalError",
    "RewardFn",
    "ThresholdPolicy",
    "bounds",
    "calibrate_kappa",
    "evaluate",
    "event_probs",
    "g_bound",
    "mean_occupancy",
    "reward_eval",
    "search",
    "simulate",
    "stationary",
    "switch_probability",
    "total_variation",
    "value_iterate",
]
