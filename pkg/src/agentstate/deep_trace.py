"""Deep-trace generator.

A deep trace follows s_i <- decay * s_i + (1 - decay) * x_j for a source j
in x_t. Sources are drawn with probability proportional to the magnitude of
their outgoing prediction weight.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .network import AgentStateNetwork, FeatureKind
from .td import LearnerState, reset_weight
from .tester import UtilityTrace, init_utility

DECAY_BOUNDS = (0.01, 0.99)


def sample_decay(rng: np.random.Generator, bounds: tuple[float, float] = DECAY_BOUNDS) -> float:
    low, high = bounds
    while True:
        decay = low + (high - low) * rng.random()
        if low < decay < high:
            return decay


def source_candidates(network: AgentStateNetwork) -> np.ndarray:
    """Indices of x_t a new trace may follow: live features and all observations."""
    return np.concatenate((network.live_slots(), np.arange(network.n, network.input_size)))


def select_source(learner: LearnerState, network: AgentStateNetwork, rng: np.random.Generator) -> int | None:
    """Weight-magnitude-proportional draw over candidates; uniform if all weights are 0.

    Returns None when there is nothing to trace.
    """
    u = rng.random()
    j = _kernels.weighted_pick(learner.w, network.alive, network.n, network.input_size, u)
    return None if j < 0 else int(j)


def generate_deep_traces(
    network: AgentStateNetwork,
    learner: LearnerState,
    utilities: UtilityTrace,
    rng: np.random.Generator,
    count: int,
    decay_bounds: tuple[float, float] = DECAY_BOUNDS,
) -> list[int]:
    """Add up to ``count`` deep traces, clamped to free capacity.

    New traces start with activation 0, zeroed learner state and the median
    utility of the existing deep traces. Returns the new slots.
    """
    added = []
    for _ in range(min(count, network.free_capacity(FeatureKind.DEEP_TRACE))):
        source = select_source(learner, network, rng)
        if source is None:
            break
        decay = sample_decay(rng, decay_bounds)
        utility = init_utility(utilities, network, FeatureKind.DEEP_TRACE)
        slot = network.add_deep_trace(source, decay)
        reset_weight(learner, slot)
        utilities.values[slot] = utility
        added.append(slot)
    return added
