"""Imprinting generator.

An imprinting feature is a linear threshold unit over a subset of the
observation signals, connected with +1 to signals that were active and -1
to signals that were inactive when it was created. Under the default
``"sum"`` rule it fires iff sum_j v_j o_j >= sum_j v_j; the ``"match"`` rule
fires exactly when the imprinted configuration recurs (see
``network.imprint_threshold``).
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .network import AgentStateNetwork, FeatureKind, FeatureNode, imprint_threshold
from .td import LearnerState, reset_weight
from .tester import UtilityTrace, init_utility


def should_generate(signals: np.ndarray) -> bool:
    return bool(np.any(signals))


def ltu_fires(connections: Mapping[int, int], signals: np.ndarray, rule: str = "sum") -> bool:
    total = sum(v * signals[j] for j, v in connections.items())
    return total >= imprint_threshold(connections, rule)


def select_observations(
    obs_weights: np.ndarray,
    rng: np.random.Generator | None = None,
    candidates: np.ndarray | None = None,
    noise: np.ndarray | None = None,
    noise_std: float | None = None,
) -> np.ndarray:
    """Pick the observation signals that take part in a new imprint.

    Signal i (among the k candidates) is chosen iff its share of the total
    observation weight magnitude is at least 1/k + eps_i, where eps_i is
    Gaussian with variance 1/k unless ``noise_std`` overrides it. When all
    candidate weights are zero every share is taken to be 1/k. Pass
    ``noise`` to fix the eps draws.
    """
    obs_weights = np.asarray(obs_weights, dtype=np.float64)
    if candidates is None:
        candidates = np.arange(obs_weights.shape[0])
    k = candidates.size
    if k == 0:
        return candidates
    mag = np.abs(obs_weights[candidates])
    total = mag.sum()
    share = mag / total if total > 0.0 else np.full(k, 1.0 / k)
    if noise is None:
        std = np.sqrt(1.0 / k) if noise_std is None else noise_std
        noise = rng.normal(0.0, std, k)
    return candidates[share >= 1.0 / k + noise]


def make_imprint(signals: np.ndarray, selected, rule: str = "sum") -> FeatureNode:
    """Imprint the current values of ``selected`` signals."""
    selected = [int(j) for j in selected]
    if not selected:
        raise ValueError("an imprint needs at least one selected signal")
    connections = {j: (1 if signals[j] else -1) for j in selected}
    return FeatureNode(
        FeatureKind.IMPRINTING,
        activation=1.0 if ltu_fires(connections, signals, rule) else 0.0,
        connections=connections,
    )


def add_if_new(network: AgentStateNetwork, node: FeatureNode) -> int | None:
    """Insert ``node`` unless an identical map exists or capacity is full."""
    return network.add_imprint(node.connections)


def generate_imprints(
    network: AgentStateNetwork,
    learner: LearnerState,
    utilities: UtilityTrace,
    signals: np.ndarray,
    rng: np.random.Generator,
    count: int,
    candidates: np.ndarray | None = None,
    noise_std: float | None = None,
) -> list[int]:
    """Draw ``count`` candidate imprints and keep the new, non-empty ones.

    Does nothing when no candidate signal is active or the imprinting kind
    is full. Duplicates and empty selections are dropped without retry.
    """
    added = []
    if not should_generate(signals if candidates is None else signals[candidates]):
        return added
    obs_weights = learner.w[network.obs_slice]
    for _ in range(count):
        if network.free_capacity(FeatureKind.IMPRINTING) <= 0:
            break
        selected = select_observations(obs_weights, rng, candidates, noise_std=noise_std)
        if selected.size == 0:
            continue
        node = make_imprint(signals, selected, network.imprint_rule)
        if network.has_imprint(node.connections):
            continue
        utility = init_utility(utilities, network, FeatureKind.IMPRINTING)
        slot = add_if_new(network, node)
        reset_weight(learner, slot)
        utilities.values[slot] = utility
        added.append(slot)
    return added
