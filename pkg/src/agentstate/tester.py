"""Feature tester: weight-magnitude utilities and pruning selection."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .network import AgentStateNetwork, FeatureKind


class UtilityTrace:
    """Exponential moving average of |w_i| for every feature slot.

    Dead slots hold 0. Observation and bias weights have no utility since
    they are never pruned.
    """

    def __init__(self, size: int, decay: float = 0.999):
        if not 0.0 < decay < 1.0:
            raise ValueError(f"utility decay must be in (0, 1), got {decay}")
        self.decay = decay
        self.values = np.zeros(size)


def update_utilities(utilities: UtilityTrace, learner, network: AgentStateNetwork) -> None:
    if network.n:
        _kernels.utility_update(utilities.values, learner.w, network.alive, utilities.decay)


def init_utility(utilities: UtilityTrace, network: AgentStateNetwork, kind: FeatureKind) -> float:
    """Median utility over live features of ``kind`` (0 when there are none).

    Call before the new feature is marked live.
    """
    sl = network.kind_slots(kind)
    return float(_kernels.live_median(utilities.values, network.alive, sl.start, sl.stop))


def select_prunable(
    network: AgentStateNetwork,
    utilities: UtilityTrace,
    kind: FeatureKind,
    keep_fraction: float = 0.5,
    count: int = 2,
) -> list[int]:
    """Slots to delete for one kind, lowest utility first.

    Only runs when the kind is at capacity. Candidates are the bottom
    ``1 - keep_fraction`` of live features ranked by utility (ties: older
    first); any feature that is the source of a live deep trace is skipped.
    """
    cap = network.capacity(kind)
    if cap == 0 or network.count(kind) < cap or count <= 0:
        return []
    sl = network.kind_slots(kind)
    chosen = _kernels.prunable(
        utilities.values, network.birth, network.alive, network.source_refcount,
        sl.start, sl.stop, float(keep_fraction), int(count),
    )
    return chosen.tolist()
