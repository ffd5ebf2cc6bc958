"""Agent-state data model and forward pass.

Layout conventions used throughout the package (0-based):

    x_t = [s_{t-1} (n), o_t (m)]            input to the state update
    f_t = [s_t (n), o_t (m), bias (0|1)]    input to the prediction

``n`` is the total feature capacity. Feature slots ``0 .. c_d-1`` hold deep
traces and ``c_d .. n-1`` hold imprinting features. Slots are recycled in
place, so a dead slot simply has activation 0 and no outgoing weight. The
action segment is always empty.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ContractViolation, InvariantViolation


class FeatureKind(str, Enum):
    DEEP_TRACE = "deep_trace"
    IMPRINTING = "imprinting"


@dataclass(frozen=True)
class ObservationVector:
    """Binary stimulus signals for one step plus the scalar cumulant."""

    signals: np.ndarray
    cumulant: float = 0.0

    def __post_init__(self):
        signals = np.asarray(self.signals, dtype=np.float64)
        if signals.ndim != 1:
            raise ContractViolation("signals must be a 1-d vector")
        if not np.all((signals == 0.0) | (signals == 1.0)):
            raise ContractViolation("observation signals must be 0 or 1")
        if not self.cumulant >= 0.0:
            raise ContractViolation("cumulant must be non-negative")
        signals.flags.writeable = False
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "cumulant", float(self.cumulant))

    def __len__(self) -> int:
        return self.signals.shape[0]

    @classmethod
    def trusted(cls, signals: np.ndarray, cumulant: float) -> "ObservationVector":
        """Skip validation; for float64 0/1 vectors built by the environments."""
        obs = object.__new__(cls)
        object.__setattr__(obs, "signals", signals)
        object.__setattr__(obs, "cumulant", cumulant)
        return obs


@dataclass
class FeatureNode:
    """A read-only view of one live feature.

    Deep traces carry ``source_index`` (into x_t) and ``decay``; imprinting
    features carry ``connections`` mapping observation index to +1 or -1.
    """

    kind: FeatureKind
    activation: float = 0.0
    source_index: int | None = None
    decay: float | None = None
    connections: dict[int, int] = field(default_factory=dict)
    slot: int | None = None

    def to_dict(self) -> dict:
        d = {"slot": self.slot, "kind": self.kind.value, "activation": self.activation}
        if self.kind is FeatureKind.DEEP_TRACE:
            d.update(source_index=self.source_index, decay=self.decay)
        else:
            d["connections"] = {str(k): v for k, v in sorted(self.connections.items())}
        return d


IMPRINT_RULES = ("sum", "match")


def imprint_threshold(connections: Mapping[int, int], rule: str = "sum") -> float:
    """Firing threshold of an imprinting LTU.

    ``"sum"`` uses sum_j v_j, so the unit fires iff sum_j v_j o_j >= sum_j v_j.
    With +1/-1 connections that holds whenever at least as many of the
    negatively connected signals are off as positively connected ones are,
    e.g. {o1: +1, o2: -1} fires on (1, 0), (0, 0) and (1, 1).
    ``"match"`` uses the number of +1 connections, so the unit fires iff the
    imprinted configuration recurs exactly.
    """
    if rule == "sum":
        return float(sum(connections.values()))
    if rule == "match":
        return float(sum(1 for v in connections.values() if v > 0))
    raise ContractViolation(f"imprint rule must be one of {IMPRINT_RULES}")


def imprint_key(connections: Mapping[int, int]) -> tuple:
    """Canonical hashable form of a connection map, used for duplicate checks."""
    return tuple(sorted((int(k), int(v)) for k, v in connections.items()))


class AgentStateNetwork:
    """Fixed-capacity set of generated features with sparse recurrent weights.

    Deep-trace rows of the recurrent matrix V are stored as ``(decay,
    source)`` pairs (V[i, i] = decay, V[i, source] = 1 - decay). Imprinting
    rows are stored densely over the observation segment only since they
    never read features.
    """

    def __init__(
        self,
        n_obs: int,
        capacity_deep: int = 0,
        capacity_imprint: int = 0,
        bias: bool = True,
        debug: bool = False,
        imprint_rule: str = "sum",
    ):
        if n_obs < 1:
            raise ContractViolation("need at least one observation signal")
        if capacity_deep < 0 or capacity_imprint < 0:
            raise ContractViolation("capacities must be non-negative")
        self.m = int(n_obs)
        self.capacity_deep = int(capacity_deep)
        self.capacity_imprint = int(capacity_imprint)
        self.bias_enabled = bool(bias)
        self.debug = debug
        if imprint_rule not in IMPRINT_RULES:
            raise ContractViolation(f"imprint_rule must be one of {IMPRINT_RULES}")
        self.imprint_rule = imprint_rule
        self.n = self.capacity_deep + self.capacity_imprint

        cd, ci, n = self.capacity_deep, self.capacity_imprint, self.n
        self.decay = np.zeros(cd)
        self._source_weight = np.zeros(cd)  # 1 - decay, 0 for dead slots
        self.source = np.full(cd, -1, dtype=np.int64)
        self._gather = np.zeros(cd, dtype=np.int64)  # source with dead slots mapped to 0
        self.connections = np.zeros((ci, self.m))
        self.threshold = np.ones(ci)  # dead rows: 0 >= 1 never fires
        self.alive = np.zeros(n, dtype=bool)
        self.state = np.zeros(n)
        self.source_refcount = np.zeros(n, dtype=np.int64)
        self.birth = np.zeros(n, dtype=np.int64)
        self._births = 0
        self._imprint_keys: dict[tuple, int] = {}
        self.n_deep = 0
        self.n_imprint = 0
        self._free = {
            FeatureKind.DEEP_TRACE: list(range(cd)),
            FeatureKind.IMPRINTING: list(range(cd, n)),
        }

    # -- layout -------------------------------------------------------------

    @property
    def input_size(self) -> int:
        return self.n + self.m

    @property
    def prediction_size(self) -> int:
        return self.n + self.m + int(self.bias_enabled)

    @property
    def obs_slice(self) -> slice:
        """Observation segment, identical in x_t and f_t."""
        return slice(self.n, self.n + self.m)

    def kind_of(self, slot: int) -> FeatureKind:
        if not 0 <= slot < self.n:
            raise ContractViolation(f"slot {slot} outside feature segment")
        return FeatureKind.DEEP_TRACE if slot < self.capacity_deep else FeatureKind.IMPRINTING

    def kind_slots(self, kind: FeatureKind) -> slice:
        if kind is FeatureKind.DEEP_TRACE:
            return slice(0, self.capacity_deep)
        return slice(self.capacity_deep, self.n)

    def capacity(self, kind: FeatureKind) -> int:
        return self.capacity_deep if kind is FeatureKind.DEEP_TRACE else self.capacity_imprint

    def count(self, kind: FeatureKind) -> int:
        return self.n_deep if kind is FeatureKind.DEEP_TRACE else self.n_imprint

    def free_capacity(self, kind: FeatureKind) -> int:
        return self.capacity(kind) - self.count(kind)

    def live_slots(self, kind: FeatureKind | None = None) -> np.ndarray:
        if kind is None:
            return np.flatnonzero(self.alive)
        sl = self.kind_slots(kind)
        return np.flatnonzero(self.alive[sl]) + sl.start

    def _free_slot(self, kind: FeatureKind) -> int | None:
        free = self._free[kind]
        return heapq.heappop(free) if free else None

    # -- mutation -----------------------------------------------------------

    def add_deep_trace(self, source: int, decay: float) -> int | None:
        """Wire a new deep trace; returns its slot or None when full."""
        if not 0.0 < decay < 1.0:
            raise ContractViolation(f"decay {decay} not in (0, 1)")
        if not 0 <= source < self.input_size:
            raise ContractViolation(f"source {source} outside x_t")
        if source < self.n and not self.alive[source]:
            raise ContractViolation(f"source slot {source} is not a live feature")
        slot = self._free_slot(FeatureKind.DEEP_TRACE)
        if slot is None:
            return None
        self.decay[slot] = decay
        self._source_weight[slot] = 1.0 - decay
        self.source[slot] = source
        self._gather[slot] = source
        if source < self.n:
            self.source_refcount[source] += 1
        self._activate(slot)
        self.n_deep += 1
        return slot

    def add_imprint(self, connections: Mapping[int, int]) -> int | None:
        """Add an imprinting feature unless full or an identical map exists."""
        key = imprint_key(connections)
        if not key:
            raise ContractViolation("imprinting feature needs at least one connection")
        if key in self._imprint_keys:
            return None
        slot = self._free_slot(FeatureKind.IMPRINTING)
        if slot is None:
            return None
        row = slot - self.capacity_deep
        self.connections[row] = 0.0
        for j, v in key:
            if v not in (1, -1) or not 0 <= j < self.m:
                raise ContractViolation(f"bad connection {j}: {v}")
            self.connections[row, j] = v
        self.threshold[row] = imprint_threshold(connections, self.imprint_rule)
        self._imprint_keys[key] = slot
        self._activate(slot)
        self.n_imprint += 1
        return slot

    def _activate(self, slot: int) -> None:
        self.alive[slot] = True
        self.state[slot] = 0.0
        self.birth[slot] = self._births
        self._births += 1

    def remove(self, slot: int) -> None:
        """Delete a live feature. Protected features (sources) cannot be removed."""
        if not self.alive[slot]:
            raise ContractViolation(f"slot {slot} is not live")
        if self.source_refcount[slot] > 0:
            raise InvariantViolation(f"slot {slot} is the source of a live deep trace")
        if slot < self.capacity_deep:
            src = int(self.source[slot])
            if src < self.n:
                self.source_refcount[src] -= 1
            self.decay[slot] = 0.0
            self._source_weight[slot] = 0.0
            self.source[slot] = -1
            self._gather[slot] = 0
            self.n_deep -= 1
        else:
            row = slot - self.capacity_deep
            del self._imprint_keys[imprint_key(self.imprint_connections(slot))]
            self.connections[row] = 0.0
            self.threshold[row] = 1.0
            self.n_imprint -= 1
        self.alive[slot] = False
        self.state[slot] = 0.0
        heapq.heappush(self._free[self.kind_of(slot)], slot)

    # -- views --------------------------------------------------------------

    def imprint_connections(self, slot: int) -> dict[int, int]:
        row = self.connections[slot - self.capacity_deep]
        idx = np.flatnonzero(row)
        return {int(j): int(row[j]) for j in idx}

    def node(self, slot: int) -> FeatureNode:
        if not self.alive[slot]:
            raise ContractViolation(f"slot {slot} is not live")
        kind = self.kind_of(slot)
        act = float(self.state[slot])
        if kind is FeatureKind.DEEP_TRACE:
            return FeatureNode(kind, act, int(self.source[slot]), float(self.decay[slot]), slot=slot)
        return FeatureNode(kind, act, connections=self.imprint_connections(slot), slot=slot)

    def features(self) -> list[FeatureNode]:
        return [self.node(int(i)) for i in self.live_slots()]

    def has_imprint(self, connections: Mapping[int, int]) -> bool:
        return imprint_key(connections) in self._imprint_keys

    def snapshot(self) -> dict:
        return {
            "n_obs": self.m,
            "capacity_deep": self.capacity_deep,
            "capacity_imprint": self.capacity_imprint,
            "bias": self.bias_enabled,
            "imprint_rule": self.imprint_rule,
            "features": [f.to_dict() for f in self.features()],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.snapshot(), **kwargs)

    def check_invariants(self) -> None:
        """Full consistency audit. Raises InvariantViolation."""
        cd, n = self.capacity_deep, self.n
        if self.n_deep != int(self.alive[:cd].sum()) or self.n_deep > cd:
            raise InvariantViolation("deep-trace count out of sync")
        if self.n_imprint != int(self.alive[cd:].sum()) or self.n_imprint > self.capacity_imprint:
            raise InvariantViolation("imprinting count out of sync")
        live = np.flatnonzero(self.alive[:cd])
        src = self.source[live]
        if np.any(src < 0) or np.any(src >= self.input_size):
            raise InvariantViolation("deep trace without a valid source")
        feat_src = src[src < n]
        if not np.all(self.alive[feat_src]):
            raise InvariantViolation("deep trace with dangling source")
        if not np.array_equal(np.bincount(feat_src, minlength=n), self.source_refcount):
            raise InvariantViolation("source_refcount out of sync")
        if np.any(np.abs(self.decay[live] + self._source_weight[live] - 1.0) > 1e-15):
            raise InvariantViolation("deep-trace row does not sum to 1")
        rows = self.connections[self.alive[cd:]]
        if len(self._imprint_keys) != self.n_imprint or np.unique(rows, axis=0).shape[0] != rows.shape[0]:
            raise InvariantViolation("duplicate or stale imprinting maps")
        if np.any(self.state[~self.alive] != 0.0):
            raise InvariantViolation("dead slot with nonzero activation")


def build_input(
    prev_state: Sequence[float] | np.ndarray,
    obs: ObservationVector | Sequence[float] | np.ndarray,
    network: AgentStateNetwork | None = None,
) -> np.ndarray:
    """x_t = [s_{t-1}, o_t] (the action segment is empty)."""
    signals = obs.signals if isinstance(obs, ObservationVector) else obs
    prev_state = np.asarray(prev_state, dtype=np.float64)
    signals = np.asarray(signals, dtype=np.float64)
    if network is not None and (prev_state.shape[0] != network.n or signals.shape[0] != network.m):
        raise ContractViolation(
            f"expected state of length {network.n} and {network.m} signals, "
            f"got {prev_state.shape[0]} and {signals.shape[0]}"
        )
    return np.concatenate((prev_state, signals))


def compute_state(network: AgentStateNetwork, x: np.ndarray) -> np.ndarray:
    """Advance every feature one step and return s_t.

    Deep traces read their source from ``x`` (features at their previous
    value, observations at the current step), so evaluation order is
    irrelevant. Imprinting features fire iff sum_j V_ij o_j >= sum_j V_ij.
    """
    if x.shape[0] != network.input_size:
        raise ContractViolation(f"input length {x.shape[0]} != {network.input_size}")
    cd, n = network.capacity_deep, network.n
    if network.debug:
        live = network.alive[:cd]
        src = network.source[live]
        feat_src = src[src < n]
        if np.any(src < 0) or not np.all(network.alive[feat_src]):
            raise InvariantViolation("deep trace with dangling source")
    s = np.empty(n)
    _kernels.forward_state(
        network.decay, network._source_weight, network._gather,
        network.connections, network.threshold, x, n, s,
    )
    network.state = s
    return s


def build_prediction_input(
    state: np.ndarray, obs: ObservationVector | np.ndarray, bias: bool = True
) -> np.ndarray:
    """f_t = [s_t, o_t, 1?]."""
    signals = obs.signals if isinstance(obs, ObservationVector) else obs
    parts = (state, signals, np.ones(1)) if bias else (state, signals)
    return np.concatenate(parts)


def predict(weights, f: np.ndarray) -> float:
    """Linear prediction y = f . w. ``weights`` may be a LearnerState or an array."""
    w = getattr(weights, "w", weights)
    w = np.asarray(w, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if w.shape != f.shape:
        raise ContractViolation(f"weight length {w.shape} != feature length {f.shape}")
    return float(_kernels.dot(f, w))
