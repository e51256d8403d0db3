"""Gravity-model assignment of agents to environmental components.

Each agent independently draws one component per kind, with probability
proportional to

    (1 / distance) * f(capacity),

where distance is the great-circle distance from the agent's household to
the component (floored to avoid division by zero) and ``f`` is a
nondecreasing step function of the component's capacity. Capacity acts as
attractiveness only; there is no hard cap on how many agents a component
receives. A utilization table comes out of diagnostics instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .geometry import great_circle_km
from .ingest import EnvironmentalComponentSet

__all__ = [
    "GravityParams",
    "Assignment",
    "step_capacity",
    "assignment_probabilities",
    "gravity_assign",
    "gravity_assign_frame",
]

DEFAULT_BREAKPOINTS = ((0.0, 1.0), (50.0, 2.0), (250.0, 3.0), (1000.0, 4.0))


@dataclass(frozen=True)
class GravityParams:
    """Step-function attractiveness plus a minimum-distance floor in km."""

    breakpoints: tuple[tuple[float, float], ...] = DEFAULT_BREAKPOINTS
    distance_floor_km: float = 0.01

    def __post_init__(self):
        if not self.breakpoints:
            raise ValueError("at least one capacity breakpoint is required")
        bp = tuple((float(t), float(m)) for t, m in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        thresholds = [t for t, _ in bp]
        multipliers = [m for _, m in bp]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("capacity thresholds must strictly increase")
        if any(m <= 0 for m in multipliers):
            raise ValueError("multipliers must be positive")
        if any(b < a for a, b in zip(multipliers, multipliers[1:])):
            raise ValueError("multipliers must be nondecreasing")
        if not self.distance_floor_km > 0:
            raise ValueError("distance floor must be positive")

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([t for t, _ in self.breakpoints])

    @property
    def multipliers(self) -> np.ndarray:
        return np.array([m for _, m in self.breakpoints])


@dataclass(frozen=True)
class Assignment:
    agent_id: str
    component_id: str
    kind: str


def step_capacity(capacity: float, params: GravityParams) -> float:
    """Multiplier of the highest breakpoint at or below ``capacity``."""
    idx = int(np.searchsorted(params.thresholds, capacity, side="right")) - 1
    return float(params.multipliers[max(idx, 0)])


def assignment_probabilities(
    lons: np.ndarray,
    lats: np.ndarray,
    components: EnvironmentalComponentSet,
    params: GravityParams,
    chunk: int = 4096,
) -> np.ndarray:
    """(n_agents, n_components) assignment probabilities, rows summing to 1."""
    if len(components) == 0:
        raise ValueError("component set is empty")
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    idx = np.searchsorted(params.thresholds, components.capacities, side="right") - 1
    f_values = params.multipliers[np.maximum(idx, 0)]
    out = np.empty((len(lons), len(components)))
    for lo in range(0, len(lons), chunk):
        hi = min(lo + chunk, len(lons))
        d = great_circle_km(
            lons[lo:hi, None],
            lats[lo:hi, None],
            components.longitudes[None, :],
            components.latitudes[None, :],
        )
        w = f_values / np.maximum(d, params.distance_floor_km)
        out[lo:hi] = w / w.sum(axis=1, keepdims=True)
    return out


def gravity_assign_frame(
    agent_ids: Sequence[str],
    locations: np.ndarray,
    components: EnvironmentalComponentSet,
    params: GravityParams,
    rng: np.random.Generator,
) -> pd.DataFrame:
    """Vectorized assignment returning an (agent_id, kind, component_id) frame.

    ``locations`` is an (n, 2) array of (lon, lat) rows, one per agent.
    """
    if len(components) == 0:
        raise ValueError("component set is empty")
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    if len(agent_ids) != len(locations):
        raise ValueError("agent_ids and locations differ in length")
    kinds = components.components["kind"].unique()
    if len(kinds) != 1:
        raise ValueError(f"component set must hold a single kind, got {list(kinds)}")
    kind = str(kinds[0])
    probs = assignment_probabilities(locations[:, 0], locations[:, 1], components, params)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(locations)) * cum[:, -1]
    choice = np.minimum((cum < u[:, None]).sum(axis=1), len(components) - 1)
    return pd.DataFrame(
        {
            "agent_id": np.asarray(agent_ids, dtype=object),
            "kind": kind,
            "component_id": components.ids[choice],
        }
    )


def gravity_assign(
    agent_ids: Sequence[str],
    locations: np.ndarray,
    components: EnvironmentalComponentSet,
    params: GravityParams,
    rng: np.random.Generator,
) -> list[Assignment]:
    """Assign every agent one component of this set's kind."""
    frame = gravity_assign_frame(agent_ids, locations, components, params, rng)
    return [
        Assignment(agent_id=str(a), component_id=str(c), kind=str(k))
        for a, k, c in frame.itertuples(index=False)
    ]
