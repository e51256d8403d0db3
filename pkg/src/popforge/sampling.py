"""Record sampling: simple random, weighted, and first-moment matching.

Moment matching assigns minimal-norm nonnegative weights to microdata
records so the weighted sample reproduces a known first moment (e.g. the
region's mean household size), then draws records with those weights. The
weights solve

    min 1/2 ||w||^2   s.t.  sum(w) = 1,  sum(n_i * w_i) = M,  w >= 0,

a strictly convex quadratic program solved here by a primal active-set
method: with only two equality constraints, every subproblem restricted to
the currently-free coordinates reduces to a 2x2 linear solve for the
multipliers (lam1, lam2), with w_i = lam1 + lam2 * n_i on the free set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .ingest import InputError, MicrodataTable, _numeric, _read_csv

logger = logging.getLogger(__name__)

__all__ = [
    "AliasSampler",
    "InfeasibleMomentError",
    "MomentTarget",
    "srs_sample",
    "weighted_sample",
    "largest_remainder",
    "qp_solve",
    "mm_sample",
    "load_moment_targets",
    "write_moment_targets",
]


class AliasSampler:
    """Vose alias table: O(n) setup, O(1) per draw, deterministic under seed."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if not total > 0:
            raise ValueError("at least one weight must be positive")
        n = w.size
        scaled = w * (n / total)
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1.0 up to rounding

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Return ``n`` sampled indices."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        idx = rng.integers(0, len(self.prob), size=n)
        keep = rng.random(n) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])


def srs_sample(micro: MicrodataTable, n_households: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw of household record ids, with replacement."""
    if micro.n_households == 0:
        raise ValueError("microdata has no households")
    if n_households < 0:
        raise ValueError("n_households must be nonnegative")
    idx = rng.integers(0, micro.n_households, size=n_households)
    return micro.households["record_id"].to_numpy(dtype=object)[idx]


def weighted_sample(items, weights, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` items with replacement, proportional to ``weights``."""
    items = np.asarray(items, dtype=object)
    if len(items) != len(np.asarray(weights)):
        raise ValueError("items and weights differ in length")
    return items[AliasSampler(weights).draw(rng, n)]


def largest_remainder(proportions, total: int, rng: np.random.Generator) -> np.ndarray:
    """Hamilton apportionment of ``total`` into integer quotas.

    Quotas floor the exact shares and the leftover units go to the largest
    fractional remainders; remainder ties are broken by a seeded shuffle, so
    the result is deterministic given the stream.
    """
    p = np.asarray(proportions, dtype=float)
    if total < 0:
        raise ValueError("total must be nonnegative")
    if p.size == 0:
        if total > 0:
            raise ValueError("cannot apportion into zero cells")
        return np.zeros(0, dtype=np.int64)
    if np.any(p < 0) or not p.sum() > 0:
        raise ValueError("proportions must be nonnegative with positive sum")
    p = p / p.sum()
    exact = p * total
    base = np.floor(exact).astype(np.int64)
    leftover = int(total - base.sum())
    if leftover > 0:
        remainder = exact - base
        order = np.lexsort((rng.random(p.size), -remainder))
        base[order[:leftover]] += 1
    return base


# ---------------------------------------------------------------------------
# moment matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentTarget:
    """Known first moment of one numeric characteristic in one region."""

    region_id: str
    variable: str
    moment: float


class InfeasibleMomentError(ValueError):
    """Target moment lies outside the convex hull of the record values."""

    def __init__(self, moment: float, lo: float, hi: float):
        self.feasible_interval = (lo, hi)
        super().__init__(
            f"target moment {moment} outside feasible interval [{lo}, {hi}]"
        )


def _free_set_solution(z: np.ndarray, t: float) -> tuple[np.ndarray, float, float]:
    """Minimal-norm w on a free set: w_i = lam1 + lam2 * z_i meeting both sums."""
    s0 = float(len(z))
    s1 = float(z.sum())
    s2 = float((z * z).sum())
    det = s0 * s2 - s1 * s1
    if det > 1e-13 * max(s0 * s2, 1.0):
        lam2 = (s0 * t - s1) / det
        lam1 = (1.0 - lam2 * s1) / s0
    else:
        # all free values (numerically) equal: the two constraints coincide
        lam1, lam2 = 1.0 / s0, 0.0
    return lam1 + lam2 * z, lam1, lam2


def qp_solve(values, moment: float, tol: float = 1e-12) -> np.ndarray:
    """Minimal-Euclidean-norm weights with unit sum, fixed mean, w >= 0.

    Values are affinely rescaled to [0, 1] first (the minimizer is
    unchanged), and the active set is grown by clamping negative weights and
    shrunk when a clamped coordinate's multiplier signals improvement.
    """
    n = np.asarray(values, dtype=float).ravel()
    if n.size == 0:
        raise ValueError("values must be non-empty")
    if not np.all(np.isfinite(n)):
        raise ValueError("values must be finite")
    moment = float(moment)
    lo, hi = float(n.min()), float(n.max())
    if not lo <= moment <= hi:
        raise InfeasibleMomentError(moment, lo, hi)
    N = n.size
    span = hi - lo
    if span == 0.0:
        return np.full(N, 1.0 / N)
    z = (n - lo) / span
    t = (moment - lo) / span

    free = np.ones(N, dtype=bool)
    for _ in range(3 * N + 10):
        w_free, lam1, lam2 = _free_set_solution(z[free], t)
        if w_free.min() < -tol:
            # clamp the most negative coordinate
            local = np.argmin(w_free)
            free[np.flatnonzero(free)[local]] = False
            continue
        w = np.zeros(N)
        w[free] = np.maximum(w_free, 0.0)
        moment_ok = abs(float(z @ w) - t) <= 1e-9
        active = ~free
        if active.any():
            duals = lam1 + lam2 * z[active]
            if lam2 == 0.0 and duals.max() > tol and moment_ok:
                # degenerate free set (all z equal): lam2 is not pinned by
                # the 2x2 system, so pick it to satisfy the active duals
                zf = z[free].mean()
                diffs = z[active] - zf
                if np.all(diffs > 0) or np.all(diffs < 0):
                    duals = np.full_like(duals, -1.0)
            if duals.max() > tol or not moment_ok:
                worst = np.argmax(duals)
                free[np.flatnonzero(active)[worst]] = True
                continue
        return w
    raise RuntimeError("active-set iteration failed to terminate")


def mm_sample(
    micro: MicrodataTable,
    target: MomentTarget,
    n_households: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample household record ids whose expected mean matches the target."""
    kind = micro.variable_kind(target.variable)
    if kind == "categorical":
        raise ValueError(
            f"moment matching needs an ordinal or continuous variable; "
            f"{target.variable!r} is categorical"
        )
    values = micro.household_values(target.variable)
    w = qp_solve(values, target.moment)
    record_ids = micro.households["record_id"].to_numpy(dtype=object)
    return weighted_sample(record_ids, w, n_households, rng)


def load_moment_targets(path) -> list[MomentTarget]:
    """Load the ``region_id,variable,moment`` targets file."""
    df = _read_csv(path, ("region_id", "variable", "moment"), "moments")
    moments = _numeric(df["moment"], path, "moments-numeric", "moment")
    dupes = df["region_id"].duplicated()
    if dupes.any():
        line = int(np.flatnonzero(dupes.to_numpy())[0]) + 2
        raise InputError(
            path, "moments-unique", "one moment target per region", line=line
        )
    return [
        MomentTarget(r, v, float(m))
        for r, v, m in zip(df["region_id"], df["variable"], moments)
    ]


def write_moment_targets(targets: Sequence[MomentTarget], path) -> None:
    pd.DataFrame(
        [(t.region_id, t.variable, t.moment) for t in targets],
        columns=["region_id", "variable", "moment"],
    ).to_csv(path, index=False)
