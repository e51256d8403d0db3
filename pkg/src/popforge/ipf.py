"""Joint-distribution fitting and the two-step record sampler.

Step one rakes a seed contingency table until its marginals match the
region's known category totals: sweep t scales the slice at category k of
dimension j by

    (T_k_j / n) / (current mass of that slice),

which preserves the seed's interaction structure while matching the target
marginals. Step two converts fitted cell proportions into integer per-cell
household quotas and draws records for each cell with probability
proportional to a record-to-cell closeness weight

    D(p, c) = w_p * prod_{i in J} (1 - |(d_i_p - d_i_c) / r_i|^k_i)
                  * prod_{i not in J} (1 - delta(d_i_p, d_i_c)),

where J is the set of numeric variables, r_i the observed value range,
delta is alpha on categorical agreement and 1 - alpha on disagreement, and
w_p the record's base weight. With alpha = 0 only records matching the
cell's categorical coordinates can be drawn.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ingest import MARGINAL_TOTAL_TOLERANCE, MarginalTable, MicrodataRecord, MicrodataTable
from .sampling import AliasSampler, largest_remainder
from .tables import ContingencyTable

logger = logging.getLogger(__name__)

__all__ = [
    "IpfConfig",
    "BeckmanParams",
    "IpfResult",
    "ipf_fit",
    "beckman_distance",
    "ipf_sample_region",
    "IpfRecordSampler",
]


@dataclass(frozen=True)
class IpfConfig:
    """Stopping rule for the fit, on the proportion scale."""

    tolerance: float = 1e-6
    max_iterations: int = 100
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class BeckmanParams:
    """Closeness parameters: categorical agreement weight and numeric decay.

    ``exponent`` may be a single float or a per-variable mapping with 1.0 as
    the default for unlisted variables. ``numeric_variables`` is the set J;
    everything else is compared categorically.
    """

    alpha: float = 0.0
    exponent: float | Mapping[str, float] = 1.0
    numeric_variables: frozenset = frozenset()

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if isinstance(self.exponent, Mapping):
            bad = {k: v for k, v in self.exponent.items() if not v > 0}
        else:
            bad = {} if self.exponent > 0 else {"*": self.exponent}
        if bad:
            raise ValueError(f"exponents must be positive, got {bad}")

    def k_for(self, variable: str) -> float:
        if isinstance(self.exponent, Mapping):
            return float(self.exponent.get(variable, 1.0))
        return float(self.exponent)


@dataclass
class IpfResult:
    """Fitted proportions plus convergence bookkeeping."""

    table: ContingencyTable
    iterations: int
    converged: bool
    max_deviation: float
    deviations: list
    monotonicity_violations: int = 0


def _target_proportions(
    table_vars: Sequence[str],
    categories: Sequence[tuple],
    targets: Sequence[MarginalTable],
) -> list[np.ndarray]:
    by_var = {t.variable: t for t in targets}
    if len(by_var) != len(targets):
        raise ValueError("multiple targets for one variable")
    missing = [v for v in table_vars if v not in by_var]
    extra = [t.variable for t in targets if t.variable not in table_vars]
    if missing or extra:
        raise ValueError(
            f"targets do not match table dimensions (missing {missing}, extra {extra})"
        )
    out = []
    for var, cats in zip(table_vars, categories):
        t = by_var[var]
        if tuple(t.categories) != tuple(cats):
            raise ValueError(
                f"{var!r}: target categories {t.categories} != table categories {cats}"
            )
        out.append(t.proportions)
    ns = [by_var[v].n for v in table_vars]
    lo, hi = min(ns), max(ns)
    if (hi - lo) / hi > MARGINAL_TOTAL_TOLERANCE:
        raise ValueError(
            f"marginal totals disagree across variables beyond "
            f"{MARGINAL_TOTAL_TOLERANCE:.1%}: {dict(zip(table_vars, ns))}"
        )
    return out


def ipf_fit(
    seed: ContingencyTable,
    targets: Sequence[MarginalTable],
    cfg: IpfConfig = IpfConfig(),
) -> IpfResult:
    """Rake the seed until every marginal is within tolerance of its target.

    The seed must already have zero cells replaced (see
    :func:`popforge.tables.fill_zero_cells`) unless those zeros are
    structural; a structurally empty slice facing a positive target is an
    error. Stops after ``max_iterations`` full sweeps with
    ``converged=False``, leaving callers to decide best-effort use.
    """
    q = _target_proportions(seed.variables, seed.categories, targets)
    total = seed.n
    if not total > 0:
        raise ValueError("seed table has zero total mass")
    p = seed.cells / total
    m = seed.ndim

    for j in range(m):
        axes = tuple(a for a in range(m) if a != j)
        slice_mass = p.sum(axis=axes) if axes else p
        dead = (slice_mass == 0) & (q[j] > 0)
        if np.any(dead):
            k = int(np.flatnonzero(dead)[0])
            raise ValueError(
                f"{seed.variables[j]!r} category {seed.categories[j][k]!r} has a "
                f"positive target but a structurally zero slice"
            )

    deviations: list[float] = []
    violations = 0
    converged = False
    t = 0
    for t in range(1, cfg.max_iterations + 1):
        for j in range(m):
            axes = tuple(a for a in range(m) if a != j)
            cur = p.sum(axis=axes) if axes else p.copy()
            stuck = (cur == 0) & (q[j] > cfg.tolerance)
            if np.any(stuck):
                k = int(np.flatnonzero(stuck)[0])
                raise ValueError(
                    f"{seed.variables[j]!r} category {seed.categories[j][k]!r}: "
                    f"slice mass vanished but target is positive"
                )
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(cur > 0, q[j] / np.where(cur > 0, cur, 1.0), 0.0)
            shape = [1] * m
            shape[j] = len(q[j])
            p = p * ratio.reshape(shape)
        dev = 0.0
        for j in range(m):
            axes = tuple(a for a in range(m) if a != j)
            marg = p.sum(axis=axes) if axes else p
            dev = max(dev, float(np.abs(marg - q[j]).max()))
        if deviations and dev > deviations[-1] + 1e-12:
            violations += 1
        deviations.append(dev)
        if dev < cfg.tolerance:
            converged = True
            break
    if violations:
        logger.warning(
            "marginal deviation increased on %d of %d sweeps", violations, t
        )

    fitted = ContingencyTable(
        variables=seed.variables,
        categories=seed.categories,
        cells=p,
        iteration=t,
        binnings=seed.binnings,
    )
    return IpfResult(
        table=fitted,
        iterations=t,
        converged=converged,
        max_deviation=deviations[-1] if deviations else float("inf"),
        deviations=deviations,
        monotonicity_violations=violations,
    )


# ---------------------------------------------------------------------------
# record-to-cell closeness
# ---------------------------------------------------------------------------

def beckman_distance(
    record: MicrodataRecord,
    cell: Mapping[str, object],
    params: BeckmanParams,
    ranges: Mapping[str, float],
) -> float:
    """Closeness of one record to one cell; zero if any factor hits zero.

    ``cell`` maps variable names to the cell's representative values: a
    numeric midpoint for variables in J, the category label otherwise.
    """
    result = float(record.weight)
    for var, cell_value in cell.items():
        if var not in record.characteristics:
            raise KeyError(f"record {record.record_id} has no value for {var!r}")
        value = record.characteristics[var]
        if var in params.numeric_variables:
            r = float(ranges.get(var, 0.0))
            if not r > 0:
                raise ValueError(f"range for {var!r} must be positive")
            factor = 1.0 - abs((float(value) - float(cell_value)) / r) ** params.k_for(var)
            result *= max(factor, 0.0)
        else:
            delta = params.alpha if str(value) == str(cell_value) else 1.0 - params.alpha
            result *= 1.0 - delta
    return result


class IpfRecordSampler:
    """Draws microdata household positions for cells of a fitted table.

    Per-variable factor matrices (categories x records) are built once; a
    cell's record weights are the base weights times one factor row per
    dimension. Cells whose weights vanish everywhere fall back to a uniform
    draw over the full pool (counted and logged by the callers).
    """

    def __init__(self, fitted: ContingencyTable, micro: MicrodataTable, params: BeckmanParams):
        if micro.n_households == 0:
            raise ValueError("microdata has no household records")
        if fitted.binnings is None:
            raise ValueError("fitted table carries no binnings")
        self.table = fitted
        self.micro = micro
        self.params = params
        self.base_weights = micro.household_weights()
        self.fallback_cells = 0

        self._factors = []
        for binning in fitted.binnings:
            values = micro.household_values(binning.variable)
            n_cat = len(binning.categories)
            rows = np.empty((n_cat, micro.n_households))
            if binning.variable in params.numeric_variables:
                r = micro.ranges.get(binning.variable, 0.0)
                if not r > 0:
                    raise ValueError(f"range for {binning.variable!r} must be positive")
                k = params.k_for(binning.variable)
                vals = values.astype(float)
                for c in range(n_cat):
                    mid = float(binning.representative(c))
                    rows[c] = np.maximum(1.0 - np.abs((vals - mid) / r) ** k, 0.0)
            else:
                labels = np.array([str(v) for v in values], dtype=object)
                for c in range(n_cat):
                    match = labels == str(binning.representative(c))
                    rows[c] = np.where(match, 1.0 - params.alpha, params.alpha)
            self._factors.append(rows)

        props = fitted.proportions().ravel()
        self._cell_alias = AliasSampler(props) if props.max() > 0 else None
        self._per_cell: dict[int, AliasSampler | None] = {}

    def _cell_sampler(self, flat_index: int) -> AliasSampler | None:
        """Alias table over records for one cell; None means fall back."""
        if flat_index not in self._per_cell:
            idx = np.unravel_index(flat_index, self.table.cells.shape)
            weights = self.base_weights.copy()
            for rows, k in zip(self._factors, idx):
                weights *= rows[k]
            if weights.max() > 0:
                self._per_cell[flat_index] = AliasSampler(weights)
            else:
                self._per_cell[flat_index] = None
                self.fallback_cells += 1
        return self._per_cell[flat_index]

    def draw_batch(self, n_households: int, rng: np.random.Generator) -> np.ndarray:
        """Apportion cell quotas for a batch and draw records per cell."""
        props = self.table.proportions().ravel()
        quotas = largest_remainder(props, n_households, rng)
        out = np.empty(n_households, dtype=np.int64)
        pos = 0
        for flat in np.flatnonzero(quotas):
            q = int(quotas[flat])
            sampler = self._cell_sampler(flat)
            if sampler is None:
                draws = rng.integers(0, self.micro.n_households, size=q)
            else:
                draws = sampler.draw(rng, q)
            out[pos : pos + q] = draws
            pos += q
        return out

    def draw_one(self, rng: np.random.Generator) -> int:
        """Draw a cell from the fitted proportions, then one record."""
        flat = int(self._cell_alias.draw(rng, 1)[0])
        sampler = self._cell_sampler(flat)
        if sampler is None:
            return int(rng.integers(0, self.micro.n_households))
        return int(sampler.draw(rng, 1)[0])


def ipf_sample_region(
    fit: IpfResult,
    micro: MicrodataTable,
    n_households: int,
    params: BeckmanParams,
    rng: np.random.Generator,
    allow_unconverged: bool = False,
) -> np.ndarray:
    """Sample household record ids according to a fitted table.

    Cell quotas are the fitted proportions apportioned to ``n_households``
    by largest remainder (they sum exactly); within a cell, records are
    drawn with replacement proportionally to their closeness weights.
    """
    if n_households < 0:
        raise ValueError("n_households must be nonnegative")
    if not fit.converged and not allow_unconverged:
        raise ValueError(
            "fit did not converge; pass allow_unconverged=True to sample anyway"
        )
    sampler = IpfRecordSampler(fit.table, micro, params)
    positions = sampler.draw_batch(n_households, rng)
    if sampler.fallback_cells:
        logger.warning(
            "%d cells had no matching records; fell back to uniform draws",
            sampler.fallback_cells,
        )
    return micro.households["record_id"].to_numpy(dtype=object)[positions]
