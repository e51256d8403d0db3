"""Dense contingency tables over characteristic categories.

Tables stay small here (a handful of variables with at most a few dozen
categories each), so cells are a dense m-dimensional array. A table built
from microdata holds the sum of household base weights per cell; fitted
tables hold proportions summing to one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ingest import MicrodataTable, VariableBinning

__all__ = [
    "ContingencyTable",
    "seed_from_microdata",
    "marginal_of",
    "fill_zero_cells",
    "dump_table",
]


@dataclass(frozen=True)
class ContingencyTable:
    """m-dimensional nonnegative table with named, ordered categories."""

    variables: tuple[str, ...]
    categories: tuple[tuple[str, ...], ...]
    cells: np.ndarray
    iteration: int = 0
    binnings: tuple[VariableBinning, ...] | None = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        object.__setattr__(self, "cells", cells)
        if len(self.variables) != len(self.categories):
            raise ValueError("one category tuple per variable required")
        expected = tuple(len(c) for c in self.categories)
        if cells.shape != expected:
            raise ValueError(f"cells shape {cells.shape} != category counts {expected}")
        if np.any(cells < 0) or not np.all(np.isfinite(cells)):
            raise ValueError("cells must be finite and nonnegative")

    @property
    def ndim(self) -> int:
        return len(self.variables)

    @property
    def n(self) -> float:
        """Total mass of the table."""
        return float(self.cells.sum())

    def proportions(self) -> np.ndarray:
        n = self.n
        if not n > 0:
            raise ValueError("table has zero total")
        return self.cells / n


def seed_from_microdata(
    micro: MicrodataTable,
    variables: Sequence[str],
    binnings: Sequence[VariableBinning],
) -> ContingencyTable:
    """Build the seed table: cell value = sum of household base weights.

    Every household record must bin into a cell; an unbinnable value is an
    error naming the offending record.
    """
    if micro.n_households == 0:
        raise ValueError("microdata has no household records")
    by_name = {b.variable: b for b in binnings}
    missing = [v for v in variables if v not in by_name]
    if missing:
        raise ValueError(f"no binning given for variables {missing}")
    chosen = [by_name[v] for v in variables]
    shape = tuple(len(b.categories) for b in chosen)
    index_rows = []
    for b in chosen:
        idx = b.bin_indices(micro.household_values(b.variable))
        if np.any(idx < 0):
            bad = np.flatnonzero(idx < 0)
            ids = micro.households["record_id"].iloc[bad[:5]].tolist()
            raise ValueError(
                f"records {ids} have values outside the {b.variable!r} categories"
            )
        index_rows.append(idx)
    cells = np.zeros(shape)
    np.add.at(cells, tuple(index_rows), micro.household_weights())
    return ContingencyTable(
        variables=tuple(variables),
        categories=tuple(tuple(b.categories) for b in chosen),
        cells=cells,
        binnings=tuple(chosen),
    )


def marginal_of(table: ContingencyTable, dim: int) -> np.ndarray:
    """Sum the table over every dimension except ``dim`` (0-based)."""
    if not 0 <= dim < table.ndim:
        raise IndexError(f"dimension {dim} out of range for {table.ndim}-d table")
    axes = tuple(j for j in range(table.ndim) if j != dim)
    return table.cells.sum(axis=axes) if axes else table.cells.copy()


def fill_zero_cells(
    table: ContingencyTable,
    epsilon: float,
    structural: np.ndarray | None = None,
) -> ContingencyTable:
    """Replace zero cells with ``epsilon`` so proportional fitting can move
    mass into them; cells marked in ``structural`` stay exactly zero."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    cells = table.cells.copy()
    zero = cells == 0
    if structural is not None:
        structural = np.asarray(structural, dtype=bool)
        if structural.shape != cells.shape:
            raise ValueError("structural mask shape must match cells")
        zero &= ~structural
    cells[zero] = epsilon
    return replace(table, cells=cells)


def dump_table(table: ContingencyTable, path) -> None:
    """Write the table as delimited text, one row per cell."""
    with open(path, "w") as fh:
        fh.write(",".join(table.variables) + ",value\n")
        for idx in np.ndindex(table.cells.shape):
            labels = [table.categories[j][k] for j, k in enumerate(idx)]
            fh.write(",".join(labels) + f",{float(table.cells[idx])!r}\n")
