"""Parsing and validation of the four input classes.

Interchange formats (all paths are plain files):

- counts: CSV with header ``region_id,count,count_type``
- marginals: CSV with header ``region_id,variable,category,total``
- microdata: CSV with header
  ``record_id,household_serial,role,weight,<characteristic columns...>``
  plus a JSON sidecar schema declaring each characteristic as
  ``categorical``, ``ordinal``, or ``continuous`` (the latter two with bin
  edges and category labels)
- geography / roads: GeoJSON FeatureCollection; every feature carries a
  ``region_id`` property, road features may carry ``excluded: true``
- environmental components: CSV with header
  ``component_id,kind,longitude,latitude,capacity``

Loaders either return validated values or raise :class:`InputError` naming
the file, line, and rule violated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .geometry import GeometryError, GeoPoint, PolygonRegion, Polyline

COUNT_TYPES = ("persons", "households")
VARIABLE_KINDS = ("categorical", "ordinal", "continuous")

# cross-variable agreement tolerance for marginal totals within a region
MARGINAL_TOTAL_TOLERANCE = 0.005

__all__ = [
    "InputError",
    "PopulationCount",
    "MicrodataRecord",
    "MicrodataTable",
    "MarginalTable",
    "VariableBinning",
    "EnvironmentalComponentSet",
    "RegionGeometry",
    "load_counts",
    "load_geography",
    "load_roads",
    "load_microdata",
    "load_marginals",
    "load_components",
    "check_marginal_consistency",
    "write_counts",
    "write_marginals",
    "write_microdata",
    "write_geography",
    "write_components",
]


class InputError(ValueError):
    """A named validation failure tied to a file, rule, and optional line."""

    def __init__(self, path, rule: str, message: str, line: int | None = None):
        self.path = str(path)
        self.rule = rule
        self.message = message
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where} [{rule}] {message}")


def _read_csv(path, required: tuple[str, ...], rule_prefix: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise InputError(path, f"{rule_prefix}-file", "file not found")
    except Exception as exc:  # malformed CSV structure
        raise InputError(path, f"{rule_prefix}-parse", f"cannot parse CSV: {exc}")
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise InputError(
            path, f"{rule_prefix}-columns", f"missing required columns {missing}"
        )
    return df


def _numeric(series: pd.Series, path, rule: str, what: str) -> np.ndarray:
    values = pd.to_numeric(series.mask(series == ""), errors="coerce")
    bad = values.isna() & (series != "")
    if bad.any():
        idx = int(np.flatnonzero(bad.to_numpy())[0])
        raise InputError(
            path, rule, f"non-numeric {what} {series.iloc[idx]!r}", line=idx + 2
        )
    return values.to_numpy(dtype=float)


# ---------------------------------------------------------------------------
# counts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationCount:
    region_id: str
    count: int
    count_type: str


def load_counts(path) -> list[PopulationCount]:
    """Load and validate per-region target counts."""
    df = _read_csv(path, ("region_id", "count", "count_type"), "counts")
    extra = [c for c in df.columns if c not in ("region_id", "count", "count_type")]
    if extra:
        raise InputError(path, "counts-columns", f"unknown columns {extra}")
    if (df["region_id"] == "").any():
        line = int(np.flatnonzero((df["region_id"] == "").to_numpy())[0]) + 2
        raise InputError(path, "counts-region-id", "empty region_id", line=line)
    dupes = df["region_id"].duplicated()
    if dupes.any():
        line = int(np.flatnonzero(dupes.to_numpy())[0]) + 2
        raise InputError(
            path,
            "counts-unique",
            f"duplicate region_id {df['region_id'].iloc[line - 2]!r}",
            line=line,
        )
    counts = _numeric(df["count"], path, "counts-numeric", "count")
    if np.any(counts < 0):
        line = int(np.flatnonzero(counts < 0)[0]) + 2
        raise InputError(path, "counts-nonnegative", "negative count", line=line)
    if np.any(counts != np.floor(counts)):
        line = int(np.flatnonzero(counts != np.floor(counts))[0]) + 2
        raise InputError(path, "counts-integer", "count is not an integer", line=line)
    bad_type = ~df["count_type"].isin(COUNT_TYPES)
    if bad_type.any():
        line = int(np.flatnonzero(bad_type.to_numpy())[0]) + 2
        raise InputError(
            path,
            "counts-type",
            f"unknown count_type {df['count_type'].iloc[line - 2]!r} "
            f"(expected one of {COUNT_TYPES})",
            line=line,
        )
    return [
        PopulationCount(r, int(c), t)
        for r, c, t in zip(df["region_id"], counts, df["count_type"])
    ]


def write_counts(counts: Iterable[PopulationCount], path) -> None:
    pd.DataFrame(
        [(c.region_id, c.count, c.count_type) for c in counts],
        columns=["region_id", "count", "count_type"],
    ).to_csv(path, index=False)


# ---------------------------------------------------------------------------
# geography and roads
# ---------------------------------------------------------------------------

@dataclass
class RegionGeometry:
    """Polygons (and optional roads) attached to one region id."""

    polygons: list[PolygonRegion] = field(default_factory=list)
    roads: list[Polyline] = field(default_factory=list)


def _load_feature_collection(path, rule_prefix: str) -> list[dict]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(path, f"{rule_prefix}-file", "file not found")
    except json.JSONDecodeError as exc:
        raise InputError(path, f"{rule_prefix}-parse", f"invalid JSON: {exc}")
    if doc.get("type") != "FeatureCollection" or "features" not in doc:
        raise InputError(
            path, f"{rule_prefix}-format", "document is not a FeatureCollection"
        )
    return doc["features"]


def _feature_region_id(feature: dict, i: int, path, rule_prefix: str) -> str:
    region_id = (feature.get("properties") or {}).get("region_id")
    if not region_id:
        raise InputError(
            path, f"{rule_prefix}-region-id", f"feature {i} has no region_id property"
        )
    return str(region_id)


def load_geography(path, roads_path=None) -> dict[str, RegionGeometry]:
    """Load region polygons, optionally attaching road polylines by region id.

    Polygon and MultiPolygon geometries are accepted; a MultiPolygon becomes
    several PolygonRegions under the same region id (samplers weight them by
    area).
    """
    regions: dict[str, RegionGeometry] = {}
    for i, feature in enumerate(_load_feature_collection(path, "geography")):
        region_id = _feature_region_id(feature, i, path, "geography")
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        try:
            if gtype == "Polygon":
                polys = [PolygonRegion(coords[0], holes=coords[1:])]
            elif gtype == "MultiPolygon":
                polys = [PolygonRegion(rings[0], holes=rings[1:]) for rings in coords]
            else:
                raise InputError(
                    path,
                    "geography-geometry-type",
                    f"feature {i} ({region_id}): unsupported geometry type {gtype!r}",
                )
        except (GeometryError, TypeError, IndexError) as exc:
            raise InputError(
                path,
                "geography-geometry",
                f"feature {i} ({region_id}): invalid polygon: {exc}",
            )
        regions.setdefault(region_id, RegionGeometry()).polygons.extend(polys)
    for region_id, geo in regions.items():
        if not geo.polygons:
            raise InputError(path, "geography-empty", f"region {region_id} has no polygons")
    if roads_path is not None:
        for region_id, lines in load_roads(roads_path).items():
            regions.setdefault(region_id, RegionGeometry()).roads.extend(lines)
    return regions


def load_roads(path) -> dict[str, list[Polyline]]:
    """Load road polylines keyed by region id."""
    roads: dict[str, list[Polyline]] = {}
    for i, feature in enumerate(_load_feature_collection(path, "roads")):
        region_id = _feature_region_id(feature, i, path, "roads")
        excluded = bool((feature.get("properties") or {}).get("excluded", False))
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        try:
            if gtype == "LineString":
                lines = [Polyline(coords, excluded=excluded)]
            elif gtype == "MultiLineString":
                lines = [Polyline(part, excluded=excluded) for part in coords]
            else:
                raise InputError(
                    path,
                    "roads-geometry-type",
                    f"feature {i} ({region_id}): unsupported geometry type {gtype!r}",
                )
        except (GeometryError, TypeError) as exc:
            raise InputError(
                path, "roads-geometry", f"feature {i} ({region_id}): invalid line: {exc}"
            )
        roads.setdefault(region_id, []).extend(lines)
    return roads


def write_geography(regions: Mapping[str, RegionGeometry], path) -> None:
    features = []
    for region_id in regions:
        for poly in regions[region_id].polygons:
            rings = [poly.exterior.tolist() + [poly.exterior[0].tolist()]]
            for hole in poly.holes:
                rings.append(hole.tolist() + [hole[0].tolist()])
            features.append(
                {
                    "type": "Feature",
                    "properties": {"region_id": region_id},
                    "geometry": {"type": "Polygon", "coordinates": rings},
                }
            )
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)


# ---------------------------------------------------------------------------
# variable schema / binning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableBinning:
    """How one characteristic maps onto ordered categories.

    Categorical variables list their labels; ordinal and continuous
    variables carry ``len(categories) + 1`` bin edges, with values assigned
    to the half-open bin [edge_k, edge_{k+1}) and the last bin closed.
    """

    variable: str
    kind: str
    categories: tuple[str, ...]
    edges: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in VARIABLE_KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if not self.categories:
            raise ValueError(f"{self.variable}: empty category list")
        if self.kind == "categorical":
            if self.edges is not None:
                raise ValueError(f"{self.variable}: categorical variables take no edges")
        else:
            if self.edges is None or len(self.edges) != len(self.categories) + 1:
                raise ValueError(
                    f"{self.variable}: needs len(categories)+1 bin edges"
                )
            if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
                raise ValueError(f"{self.variable}: bin edges must increase")

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("ordinal", "continuous")

    def bin_indices(self, values) -> np.ndarray:
        """Category index per value; -1 marks unbinnable values."""
        if self.is_numeric:
            vals = np.asarray(values, dtype=float)
            idx = np.searchsorted(self.edges, vals, side="right") - 1
            idx[vals == self.edges[-1]] = len(self.categories) - 1
            idx[(idx < 0) | (idx >= len(self.categories)) | ~np.isfinite(vals)] = -1
            return idx
        lookup = {c: k for k, c in enumerate(self.categories)}
        return np.array([lookup.get(str(v), -1) for v in values], dtype=int)

    def representative(self, k: int):
        """Cell value for category ``k``: bin midpoint, or the label itself."""
        if self.is_numeric:
            return 0.5 * (self.edges[k] + self.edges[k + 1])
        return self.categories[k]


def _load_schema(path) -> dict[str, dict]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(path, "schema-file", "file not found")
    except json.JSONDecodeError as exc:
        raise InputError(path, "schema-parse", f"invalid JSON: {exc}")
    variables = doc.get("variables")
    if not isinstance(variables, dict):
        raise InputError(path, "schema-format", "expected top-level 'variables' object")
    out = {}
    for name, spec in variables.items():
        if isinstance(spec, str):
            spec = {"type": spec}
        kind = spec.get("type")
        if kind not in VARIABLE_KINDS:
            raise InputError(
                path,
                "schema-kind",
                f"variable {name!r}: type must be one of {VARIABLE_KINDS}, got {kind!r}",
            )
        out[name] = dict(spec)
    return out


# ---------------------------------------------------------------------------
# microdata
# ---------------------------------------------------------------------------

def _multi_arange(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenate arange(s, s+l) for each pair, without a Python loop."""
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    keep = lengths > 0
    s = starts[keep]
    l = lengths[keep]
    steps = np.ones(total, dtype=np.int64)
    steps[0] = s[0]
    if len(s) > 1:
        steps[np.cumsum(l)[:-1]] = s[1:] - (s[:-1] + l[:-1] - 1)
    return np.cumsum(steps)


@dataclass(frozen=True)
class MicrodataRecord:
    record_id: str
    household_serial: str
    role: str
    characteristics: Mapping[str, object]
    weight: float = 1.0


class MicrodataTable:
    """Linked household/person records with declared characteristic kinds.

    ``households`` and ``persons`` are DataFrames in file order; persons are
    linked to households through ``household_serial``. ``ranges`` holds the
    observed max-minus-min per numeric household characteristic, used as the
    normalizing range in record-to-cell distances.
    """

    def __init__(self, households: pd.DataFrame, persons: pd.DataFrame, schema: dict[str, dict]):
        self.households = households.reset_index(drop=True)
        self.persons = persons.reset_index(drop=True)
        self.schema = schema
        reserved = {"record_id", "household_serial", "role", "weight"}
        self.household_characteristics = [
            c for c in households.columns if c not in reserved
            and households[c].notna().any()
        ]
        self.person_characteristics = [
            c for c in persons.columns if c not in reserved and persons[c].notna().any()
        ]
        self.ranges = {}
        for var in self.household_characteristics:
            if schema.get(var, {}).get("type") in ("ordinal", "continuous"):
                vals = self.households[var].to_numpy(dtype=float)
                self.ranges[var] = float(vals.max() - vals.min())

        serials = pd.Index(self.households["household_serial"])
        pos = serials.get_indexer(self.persons["household_serial"])
        if (pos < 0).any():
            raise ValueError("person references unknown household_serial")
        order = np.argsort(pos, kind="stable")
        self._persons_sorted = self.persons.iloc[order].reset_index(drop=True)
        self.household_sizes = np.bincount(pos, minlength=len(serials))
        self._person_offsets = np.concatenate(
            [[0], np.cumsum(self.household_sizes)]
        ).astype(np.int64)

    @property
    def n_households(self) -> int:
        return len(self.households)

    def variable_kind(self, variable: str) -> str:
        spec = self.schema.get(variable)
        if spec is None:
            raise KeyError(f"variable {variable!r} not declared in schema")
        return spec["type"]

    def household_values(self, variable: str) -> np.ndarray:
        """Household-level values for one characteristic, file order."""
        if variable not in self.household_characteristics:
            raise KeyError(f"{variable!r} is not a household characteristic")
        col = self.households[variable]
        if self.variable_kind(variable) in ("ordinal", "continuous"):
            return col.to_numpy(dtype=float)
        return col.to_numpy(dtype=object)

    def household_weights(self) -> np.ndarray:
        return self.households["weight"].to_numpy(dtype=float)

    def household_record(self, record_id: str) -> MicrodataRecord:
        rows = self.households.index[self.households["record_id"] == record_id]
        if len(rows) == 0:
            raise KeyError(f"no household record {record_id!r}")
        row = self.households.loc[rows[0]]
        chars = {c: row[c] for c in self.household_characteristics}
        return MicrodataRecord(
            record_id=row["record_id"],
            household_serial=row["household_serial"],
            role="household",
            characteristics=chars,
            weight=float(row["weight"]),
        )

    def persons_for_positions(self, positions: np.ndarray) -> tuple[pd.DataFrame, np.ndarray]:
        """Person rows for an array of household positions, concatenated.

        Returns the replicated person rows (in household draw order) and the
        number of persons contributed by each drawn household.
        """
        positions = np.asarray(positions, dtype=np.int64)
        starts = self._person_offsets[positions]
        lengths = self.household_sizes[positions]
        rows = _multi_arange(starts, lengths)
        return self._persons_sorted.iloc[rows], lengths


def load_microdata(path, schema_path=None) -> MicrodataTable:
    """Load the household/person microdata CSV and its sidecar schema.

    The sidecar defaults to ``<path>.schema.json``. Persons must link to
    exactly one household record, every household needs at least one person,
    and ordinal/continuous characteristics must be numeric.
    """
    if schema_path is None:
        schema_path = f"{path}.schema.json"
    schema = _load_schema(schema_path)
    df = _read_csv(path, ("record_id", "household_serial", "role", "weight"), "microdata")
    if len(df) == 0:
        raise InputError(path, "microdata-empty", "no records")
    bad_role = ~df["role"].isin(("household", "person"))
    if bad_role.any():
        line = int(np.flatnonzero(bad_role.to_numpy())[0]) + 2
        raise InputError(
            path,
            "microdata-role",
            f"role must be 'household' or 'person', got {df['role'].iloc[line - 2]!r}",
            line=line,
        )
    dupes = df["record_id"].duplicated()
    if dupes.any():
        line = int(np.flatnonzero(dupes.to_numpy())[0]) + 2
        raise InputError(
            path, "microdata-record-unique",
            f"duplicate record_id {df['record_id'].iloc[line - 2]!r}", line=line,
        )

    char_cols = [c for c in df.columns if c not in ("record_id", "household_serial", "role", "weight")]
    undeclared = [c for c in char_cols if c not in schema]
    if undeclared:
        raise InputError(
            path,
            "microdata-schema-coverage",
            f"characteristics {undeclared} not declared in schema {schema_path}",
        )

    weights = pd.to_numeric(df["weight"].mask(df["weight"] == ""), errors="coerce")
    bad_w = weights.isna() & (df["weight"] != "")
    if bad_w.any():
        line = int(np.flatnonzero(bad_w.to_numpy())[0]) + 2
        raise InputError(path, "microdata-weight", "non-numeric weight", line=line)
    weights = weights.fillna(1.0)
    if (weights < 0).any():
        line = int(np.flatnonzero((weights < 0).to_numpy())[0]) + 2
        raise InputError(path, "microdata-weight", "negative weight", line=line)
    df = df.assign(weight=weights.to_numpy(dtype=float))

    # empty strings become missing; numeric kinds are coerced and checked
    parsed = df.copy()
    for col in char_cols:
        col_values = df[col].mask(df[col] == "")
        if schema[col]["type"] in ("ordinal", "continuous"):
            numeric = pd.to_numeric(col_values, errors="coerce")
            bad = numeric.isna() & col_values.notna()
            if bad.any():
                pos = int(np.flatnonzero(bad.to_numpy())[0])
                raise InputError(
                    path,
                    "microdata-numeric",
                    f"record {df['record_id'].iloc[pos]!r}: non-numeric value "
                    f"{df[col].iloc[pos]!r} for {schema[col]['type']} variable {col!r}",
                    line=pos + 2,
                )
            parsed[col] = numeric
        else:
            parsed[col] = col_values

    households = parsed[parsed["role"] == "household"]
    persons = parsed[parsed["role"] == "person"]
    if len(households) == 0:
        raise InputError(path, "microdata-households", "no household records")
    hh_dupes = households["household_serial"].duplicated()
    if hh_dupes.any():
        pos = households.index[hh_dupes][0]
        raise InputError(
            path,
            "microdata-serial-unique",
            f"duplicate household_serial {households['household_serial'].loc[pos]!r}",
            line=int(pos) + 2,
        )
    known = set(households["household_serial"])
    orphan = ~persons["household_serial"].isin(known)
    if orphan.any():
        pos = persons.index[orphan][0]
        raise InputError(
            path,
            "microdata-linkage",
            f"person {persons['record_id'].loc[pos]!r} references unknown "
            f"household_serial {persons['household_serial'].loc[pos]!r}",
            line=int(pos) + 2,
        )
    childless = known - set(persons["household_serial"])
    if childless:
        raise InputError(
            path,
            "microdata-linkage",
            f"households without person records: {sorted(childless)[:5]}",
        )

    # household characteristics must be filled on every household row
    for col in char_cols:
        if households[col].notna().any() and households[col].isna().any():
            pos = households.index[households[col].isna()][0]
            raise InputError(
                path,
                "microdata-missing",
                f"household {households['record_id'].loc[pos]!r} missing value for {col!r}",
                line=int(pos) + 2,
            )
        if persons[col].notna().any() and persons[col].isna().any():
            pos = persons.index[persons[col].isna()][0]
            raise InputError(
                path,
                "microdata-missing",
                f"person {persons['record_id'].loc[pos]!r} missing value for {col!r}",
                line=int(pos) + 2,
            )

    return MicrodataTable(households, persons, schema)


def write_microdata(micro: MicrodataTable, path, schema_path=None) -> None:
    full = pd.concat([micro.households, micro.persons], ignore_index=True)
    full.to_csv(path, index=False)
    if schema_path is not None:
        with open(schema_path, "w") as fh:
            json.dump({"variables": micro.schema}, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarginalTable:
    """Per-category totals of one variable in one region, in file order."""

    region_id: str
    variable: str
    categories: tuple[str, ...]
    totals: tuple[float, ...]

    @property
    def n(self) -> float:
        return float(sum(self.totals))

    @property
    def proportions(self) -> np.ndarray:
        n = self.n
        if n <= 0:
            raise ValueError(
                f"marginal {self.region_id}/{self.variable} has zero total"
            )
        return np.asarray(self.totals, dtype=float) / n


def load_marginals(path) -> list[MarginalTable]:
    """Load marginal tables grouped per (region, variable), file order kept."""
    df = _read_csv(path, ("region_id", "variable", "category", "total"), "marginals")
    for col in ("region_id", "variable", "category"):
        blank = df[col] == ""
        if blank.any():
            line = int(np.flatnonzero(blank.to_numpy())[0]) + 2
            raise InputError(path, "marginals-blank", f"empty {col}", line=line)
    totals = _numeric(df["total"], path, "marginals-numeric", "total")
    if np.any(totals < 0):
        line = int(np.flatnonzero(totals < 0)[0]) + 2
        raise InputError(path, "marginals-nonnegative", "negative total", line=line)
    dupes = df.duplicated(subset=["region_id", "variable", "category"])
    if dupes.any():
        line = int(np.flatnonzero(dupes.to_numpy())[0]) + 2
        raise InputError(
            path, "marginals-category-unique", "duplicate category row", line=line
        )
    out = []
    df = df.assign(_total=totals)
    for (region_id, variable), group in df.groupby(
        ["region_id", "variable"], sort=False
    ):
        out.append(
            MarginalTable(
                region_id=region_id,
                variable=variable,
                categories=tuple(group["category"]),
                totals=tuple(float(t) for t in group["_total"]),
            )
        )
    return out


def check_marginal_consistency(
    tables: Iterable[MarginalTable], tolerance: float = MARGINAL_TOTAL_TOLERANCE
) -> list[str]:
    """Warn when a region's per-variable totals disagree beyond tolerance."""
    by_region: dict[str, list[MarginalTable]] = {}
    for t in tables:
        by_region.setdefault(t.region_id, []).append(t)
    warnings = []
    for region_id, group in by_region.items():
        ns = [t.n for t in group]
        lo, hi = min(ns), max(ns)
        if lo <= 0 or (hi - lo) / hi > tolerance:
            detail = ", ".join(f"{t.variable}={t.n:g}" for t in group)
            warnings.append(
                f"region {region_id}: marginal totals disagree beyond "
                f"{tolerance:.1%} ({detail})"
            )
    return warnings


def write_marginals(tables: Iterable[MarginalTable], path) -> None:
    rows = [
        (t.region_id, t.variable, c, v)
        for t in tables
        for c, v in zip(t.categories, t.totals)
    ]
    pd.DataFrame(rows, columns=["region_id", "variable", "category", "total"]).to_csv(
        path, index=False
    )


# ---------------------------------------------------------------------------
# environmental components
# ---------------------------------------------------------------------------

class EnvironmentalComponentSet:
    """Schools, workplaces, and similar loci with locations and capacities."""

    def __init__(self, components: pd.DataFrame):
        self.components = components.reset_index(drop=True)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def ids(self) -> np.ndarray:
        return self.components["component_id"].to_numpy(dtype=object)

    @property
    def longitudes(self) -> np.ndarray:
        return self.components["longitude"].to_numpy(dtype=float)

    @property
    def latitudes(self) -> np.ndarray:
        return self.components["latitude"].to_numpy(dtype=float)

    @property
    def capacities(self) -> np.ndarray:
        return self.components["capacity"].to_numpy(dtype=float)

    def for_kind(self, kind: str) -> "EnvironmentalComponentSet":
        return EnvironmentalComponentSet(
            self.components[self.components["kind"] == kind]
        )

    def locations(self) -> list[GeoPoint]:
        return [GeoPoint(lon, lat) for lon, lat in zip(self.longitudes, self.latitudes)]


def load_components(path) -> EnvironmentalComponentSet:
    df = _read_csv(
        path, ("component_id", "kind", "longitude", "latitude", "capacity"), "components"
    )
    if df["component_id"].duplicated().any():
        line = int(np.flatnonzero(df["component_id"].duplicated().to_numpy())[0]) + 2
        raise InputError(path, "components-unique", "duplicate component_id", line=line)
    lon = _numeric(df["longitude"], path, "components-numeric", "longitude")
    lat = _numeric(df["latitude"], path, "components-numeric", "latitude")
    cap = _numeric(df["capacity"], path, "components-numeric", "capacity")
    bad_lon = (np.abs(lon) > 180) | ~np.isfinite(lon)
    bad_lat = (np.abs(lat) > 90) | ~np.isfinite(lat)
    if bad_lon.any() or bad_lat.any():
        line = int(np.flatnonzero(bad_lon | bad_lat)[0]) + 2
        raise InputError(path, "components-location", "coordinate out of range", line=line)
    if np.any(cap < 1) or np.any(cap != np.floor(cap)):
        line = int(np.flatnonzero((cap < 1) | (cap != np.floor(cap)))[0]) + 2
        raise InputError(
            path, "components-capacity", "capacity must be an integer >= 1", line=line
        )
    out = df.assign(longitude=lon, latitude=lat, capacity=cap.astype(int))
    return EnvironmentalComponentSet(out)


def write_components(components: EnvironmentalComponentSet, path) -> None:
    components.components.to_csv(path, index=False)
