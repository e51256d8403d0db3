"""Per-region generation and the batch run over all regions.

Each region runs the same four steps: draw household records with the
configured characteristic method, expand their person records through the
microdata linkage, place one location per household with the configured
spatial method, and draw environmental-component assignments per kind.

Regions are the unit of parallelism. A region's random stream is seeded by
a stable hash of (master seed, region id), so output is a pure function of
inputs, config, and master seed: reruns are byte-identical, worker count
does not matter, and removing one region leaves every other region's files
unchanged. Run summaries (which carry wall times) go to the caller, never
into the output directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import __version__
from .assignment import GravityParams, gravity_assign_frame
from .diagnostics import (
    DiagnosticsReport,
    RegionDiagnostics,
    build_report,
    evaluate_region_marginals,
    render_markdown,
    render_region_map_svg,
    report_to_json,
)
from .geometry import (
    GeometryError,
    PolygonRegion,
    Polyline,
    WeightedGeometrySet,
    polygon_area,
    sample_uniform_polygon,
    sample_uniform_polylines,
    sample_weighted_geometry,
)
from .ingest import (
    EnvironmentalComponentSet,
    InputError,
    MarginalTable,
    MicrodataTable,
    VariableBinning,
    _feature_region_id,
    _load_feature_collection,
    check_marginal_consistency,
    load_components,
    load_counts,
    load_geography,
    load_marginals,
    load_microdata,
)
from .ipf import BeckmanParams, IpfConfig, IpfRecordSampler, ipf_fit
from .sampling import AliasSampler, MomentTarget, load_moment_targets, qp_solve
from .tables import ContingencyTable, fill_zero_cells, seed_from_microdata

logger = logging.getLogger(__name__)

CHARACTERISTIC_METHODS = ("srs", "ipf", "mm")
LOCATION_METHODS = ("uniform", "roads", "weighted")

__all__ = [
    "ConfigError",
    "GenerationError",
    "ValidationFailed",
    "EnvironmentConfig",
    "GenerationConfig",
    "Region",
    "RunResources",
    "SyntheticEcosystem",
    "ValidationIssue",
    "ValidationReport",
    "region_seed",
    "validate_inputs",
    "generate_region",
    "generate_ecosystem",
    "write_outputs",
    "diagnose_run",
    "render_report_files",
]


class ConfigError(ValueError):
    """Malformed run configuration (unknown keys, bad values, bad shape)."""


class GenerationError(RuntimeError):
    """A region failed to generate in strict mode."""


class ValidationFailed(RuntimeError):
    """Input validation found errors; the report is attached."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(
            "; ".join(str(i) for i in report.errors) or "input validation failed"
        )


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvironmentConfig:
    kind: str
    components: str
    gravity: GravityParams = GravityParams()
    assignment_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.assignment_fraction <= 1.0:
            raise ConfigError("assignment_fraction must be in (0, 1]")


_TOP_KEYS = {
    "counts", "geography", "roads", "weights", "microdata", "schema",
    "marginals", "moments", "characteristic_method", "location_method",
    "environments", "master_seed", "parallelism", "output_dir",
    "version_tag", "strict", "ipf",
}
_IPF_KEYS = {"tolerance", "max_iterations", "epsilon", "alpha", "exponent", "variables"}
_ENV_KEYS = {"kind", "components", "gravity", "assignment_fraction"}
_GRAVITY_KEYS = {"breakpoints", "distance_floor_km"}


@dataclass
class GenerationConfig:
    """One run: input paths, method choices, seeding, and output location."""

    counts: str
    geography: str
    microdata: str
    schema: str
    output_dir: str
    characteristic_method: str = "srs"
    location_method: str = "uniform"
    roads: str | None = None
    weights: str | None = None
    marginals: str | None = None
    moments: str | None = None
    environments: tuple[EnvironmentConfig, ...] = ()
    master_seed: int = 0
    parallelism: int = 1
    version_tag: str = __version__
    strict: bool = False
    ipf: IpfConfig = IpfConfig()
    ipf_alpha: float = 0.0
    ipf_exponent: float = 1.0
    ipf_variables: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.characteristic_method not in CHARACTERISTIC_METHODS:
            raise ConfigError(
                f"characteristic_method must be one of {CHARACTERISTIC_METHODS}"
            )
        if self.location_method not in LOCATION_METHODS:
            raise ConfigError(f"location_method must be one of {LOCATION_METHODS}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.characteristic_method == "ipf" and self.marginals is None:
            raise ConfigError("characteristic_method 'ipf' requires a marginals file")
        if self.characteristic_method == "mm" and self.moments is None:
            raise ConfigError("characteristic_method 'mm' requires a moments file")
        if self.location_method == "roads" and self.roads is None:
            raise ConfigError("location_method 'roads' requires a roads file")
        if self.location_method == "weighted" and self.weights is None:
            raise ConfigError("location_method 'weighted' requires a weights file")

    @classmethod
    def from_json(cls, path) -> "GenerationConfig":
        """Load a config document; paths resolve relative to the file."""
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            if p is None:
                return None
            return p if os.path.isabs(p) else os.path.join(base, p)

        ipf_doc = doc.get("ipf", {})
        if not isinstance(ipf_doc, dict):
            raise ConfigError(f"{path}: 'ipf' must be an object")
        unknown = set(ipf_doc) - _IPF_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown ipf keys {sorted(unknown)}")

        environments = []
        for i, env_doc in enumerate(doc.get("environments", [])):
            if not isinstance(env_doc, dict):
                raise ConfigError(f"{path}: environments[{i}] must be an object")
            unknown = set(env_doc) - _ENV_KEYS
            if unknown:
                raise ConfigError(
                    f"{path}: unknown environment keys {sorted(unknown)}"
                )
            if "kind" not in env_doc or "components" not in env_doc:
                raise ConfigError(
                    f"{path}: environments[{i}] needs 'kind' and 'components'"
                )
            gravity_doc = env_doc.get("gravity", {})
            unknown = set(gravity_doc) - _GRAVITY_KEYS
            if unknown:
                raise ConfigError(f"{path}: unknown gravity keys {sorted(unknown)}")
            gravity_kwargs = {}
            if "breakpoints" in gravity_doc:
                gravity_kwargs["breakpoints"] = tuple(
                    (float(t), float(m)) for t, m in gravity_doc["breakpoints"]
                )
            if "distance_floor_km" in gravity_doc:
                gravity_kwargs["distance_floor_km"] = float(
                    gravity_doc["distance_floor_km"]
                )
            try:
                environments.append(
                    EnvironmentConfig(
                        kind=str(env_doc["kind"]),
                        components=resolve(env_doc["components"]),
                        gravity=GravityParams(**gravity_kwargs),
                        assignment_fraction=float(
                            env_doc.get("assignment_fraction", 1.0)
                        ),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"{path}: environments[{i}]: {exc}")

        required = ["counts", "geography", "microdata", "schema", "output_dir"]
        missing = [k for k in required if k not in doc]
        if missing:
            raise ConfigError(f"{path}: missing required config keys {missing}")

        try:
            ipf_cfg = IpfConfig(
                tolerance=float(ipf_doc.get("tolerance", 1e-6)),
                max_iterations=int(ipf_doc.get("max_iterations", 100)),
                epsilon=float(ipf_doc.get("epsilon", 0.01)),
            )
            variables = ipf_doc.get("variables")
            return cls(
                counts=resolve(doc["counts"]),
                geography=resolve(doc["geography"]),
                microdata=resolve(doc["microdata"]),
                schema=resolve(doc["schema"]),
                output_dir=resolve(doc["output_dir"]),
                characteristic_method=doc.get("characteristic_method", "srs"),
                location_method=doc.get("location_method", "uniform"),
                roads=resolve(doc.get("roads")),
                weights=resolve(doc.get("weights")),
                marginals=resolve(doc.get("marginals")),
                moments=resolve(doc.get("moments")),
                environments=tuple(environments),
                master_seed=int(doc.get("master_seed", 0)),
                parallelism=int(doc.get("parallelism", 1)),
                version_tag=str(doc.get("version_tag", __version__)),
                strict=bool(doc.get("strict", False)),
                ipf=ipf_cfg,
                ipf_alpha=float(ipf_doc.get("alpha", 0.0)),
                ipf_exponent=float(ipf_doc.get("exponent", 1.0)),
                ipf_variables=tuple(variables) if variables else None,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}")


def region_seed(master_seed: int, region_id: str) -> int:
    """Stable 64-bit stream seed for one region of one run."""
    digest = hashlib.sha256(f"{master_seed}:{region_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationIssue:
    level: str
    rule: str
    path: str
    message: str
    line: int | None = None

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "rule": self.rule,
            "path": self.path,
            "message": self.message,
            "line": self.line,
        }

    def __str__(self):
        where = f"{self.path}:{self.line}" if self.line is not None else self.path
        return f"{self.level}: {where} [{self.rule}] {self.message}"


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def errors(self) -> list:
        return [i for i in self.issues if i.level == "error"]

    @property
    def warnings(self) -> list:
        return [i for i in self.issues if i.level == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, rule, path, message, line=None):
        self.issues.append(ValidationIssue("error", rule, str(path), message, line))

    def warning(self, rule, path, message, line=None):
        self.issues.append(ValidationIssue("warning", rule, str(path), message, line))

    def absorb(self, exc: InputError):
        self.issues.append(
            ValidationIssue("error", exc.rule, exc.path, exc.message, exc.line)
        )

    def to_dict(self) -> dict:
        return {"ok": self.ok, "issues": [i.to_dict() for i in self.issues]}


@dataclass
class Region:
    """One unit of generation, with everything resolved for it."""

    region_id: str
    count: int
    count_type: str
    polygons: list = field(default_factory=list)
    roads: list = field(default_factory=list)
    weighted: WeightedGeometrySet | None = None
    marginals: list = field(default_factory=list)
    moment: MomentTarget | None = None


@dataclass
class RunResources:
    """Inputs shared by every region job of a run."""

    binnings: tuple | None = None
    seed_table: ContingencyTable | None = None
    beckman: BeckmanParams | None = None
    components: dict = field(default_factory=dict)


@dataclass
class LoadedInputs:
    counts: list
    micro: MicrodataTable
    regions: list
    resources: RunResources
    marginals: list = field(default_factory=list)


def _load_weight_sets(path) -> dict[str, WeightedGeometrySet]:
    """Weighted sampling geometries per region from a FeatureCollection."""
    items: dict[str, list] = {}
    for i, feature in enumerate(_load_feature_collection(path, "weights")):
        region_id = _feature_region_id(feature, i, path, "weights")
        props = feature.get("properties") or {}
        weight = props.get("weight")
        if weight is None or float(weight) < 0:
            raise InputError(
                path, "weights-weight",
                f"feature {i} ({region_id}) needs a nonnegative 'weight' property",
            )
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        try:
            if gtype == "Polygon":
                geoms = [PolygonRegion(coords[0], holes=coords[1:])]
            elif gtype == "LineString":
                geoms = [Polyline(coords)]
            else:
                raise InputError(
                    path, "weights-geometry-type",
                    f"feature {i} ({region_id}): unsupported geometry type {gtype!r}",
                )
        except (GeometryError, TypeError, IndexError) as exc:
            raise InputError(
                path, "weights-geometry", f"feature {i} ({region_id}): {exc}"
            )
        items.setdefault(region_id, []).extend(
            (g, float(weight)) for g in geoms
        )
    out = {}
    for region_id, pairs in items.items():
        try:
            out[region_id] = WeightedGeometrySet(pairs)
        except GeometryError as exc:
            raise InputError(path, "weights-set", f"region {region_id}: {exc}")
    return out


def _build_binnings(
    variables, schema: dict, marginals: list, path_for_errors: str
) -> tuple[VariableBinning, ...]:
    """Binning per fitted variable, reconciled with marginal categories."""
    by_var: dict[str, list[MarginalTable]] = {}
    for m in marginals:
        by_var.setdefault(m.variable, []).append(m)
    out = []
    for var in variables:
        spec = schema.get(var)
        if spec is None:
            raise InputError(
                path_for_errors, "binning-schema",
                f"variable {var!r} is not declared in the microdata schema",
            )
        kind = spec["type"]
        if kind in ("ordinal", "continuous"):
            if "edges" not in spec or "categories" not in spec:
                raise InputError(
                    path_for_errors, "binning-edges",
                    f"{kind} variable {var!r} needs 'edges' and 'categories' "
                    f"in the schema to be fitted",
                )
            binning = VariableBinning(
                var, kind, tuple(spec["categories"]), tuple(float(e) for e in spec["edges"])
            )
        else:
            categories = spec.get("categories")
            if not categories:
                tables = by_var.get(var)
                if not tables:
                    raise InputError(
                        path_for_errors, "binning-categories",
                        f"categorical variable {var!r} has no category list in the "
                        f"schema and no marginal table to take one from",
                    )
                categories = tables[0].categories
            binning = VariableBinning(var, "categorical", tuple(categories))
        for table in by_var.get(var, []):
            if tuple(table.categories) != binning.categories:
                raise InputError(
                    path_for_errors, "binning-category-mismatch",
                    f"region {table.region_id} variable {var!r}: marginal "
                    f"categories {table.categories} do not match {binning.categories}",
                )
        out.append(binning)
    return tuple(out)


def _ipf_variables(cfg: GenerationConfig, marginals: list) -> tuple[str, ...]:
    if cfg.ipf_variables:
        return cfg.ipf_variables
    seen = []
    for m in marginals:
        if m.variable not in seen:
            seen.append(m.variable)
    return tuple(seen)


def validate_inputs(cfg: GenerationConfig) -> tuple[ValidationReport, LoadedInputs | None]:
    """Load and cross-validate every configured input.

    Returns the rule-by-rule report plus the harmonized inputs, or None when
    any rule failed. Malformed files become report entries, never tracebacks.
    """
    report = ValidationReport()

    def attempt(loader, *args):
        try:
            return loader(*args)
        except InputError as exc:
            report.absorb(exc)
            return None

    counts = attempt(load_counts, cfg.counts)
    geography = attempt(load_geography, cfg.geography, cfg.roads)
    micro = attempt(load_microdata, cfg.microdata, cfg.schema)
    marginals = attempt(load_marginals, cfg.marginals) if cfg.marginals else []
    moments = attempt(load_moment_targets, cfg.moments) if cfg.moments else []
    weight_sets = attempt(_load_weight_sets, cfg.weights) if cfg.weights else {}
    components: dict[str, EnvironmentalComponentSet] = {}
    for env in cfg.environments:
        full = attempt(load_components, env.components)
        if full is None:
            continue
        subset = full.for_kind(env.kind)
        if len(subset) == 0:
            report.error(
                "components-kind", env.components,
                f"no components of kind {env.kind!r}",
            )
        else:
            components[env.kind] = subset

    if counts is None or geography is None or micro is None or marginals is None \
            or moments is None or weight_sets is None:
        return report, None

    for w in check_marginal_consistency(marginals):
        report.warning("marginals-consistency", cfg.marginals, w)

    marg_by_region: dict[str, list[MarginalTable]] = {}
    for m in marginals:
        marg_by_region.setdefault(m.region_id, []).append(m)
    moment_by_region = {t.region_id: t for t in moments}

    resources = RunResources(components=components)
    if cfg.characteristic_method == "ipf":
        variables = _ipf_variables(cfg, marginals)
        if not variables:
            report.error("ipf-variables", cfg.marginals, "no variables to fit")
        else:
            try:
                binnings = _build_binnings(
                    variables, micro.schema, marginals, cfg.marginals
                )
                seed = seed_from_microdata(micro, variables, binnings)
                resources.binnings = binnings
                resources.seed_table = fill_zero_cells(seed, cfg.ipf.epsilon)
                numeric = frozenset(
                    v for v in variables
                    if micro.schema[v]["type"] in ("ordinal", "continuous")
                )
                resources.beckman = BeckmanParams(
                    alpha=cfg.ipf_alpha,
                    exponent=cfg.ipf_exponent,
                    numeric_variables=numeric,
                )
            except InputError as exc:
                report.absorb(exc)
            except ValueError as exc:
                report.error("ipf-seed", cfg.microdata, str(exc))

    if cfg.characteristic_method == "mm":
        for t in moments:
            kind = micro.schema.get(t.variable, {}).get("type")
            if kind not in ("ordinal", "continuous"):
                report.error(
                    "moments-variable", cfg.moments,
                    f"region {t.region_id}: variable {t.variable!r} must be "
                    f"ordinal or continuous",
                )
            elif t.variable in micro.household_characteristics:
                values = micro.household_values(t.variable)
                if not values.min() <= t.moment <= values.max():
                    report.error(
                        "moments-feasible", cfg.moments,
                        f"region {t.region_id}: moment {t.moment} outside "
                        f"[{values.min()}, {values.max()}]",
                    )
            else:
                report.error(
                    "moments-variable", cfg.moments,
                    f"{t.variable!r} is not a household characteristic",
                )

    regions = []
    variables = _ipf_variables(cfg, marginals) if cfg.characteristic_method == "ipf" else ()
    for c in sorted(counts, key=lambda c: c.region_id):
        geo = geography.get(c.region_id)
        if geo is None or not geo.polygons:
            report.error(
                "geography-coverage", cfg.geography,
                f"region {c.region_id} in the counts file has no geometry",
            )
            continue
        region = Region(
            region_id=c.region_id,
            count=c.count,
            count_type=c.count_type,
            polygons=geo.polygons,
            roads=geo.roads,
            weighted=weight_sets.get(c.region_id),
            marginals=marg_by_region.get(c.region_id, []),
            moment=moment_by_region.get(c.region_id),
        )
        if cfg.location_method == "roads":
            usable = [r for r in region.roads if not r.excluded]
            if not usable:
                report.error(
                    "roads-coverage", cfg.roads or cfg.geography,
                    f"region {c.region_id} has no usable road polylines",
                )
        if cfg.location_method == "weighted" and region.weighted is None:
            report.error(
                "weights-coverage", cfg.weights,
                f"region {c.region_id} has no weighted geometry",
            )
        if cfg.characteristic_method == "ipf":
            have = {m.variable for m in region.marginals}
            missing = [v for v in variables if v not in have]
            if missing:
                report.error(
                    "marginals-coverage", cfg.marginals,
                    f"region {c.region_id} lacks marginals for {missing}",
                )
        if cfg.characteristic_method == "mm" and region.moment is None:
            report.error(
                "moments-coverage", cfg.moments,
                f"region {c.region_id} has no moment target",
            )
        regions.append(region)

    if not report.ok:
        return report, None
    return report, LoadedInputs(
        counts=counts,
        micro=micro,
        regions=regions,
        resources=resources,
        marginals=marginals,
    )


# ---------------------------------------------------------------------------
# one region
# ---------------------------------------------------------------------------

@dataclass
class SyntheticEcosystem:
    """Generated households, persons, and assignments for one region."""

    region_id: str
    seed: int
    households: pd.DataFrame
    persons: pd.DataFrame
    assignments: dict = field(default_factory=dict)
    ipf_info: dict | None = None


def _characteristic_sampler(region, micro, cfg, resources, rng):
    """Return (batch, single, info) draw functions for household positions."""
    n_pool = micro.n_households
    method = cfg.characteristic_method
    if method == "srs":
        return (
            lambda n: rng.integers(0, n_pool, size=n),
            lambda: int(rng.integers(0, n_pool)),
            None,
        )
    if method == "mm":
        target = region.moment
        weights = qp_solve(micro.household_values(target.variable), target.moment)
        alias = AliasSampler(weights)
        return (
            lambda n: alias.draw(rng, n),
            lambda: int(alias.draw(rng, 1)[0]),
            None,
        )
    # ipf
    if resources is None or resources.seed_table is None:
        variables = _ipf_variables(cfg, region.marginals)
        binnings = _build_binnings(
            variables, micro.schema, region.marginals, cfg.marginals or "<marginals>"
        )
        seed_table = fill_zero_cells(
            seed_from_microdata(micro, variables, binnings), cfg.ipf.epsilon
        )
        numeric = frozenset(
            v for v in variables if micro.schema[v]["type"] in ("ordinal", "continuous")
        )
        beckman = BeckmanParams(
            alpha=cfg.ipf_alpha, exponent=cfg.ipf_exponent, numeric_variables=numeric
        )
    else:
        seed_table = resources.seed_table
        beckman = resources.beckman
    wanted = set(seed_table.variables)
    targets = [m for m in region.marginals if m.variable in wanted]
    fit = ipf_fit(seed_table, targets, cfg.ipf)
    if not fit.converged:
        if cfg.strict:
            raise GenerationError(
                f"region {region.region_id}: fit did not converge within "
                f"{cfg.ipf.max_iterations} sweeps (deviation {fit.max_deviation:.3g})"
            )
        logger.warning(
            "region %s: using unconverged fit (deviation %.3g)",
            region.region_id,
            fit.max_deviation,
        )
    sampler = IpfRecordSampler(fit.table, micro, beckman)
    info = {
        "converged": fit.converged,
        "iterations": fit.iterations,
        "max_deviation": fit.max_deviation,
    }
    return (
        lambda n: sampler.draw_batch(n, rng),
        lambda: sampler.draw_one(rng),
        info,
    )


def _sample_household_positions(region, micro, cfg, resources, rng):
    """Realize the target count: exact for households, first-reach for persons."""
    batch, single, info = _characteristic_sampler(region, micro, cfg, resources, rng)
    if region.count == 0:
        return np.empty(0, dtype=np.int64), info
    if region.count_type == "households":
        return np.asarray(batch(region.count), dtype=np.int64), info

    sizes = micro.household_sizes
    mean_size = float(sizes.mean())
    estimate = max(1, int(region.count / max(mean_size, 1e-9)))
    positions = np.asarray(batch(estimate), dtype=np.int64)
    cumulative = np.cumsum(sizes[positions])
    total = int(cumulative[-1]) if len(cumulative) else 0
    extras = []
    while total < region.count:
        p = single()
        extras.append(p)
        total += int(sizes[p])
    if extras:
        positions = np.concatenate([positions, np.asarray(extras, dtype=np.int64)])
        cumulative = np.cumsum(sizes[positions])
    # stop at the household that first reaches the target person count
    cut = int(np.searchsorted(cumulative, region.count, side="left"))
    return positions[: cut + 1], info


def _sample_locations(region, cfg, n, rng):
    if cfg.location_method == "roads":
        return sample_uniform_polylines(region.roads, n, rng)
    if cfg.location_method == "weighted":
        return sample_weighted_geometry(region.weighted, n, rng)
    if len(region.polygons) == 1:
        return sample_uniform_polygon(region.polygons[0], n, rng)
    geoset = WeightedGeometrySet(
        [(p, polygon_area(p)) for p in region.polygons]
    )
    return sample_weighted_geometry(geoset, n, rng)


def generate_region(
    region: Region,
    micro: MicrodataTable,
    cfg: GenerationConfig,
    seed: int,
    resources: RunResources | None = None,
) -> SyntheticEcosystem:
    """Generate one region's ecosystem from its own random stream.

    With ``count_type='households'`` exactly ``count`` households are drawn;
    with ``'persons'``, households are drawn until their cumulative person
    count first reaches the target (overshoot at most one household).
    """
    rng = np.random.default_rng(seed)
    positions, ipf_info = _sample_household_positions(region, micro, cfg, resources, rng)
    n = len(positions)

    household_ids = np.array(
        [f"{region.region_id}-{i + 1}" for i in range(n)], dtype=object
    )
    locations = _sample_locations(region, cfg, n, rng)
    households = pd.DataFrame(
        {
            "household_id": household_ids,
            "region_id": np.full(n, region.region_id, dtype=object),
            "longitude": locations[:, 0] if n else np.empty(0),
            "latitude": locations[:, 1] if n else np.empty(0),
        }
    )
    hh_chars = micro.households.iloc[positions][micro.household_characteristics]
    households = pd.concat([households, hh_chars.reset_index(drop=True)], axis=1)
    households["source_record_id"] = (
        micro.households["record_id"].to_numpy(dtype=object)[positions]
    )

    person_rows, lengths = micro.persons_for_positions(positions)
    total = int(lengths.sum())
    person_households = np.repeat(household_ids, lengths)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]) if n else np.empty(0, dtype=np.int64)
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, lengths) + 1
    person_ids = np.array(
        [f"{h}-{w}" for h, w in zip(person_households, within)], dtype=object
    )
    persons = pd.DataFrame(
        {"person_id": person_ids, "household_id": person_households}
    )
    person_chars = person_rows[micro.person_characteristics].reset_index(drop=True)
    persons = pd.concat([persons, person_chars], axis=1)

    assignments = {}
    if cfg.environments and (resources is None or not resources.components):
        component_sets = {
            env.kind: load_components(env.components).for_kind(env.kind)
            for env in cfg.environments
        }
    else:
        component_sets = resources.components if resources else {}
    if n and cfg.environments:
        agent_locations = np.repeat(locations, lengths, axis=0)
        for env in cfg.environments:
            comps = component_sets[env.kind]
            if env.assignment_fraction < 1.0:
                k = int(round(env.assignment_fraction * total))
                chosen = np.sort(rng.permutation(total)[:k])
            else:
                chosen = np.arange(total)
            assignments[env.kind] = gravity_assign_frame(
                person_ids[chosen],
                agent_locations[chosen],
                comps,
                env.gravity,
                rng,
            )
    elif cfg.environments:
        for env in cfg.environments:
            assignments[env.kind] = pd.DataFrame(
                {"agent_id": [], "kind": [], "component_id": []}
            )

    return SyntheticEcosystem(
        region_id=region.region_id,
        seed=seed,
        households=households,
        persons=persons,
        assignments=assignments,
        ipf_info=ipf_info,
    )


def write_outputs(eco: SyntheticEcosystem, out_dir) -> dict:
    """Write the region's CSV files; returns file names and row counts.

    Longitude and latitude serialize with nine decimal places; all other
    columns pass through unchanged from the microdata.
    """
    os.makedirs(out_dir, exist_ok=True)
    rid = eco.region_id

    households = eco.households.copy()
    households["longitude"] = [f"{v:.9f}" for v in households["longitude"]]
    households["latitude"] = [f"{v:.9f}" for v in households["latitude"]]
    hh_name = f"household_{rid}.csv"
    households.to_csv(os.path.join(out_dir, hh_name), index=False)

    people_name = f"people_{rid}.csv"
    eco.persons.to_csv(os.path.join(out_dir, people_name), index=False)

    env_files = {}
    rows_env = {}
    for kind, frame in sorted(eco.assignments.items()):
        name = f"env_{kind}_{rid}.csv"
        frame.to_csv(os.path.join(out_dir, name), index=False)
        env_files[kind] = name
        rows_env[kind] = int(len(frame))

    return {
        "files": {"households": hh_name, "people": people_name, "environments": env_files},
        "rows": {
            "households": int(len(eco.households)),
            "persons": int(len(eco.persons)),
            "assignments": rows_env,
        },
    }


# ---------------------------------------------------------------------------
# the whole run
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(payload):
    _WORKER_STATE["payload"] = payload


def _region_entry(region, micro, cfg, resources) -> dict:
    seed = region_seed(cfg.master_seed, region.region_id)
    started = time.perf_counter()
    try:
        eco = generate_region(region, micro, cfg, seed, resources)
        written = write_outputs(eco, cfg.output_dir)
        entry = {
            "region_id": region.region_id,
            "seed": seed,
            "status": "ok",
            "error": None,
            "ipf": eco.ipf_info,
            **written,
        }
    except GenerationError:
        raise
    except Exception as exc:  # a failing region must not sink the batch
        if cfg.strict:
            raise GenerationError(f"region {region.region_id}: {exc}") from exc
        logger.error("region %s failed: %s", region.region_id, exc)
        entry = {
            "region_id": region.region_id,
            "seed": seed,
            "status": "failed",
            "error": str(exc),
            "ipf": None,
            "files": {},
            "rows": {"households": 0, "persons": 0, "assignments": {}},
        }
    entry["wall_time_s"] = time.perf_counter() - started
    return entry


def _worker_region_entry(index: int) -> dict:
    cfg, micro, regions, resources = _WORKER_STATE["payload"]
    return _region_entry(regions[index], micro, cfg, resources)


def generate_ecosystem(cfg: GenerationConfig) -> dict:
    """Run every region, write per-region files plus a manifest, and return
    the run summary (region statuses, row counts, and wall times)."""
    report, loaded = validate_inputs(cfg)
    if not report.ok:
        raise ValidationFailed(report)
    micro = loaded.micro
    regions = loaded.regions
    resources = loaded.resources
    os.makedirs(cfg.output_dir, exist_ok=True)

    started = time.perf_counter()
    if cfg.parallelism <= 1 or len(regions) <= 1:
        entries = [_region_entry(r, micro, cfg, resources) for r in regions]
    else:
        payload = (cfg, micro, regions, resources)
        with ProcessPoolExecutor(
            max_workers=min(cfg.parallelism, len(regions)),
            initializer=_init_worker,
            initargs=(payload,),
        ) as pool:
            entries = list(pool.map(_worker_region_entry, range(len(regions))))
    entries.sort(key=lambda e: e["region_id"])

    manifest = {
        "version_tag": cfg.version_tag,
        "master_seed": cfg.master_seed,
        "characteristic_method": cfg.characteristic_method,
        "location_method": cfg.location_method,
        "regions": [
            {k: v for k, v in entry.items() if k != "wall_time_s"}
            for entry in entries
        ],
    }
    manifest_path = os.path.join(cfg.output_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")

    failed = [e["region_id"] for e in entries if e["status"] == "failed"]
    return {
        "output_dir": cfg.output_dir,
        "manifest": manifest_path,
        "master_seed": cfg.master_seed,
        "regions": [
            {
                "region_id": e["region_id"],
                "status": e["status"],
                "households": e["rows"]["households"],
                "persons": e["rows"]["persons"],
                "wall_time_s": e["wall_time_s"],
                "error": e["error"],
            }
            for e in entries
        ],
        "failed": failed,
        "total_wall_time_s": time.perf_counter() - started,
    }


# ---------------------------------------------------------------------------
# diagnostics over a finished run
# ---------------------------------------------------------------------------

def _read_manifest(output_dir) -> dict:
    path = os.path.join(output_dir, "manifest.json")
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(path, "manifest-file", "run the generate command first")


def diagnose_run(cfg: GenerationConfig) -> DiagnosticsReport:
    """Compare a finished run's marginals against the truth tables.

    Requires the config's marginals file; regions form one Bonferroni family
    per variable (they share one microdata pool).
    """
    if cfg.marginals is None:
        raise ConfigError("diagnose requires a marginals file in the config")
    manifest = _read_manifest(cfg.output_dir)
    micro = load_microdata(cfg.microdata, cfg.schema)
    marginals = load_marginals(cfg.marginals)
    variables = []
    for m in marginals:
        if m.variable not in variables and m.variable in micro.household_characteristics:
            variables.append(m.variable)
    binnings = _build_binnings(variables, micro.schema, marginals, cfg.marginals)
    by_region: dict[str, dict[str, MarginalTable]] = {}
    for m in marginals:
        by_region.setdefault(m.region_id, {})[m.variable] = m

    regions = []
    for entry in manifest["regions"]:
        rid = entry["region_id"]
        if entry["status"] != "ok":
            regions.append(
                RegionDiagnostics(
                    region_id=rid, households=0, persons=0,
                    flags=[f"generation failed: {entry['error']}"],
                )
            )
            continue
        truth = by_region.get(rid, {})
        hh_path = os.path.join(cfg.output_dir, entry["files"]["households"])
        frame = pd.read_csv(hh_path, dtype=str, keep_default_na=False)
        observed = {}
        truth_used = {}
        for binning in binnings:
            if binning.variable not in truth or binning.variable not in frame.columns:
                continue
            values = frame[binning.variable]
            if binning.is_numeric:
                values = pd.to_numeric(values, errors="coerce").to_numpy()
            idx = binning.bin_indices(values)
            counts = np.bincount(idx[idx >= 0], minlength=len(binning.categories))
            observed[binning.variable] = counts
            truth_used[binning.variable] = truth[binning.variable]
        gofs, maes, bars = ([], {}, {})
        if observed and len(frame):
            gofs, maes, bars = evaluate_region_marginals(rid, observed, truth_used)
        regions.append(
            RegionDiagnostics(
                region_id=rid,
                households=entry["rows"]["households"],
                persons=entry["rows"]["persons"],
                mae_by_variable=maes,
                gof=gofs,
                marginals=bars,
                ipf=entry.get("ipf"),
            )
        )

    capacity = _capacity_utilization(cfg, manifest)
    return build_report(
        version_tag=manifest["version_tag"],
        master_seed=manifest["master_seed"],
        characteristic_method=manifest["characteristic_method"],
        regions=regions,
        capacity_utilization=capacity,
    )


def _capacity_utilization(cfg: GenerationConfig, manifest: dict) -> dict:
    out = {}
    for env in cfg.environments:
        comps = load_components(env.components).for_kind(env.kind)
        counts: dict[str, int] = {}
        for entry in manifest["regions"]:
            name = entry.get("files", {}).get("environments", {}).get(env.kind)
            if not name:
                continue
            frame = pd.read_csv(os.path.join(cfg.output_dir, name), dtype=str)
            for cid, k in frame["component_id"].value_counts().items():
                counts[cid] = counts.get(cid, 0) + int(k)
        rows = []
        for cid, capacity in zip(comps.ids, comps.capacities):
            assigned = counts.get(str(cid), 0)
            rows.append(
                {
                    "component_id": str(cid),
                    "capacity": int(capacity),
                    "assigned": assigned,
                    "utilization": assigned / float(capacity),
                }
            )
        out[env.kind] = rows
    return out


def render_report_files(cfg: GenerationConfig, report: DiagnosticsReport) -> list[str]:
    """Write report.md and one location map per region; returns the paths."""
    manifest = _read_manifest(cfg.output_dir)
    geography = load_geography(cfg.geography)
    files = []
    map_files = {}
    by_id = {e["region_id"]: e for e in manifest["regions"]}
    for region in report.regions:
        entry = by_id.get(region.region_id)
        if not entry or entry["status"] != "ok":
            continue
        geo = geography.get(region.region_id)
        if geo is None:
            continue
        hh_path = os.path.join(cfg.output_dir, entry["files"]["households"])
        frame = pd.read_csv(hh_path, usecols=["longitude", "latitude"])
        points = frame.to_numpy(dtype=float)
        svg = render_region_map_svg(geo.polygons, points)
        name = f"map_{region.region_id}.svg"
        with open(os.path.join(cfg.output_dir, name), "w") as fh:
            fh.write(svg)
        map_files[region.region_id] = name
        files.append(os.path.join(cfg.output_dir, name))
    md_path = os.path.join(cfg.output_dir, "report.md")
    with open(md_path, "w") as fh:
        fh.write(render_markdown(report, map_files))
    files.insert(0, md_path)
    json_path = os.path.join(cfg.output_dir, "diagnostics.json")
    if not os.path.exists(json_path):
        with open(json_path, "w") as fh:
            fh.write(report_to_json(report))
        files.append(json_path)
    return files
