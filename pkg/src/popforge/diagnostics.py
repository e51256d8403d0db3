"""Automated verification of generated ecosystems.

Per region and characteristic this compares generated marginal proportions
against the known truth with mean absolute error and a Pearson
goodness-of-fit statistic; p-values come from the chi-square upper tail,
computed here via the regularized incomplete gamma function so no
statistics library is needed. Regions sharing one microdata pool form a
Bonferroni family per characteristic.

The assembled report is deterministic: regenerating it from the same inputs
and seed yields byte-identical JSON (timestamps live in the run summary on
stdout, not here).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import PolygonRegion
from .ingest import MarginalTable

__all__ = [
    "GofResult",
    "RegionDiagnostics",
    "DiagnosticsReport",
    "mae",
    "chi_square_survival",
    "chi_square_gof",
    "bonferroni_adjust",
    "apply_bonferroni",
    "evaluate_region_marginals",
    "build_report",
    "report_to_json",
    "render_markdown",
    "render_region_map_svg",
]

REJECTION_LEVEL = 0.05
MIN_EXPECTED = 5.0
MAP_POINT_CAP = 10000


def mae(generated, truth) -> float:
    """Mean absolute error between two proportion vectors."""
    g = np.asarray(generated, dtype=float)
    t = np.asarray(truth, dtype=float)
    if g.shape != t.shape or g.ndim != 1:
        raise ValueError(f"length mismatch: {g.shape} vs {t.shape}")
    for name, v in (("generated", g), ("true", t)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} proportions sum to {v.sum()}, not 1")
    return float(np.abs(g - t).mean())


# ---------------------------------------------------------------------------
# chi-square tail via the regularized incomplete gamma function
# ---------------------------------------------------------------------------

def _lower_gamma_series(a: float, x: float) -> float:
    """P(a, x) by series expansion; accurate for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(1000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise RuntimeError("incomplete gamma series failed to converge")


def _upper_gamma_cf(a: float, x: float) -> float:
    """Q(a, x) by modified Lentz continued fraction; accurate for x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise RuntimeError("incomplete gamma continued fraction failed to converge")


def _regularized_upper_gamma(a: float, x: float) -> float:
    if a <= 0:
        raise ValueError("shape parameter must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return min(max(1.0 - _lower_gamma_series(a, x), 0.0), 1.0)
    return min(max(_upper_gamma_cf(a, x), 0.0), 1.0)


def chi_square_survival(statistic: float, df: int) -> float:
    """P(X >= statistic) for a chi-square variable with ``df`` degrees."""
    if df < 0:
        raise ValueError("df must be nonnegative")
    if df == 0:
        return 1.0 if statistic <= 0 else 0.0
    return _regularized_upper_gamma(df / 2.0, statistic / 2.0)


@dataclass
class GofResult:
    """One Pearson goodness-of-fit test, with its multiplicity adjustment."""

    region_id: str
    variable: str
    statistic: float
    df: int
    p_value: float
    adjusted_p: float | None = None
    rejected: bool | None = None


def _pool_sparse(observed: np.ndarray, expected: np.ndarray, min_expected: float):
    """Merge categories with small expected counts into a neighbour.

    The category with the smallest expected count merges into its adjacent
    neighbour (the smaller-expected one when both exist) until every
    expected count reaches the threshold or one category remains.
    """
    obs = list(observed.astype(float))
    exp = list(expected.astype(float))
    while len(exp) > 1 and min(exp) < min_expected:
        i = int(np.argmin(exp))
        if i == 0:
            j = 1
        elif i == len(exp) - 1:
            j = i - 1
        else:
            j = i - 1 if exp[i - 1] <= exp[i + 1] else i + 1
        exp[j] += exp[i]
        obs[j] += obs[i]
        del exp[i], obs[i]
    return np.array(obs), np.array(exp)


def chi_square_gof(
    observed_counts,
    expected_proportions,
    region_id: str = "",
    variable: str = "",
    min_expected: float = MIN_EXPECTED,
) -> GofResult:
    """Pearson test of observed category counts against known proportions.

    Expected counts below ``min_expected`` are pooled into a neighbouring
    category before computing the statistic; degrees of freedom are the
    pooled category count minus one.
    """
    observed = np.asarray(observed_counts, dtype=float)
    props = np.asarray(expected_proportions, dtype=float)
    if observed.shape != props.shape or observed.ndim != 1:
        raise ValueError("observed and expected must be 1-d and equal length")
    total = observed.sum()
    if not total > 0:
        raise ValueError("observed counts sum to zero")
    if abs(props.sum() - 1.0) > 1e-9:
        raise ValueError(f"expected proportions sum to {props.sum()}, not 1")
    if np.any(props < 0) or np.any(observed < 0):
        raise ValueError("counts and proportions must be nonnegative")

    obs, exp = _pool_sparse(observed, props * total, min_expected)
    bad = (exp <= 0) & (obs > 0)
    if np.any(bad):
        raise ValueError(
            f"{variable or 'variable'}: zero expected count with nonzero "
            f"observed count after pooling"
        )
    keep = exp > 0
    obs, exp = obs[keep], exp[keep]
    statistic = float(((obs - exp) ** 2 / exp).sum())
    df = len(exp) - 1
    return GofResult(
        region_id=region_id,
        variable=variable,
        statistic=statistic,
        df=df,
        p_value=chi_square_survival(statistic, df),
    )


def bonferroni_adjust(p_values: Sequence[float], family_size: int) -> list[float]:
    """min(1, m * p) per p-value for a family of ``family_size`` tests."""
    if family_size < len(list(p_values)):
        raise ValueError("family size smaller than the number of tests")
    return [min(1.0, family_size * p) for p in p_values]


def apply_bonferroni(
    results: Iterable[GofResult], level: float = REJECTION_LEVEL
) -> None:
    """Adjust p-values in place, one family per variable across regions."""
    families: dict[str, list[GofResult]] = {}
    for r in results:
        families.setdefault(r.variable, []).append(r)
    for family in families.values():
        adjusted = bonferroni_adjust([r.p_value for r in family], len(family))
        for r, p in zip(family, adjusted):
            r.adjusted_p = p
            r.rejected = p < level


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class RegionDiagnostics:
    """Everything the report keeps about one generated region."""

    region_id: str
    households: int
    persons: int
    mae_by_variable: dict = field(default_factory=dict)
    gof: list = field(default_factory=list)
    marginals: dict = field(default_factory=dict)
    ipf: dict | None = None
    flags: list = field(default_factory=list)


@dataclass
class DiagnosticsReport:
    version_tag: str
    master_seed: int
    characteristic_method: str
    regions: list
    capacity_utilization: dict = field(default_factory=dict)

    @property
    def flagged_regions(self) -> list[str]:
        return [r.region_id for r in self.regions if r.flags]


def evaluate_region_marginals(
    region_id: str,
    observed_counts: Mapping[str, np.ndarray],
    truth: Mapping[str, MarginalTable],
) -> tuple[list[GofResult], dict, dict]:
    """Per-variable GOF results, MAE, and barplot data for one region.

    ``observed_counts`` maps variable name to generated category counts
    aligned with the truth table's category order.
    """
    gofs: list[GofResult] = []
    maes: dict[str, float] = {}
    bars: dict[str, dict] = {}
    for variable in sorted(observed_counts):
        counts = np.asarray(observed_counts[variable], dtype=float)
        table = truth[variable]
        props = table.proportions
        generated = counts / counts.sum() if counts.sum() > 0 else counts
        maes[variable] = mae(generated, props) if counts.sum() > 0 else float("nan")
        gofs.append(
            chi_square_gof(counts, props, region_id=region_id, variable=variable)
        )
        bars[variable] = {
            "categories": list(table.categories),
            "generated": [float(x) for x in generated],
            "truth": [float(x) for x in props],
        }
    return gofs, maes, bars


def flag_region(region: RegionDiagnostics) -> None:
    """Derive the region's flags from its tests and fit records."""
    flags = []
    for g in region.gof:
        if g.rejected:
            flags.append(f"chi-square rejected for {g.variable}")
    if region.ipf is not None and not region.ipf.get("converged", True):
        flags.append("ipf did not converge")
    region.flags = flags


def build_report(
    version_tag: str,
    master_seed: int,
    characteristic_method: str,
    regions: list[RegionDiagnostics],
    capacity_utilization: dict | None = None,
) -> DiagnosticsReport:
    """Assemble the report: Bonferroni across regions, then flag regions."""
    all_gofs = [g for r in regions for g in r.gof]
    apply_bonferroni(all_gofs)
    for r in regions:
        flag_region(r)
    return DiagnosticsReport(
        version_tag=version_tag,
        master_seed=master_seed,
        characteristic_method=characteristic_method,
        regions=sorted(regions, key=lambda r: r.region_id),
        capacity_utilization=capacity_utilization or {},
    )


def report_to_json(report: DiagnosticsReport) -> str:
    """Canonical JSON rendering (stable key order, trailing newline)."""
    doc = {
        "version_tag": report.version_tag,
        "master_seed": report.master_seed,
        "characteristic_method": report.characteristic_method,
        "flagged_regions": report.flagged_regions,
        "capacity_utilization": report.capacity_utilization,
        "regions": [
            {
                "region_id": r.region_id,
                "households": r.households,
                "persons": r.persons,
                "mae_by_variable": r.mae_by_variable,
                "gof": [asdict(g) for g in r.gof],
                "marginals": r.marginals,
                "ipf": r.ipf,
                "flags": r.flags,
            }
            for r in report.regions
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> DiagnosticsReport:
    doc = json.loads(text)
    regions = [
        RegionDiagnostics(
            region_id=r["region_id"],
            households=r["households"],
            persons=r["persons"],
            mae_by_variable=r["mae_by_variable"],
            gof=[GofResult(**g) for g in r["gof"]],
            marginals=r["marginals"],
            ipf=r["ipf"],
            flags=r["flags"],
        )
        for r in doc["regions"]
    ]
    return DiagnosticsReport(
        version_tag=doc["version_tag"],
        master_seed=doc["master_seed"],
        characteristic_method=doc["characteristic_method"],
        regions=regions,
        capacity_utilization=doc["capacity_utilization"],
    )


def render_markdown(report: DiagnosticsReport, map_files: Mapping[str, str] | None = None) -> str:
    """Human-readable summary of the report."""
    lines = [
        "# Synthetic ecosystem diagnostics",
        "",
        f"- version: {report.version_tag}",
        f"- master seed: {report.master_seed}",
        f"- characteristic sampling: {report.characteristic_method}",
        f"- regions: {len(report.regions)}",
        f"- flagged regions: {len(report.flagged_regions)}",
        "",
    ]
    for r in report.regions:
        lines.append(f"## Region {r.region_id}")
        lines.append("")
        lines.append(f"- households: {r.households}")
        lines.append(f"- persons: {r.persons}")
        if r.marginals:
            available = ", ".join(sorted(r.marginals))
            lines.append(f"- characteristics: {available}")
        if r.ipf is not None:
            lines.append(
                f"- fit: converged={r.ipf.get('converged')} "
                f"iterations={r.ipf.get('iterations')} "
                f"max_deviation={r.ipf.get('max_deviation'):.3g}"
            )
        if map_files and r.region_id in map_files:
            lines.append(f"- map: ![{r.region_id}]({map_files[r.region_id]})")
        if r.flags:
            lines.append(f"- flags: {'; '.join(r.flags)}")
        lines.append("")
        if r.gof:
            lines.append("| variable | MAE | chi2 | df | p | adjusted p | rejected |")
            lines.append("|---|---|---|---|---|---|---|")
            for g in r.gof:
                lines.append(
                    f"| {g.variable} | {r.mae_by_variable.get(g.variable, float('nan')):.4g} "
                    f"| {g.statistic:.4g} | {g.df} | {g.p_value:.3g} "
                    f"| {g.adjusted_p if g.adjusted_p is None else round(g.adjusted_p, 6)} "
                    f"| {g.rejected} |"
                )
            lines.append("")
        for variable, bar in sorted(r.marginals.items()):
            lines.append(f"### {r.region_id}: {variable}")
            lines.append("")
            lines.append("| category | generated | truth |")
            lines.append("|---|---|---|")
            for cat, gen, tru in zip(bar["categories"], bar["generated"], bar["truth"]):
                lines.append(f"| {cat} | {gen:.4f} | {tru:.4f} |")
            lines.append("")
    return "\n".join(lines)


def render_region_map_svg(
    polygons: Sequence[PolygonRegion],
    points: np.ndarray,
    max_points: int = MAP_POINT_CAP,
    width: float = 640.0,
) -> str:
    """Static SVG of region outlines with a capped subsample of locations."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)[:max_points]
    lons = [p.exterior[:, 0] for p in polygons]
    lats = [p.exterior[:, 1] for p in polygons]
    if len(points):
        lons.append(points[:, 0])
        lats.append(points[:, 1])
    all_lon = np.concatenate(lons)
    all_lat = np.concatenate(lats)
    lon0, lon1 = float(all_lon.min()), float(all_lon.max())
    lat0, lat1 = float(all_lat.min()), float(all_lat.max())
    span_lon = max(lon1 - lon0, 1e-9)
    span_lat = max(lat1 - lat0, 1e-9)
    scale = width / span_lon
    height = span_lat * scale

    def sx(lon):
        return (lon - lon0) * scale

    def sy(lat):
        return (lat1 - lat) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.1f} {height:.1f}">'
    ]
    for poly in polygons:
        for ring in [poly.exterior, *poly.holes]:
            d = "M " + " L ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in ring) + " Z"
            parts.append(f'<path d="{d}" fill="none" stroke="#333" stroke-width="1"/>')
    for x, y in points:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.2" fill="#1f77b4" fill-opacity="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
