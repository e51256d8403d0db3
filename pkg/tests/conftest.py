import json

import numpy as np
import pandas as pd
import pytest

from popforge.ingest import MicrodataTable


def make_micro(hh_rows, person_rows, schema) -> MicrodataTable:
    """Build a MicrodataTable directly from row dicts (no files)."""
    hh = pd.DataFrame(hh_rows)
    hh["role"] = "household"
    if "weight" not in hh.columns:
        hh["weight"] = 1.0
    pp = pd.DataFrame(person_rows)
    pp["role"] = "person"
    if "weight" not in pp.columns:
        pp["weight"] = 1.0
    return MicrodataTable(hh, pp, schema)


@pytest.fixture
def simple_micro() -> MicrodataTable:
    """Three households (sizes 1, 2, 3) with one ordinal and one categorical."""
    schema = {
        "hh_size": {"type": "ordinal", "edges": [1, 2, 3, 4], "categories": ["1", "2", "3"]},
        "tenure": {"type": "categorical", "categories": ["own", "rent"]},
        "age": {"type": "continuous"},
    }
    hh_rows = [
        {"record_id": "H1", "household_serial": "S1", "hh_size": 1, "tenure": "own"},
        {"record_id": "H2", "household_serial": "S2", "hh_size": 2, "tenure": "rent"},
        {"record_id": "H3", "household_serial": "S3", "hh_size": 3, "tenure": "own"},
    ]
    person_rows = [
        {"record_id": "P1", "household_serial": "S1", "age": 40},
        {"record_id": "P2", "household_serial": "S2", "age": 35},
        {"record_id": "P3", "household_serial": "S2", "age": 33},
        {"record_id": "P4", "household_serial": "S3", "age": 50},
        {"record_id": "P5", "household_serial": "S3", "age": 48},
        {"record_id": "P6", "household_serial": "S3", "age": 12},
    ]
    return make_micro(hh_rows, person_rows, schema)


def random_micro(rng: np.random.Generator, n_households: int = 200) -> MicrodataTable:
    """Random pool with dependent characteristics, sizes 1..6."""
    sizes = rng.integers(1, 7, size=n_households)
    tenure = np.where(rng.random(n_households) < 0.3 + 0.1 * (sizes > 3), "own", "rent")
    income = rng.integers(1, 5, size=n_households) * 25000
    hh_rows = [
        {
            "record_id": f"H{i}",
            "household_serial": f"S{i}",
            "hh_size": int(sizes[i]),
            "tenure": str(tenure[i]),
            "income": int(income[i]),
        }
        for i in range(n_households)
    ]
    person_rows = []
    for i in range(n_households):
        for j in range(sizes[i]):
            person_rows.append(
                {
                    "record_id": f"P{i}_{j}",
                    "household_serial": f"S{i}",
                    "age": int(rng.integers(0, 95)),
                }
            )
    schema = {
        "hh_size": {
            "type": "ordinal",
            "edges": [1, 2, 3, 4, 5, 6, 7],
            "categories": ["1", "2", "3", "4", "5", "6"],
        },
        "tenure": {"type": "categorical", "categories": ["own", "rent"]},
        "income": {
            "type": "ordinal",
            "edges": [0, 30000, 60000, 90000, 120000],
            "categories": ["low", "mid", "high", "top"],
        },
        "age": {"type": "continuous"},
    }
    return make_micro(hh_rows, person_rows, schema)


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


# ---------------------------------------------------------------------------
# full-run input builder
# ---------------------------------------------------------------------------

RUN_SCHEMA = {
    "variables": {
        "hh_size": {
            "type": "ordinal",
            "edges": [1, 2, 3, 4, 5],
            "categories": ["1", "2", "3", "4"],
        },
        "tenure": {"type": "categorical", "categories": ["own", "rent"]},
        "age": {"type": "continuous"},
    }
}

RUN_MICRODATA = (
    "record_id,household_serial,role,weight,hh_size,tenure,age\n"
    "H1,S1,household,1,1,own,\n"
    "P1a,S1,person,,,,71\n"
    "H2,S2,household,1,2,rent,\n"
    "P2a,S2,person,,,,30\n"
    "P2b,S2,person,,,,28\n"
    "H3,S3,household,1,3,own,\n"
    "P3a,S3,person,,,,45\n"
    "P3b,S3,person,,,,44\n"
    "P3c,S3,person,,,,12\n"
    "H4,S4,household,1,4,rent,\n"
    "P4a,S4,person,,,,38\n"
    "P4b,S4,person,,,,36\n"
    "P4c,S4,person,,,,9\n"
    "P4d,S4,person,,,,6\n"
    "H5,S5,household,1,2,own,\n"
    "P5a,S5,person,,,,65\n"
    "P5b,S5,person,,,,63\n"
    "H6,S6,household,1,3,rent,\n"
    "P6a,S6,person,,,,52\n"
    "P6b,S6,person,,,,50\n"
    "P6c,S6,person,,,,17\n"
)


def region_square(i: int):
    """Unit square for the i-th region, offset along the equator."""
    x = 2.0 * i
    return [[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0], [x, 0.0]]


def write_run_inputs(
    tmp_path,
    region_specs,
    method="srs",
    location="uniform",
    master_seed=42,
    parallelism=1,
    with_environment=False,
    marginals_rows=None,
    moments_rows=None,
    out_name="out",
    strict=False,
    ipf_block=None,
    microdata_csv=RUN_MICRODATA,
    schema=RUN_SCHEMA,
    polygon_override=None,
):
    """Write a complete, consistent input set and return the config path.

    ``region_specs`` is a list of (region_id, count, count_type). Regions are
    unit squares spread along the equator, each with one road diagonal.
    """
    tmp_path.mkdir(parents=True, exist_ok=True)
    counts_lines = ["region_id,count,count_type"]
    features = []
    road_features = []
    for i, (rid, count, count_type) in enumerate(region_specs):
        counts_lines.append(f"{rid},{count},{count_type}")
        ring = polygon_override(rid, i) if polygon_override else region_square(i)
        features.append(
            {
                "type": "Feature",
                "properties": {"region_id": rid},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
        x = 2.0 * i
        road_features.append(
            {
                "type": "Feature",
                "properties": {"region_id": rid},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[x + 0.1, 0.1], [x + 0.9, 0.9]],
                },
            }
        )
        road_features.append(
            {
                "type": "Feature",
                "properties": {"region_id": rid, "excluded": True},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[x + 0.1, 0.9], [x + 0.9, 0.95]],
                },
            }
        )

    (tmp_path / "counts.csv").write_text("\n".join(counts_lines) + "\n")
    write_json(tmp_path / "regions.geojson", {"type": "FeatureCollection", "features": features})
    write_json(tmp_path / "roads.geojson", {"type": "FeatureCollection", "features": road_features})
    (tmp_path / "micro.csv").write_text(microdata_csv)
    write_json(tmp_path / "schema.json", schema)

    config = {
        "counts": "counts.csv",
        "geography": "regions.geojson",
        "roads": "roads.geojson",
        "microdata": "micro.csv",
        "schema": "schema.json",
        "characteristic_method": method,
        "location_method": location,
        "master_seed": master_seed,
        "parallelism": parallelism,
        "output_dir": out_name,
        "strict": strict,
    }

    if method == "ipf" or marginals_rows is not None:
        if marginals_rows is None:
            marginals_rows = []
            for rid, count, _ in region_specs:
                n = max(count, 100)
                for cat, share in zip(["1", "2", "3", "4"], [0.1, 0.4, 0.3, 0.2]):
                    marginals_rows.append((rid, "hh_size", cat, round(n * share, 3)))
                for cat, share in zip(["own", "rent"], [0.55, 0.45]):
                    marginals_rows.append((rid, "tenure", cat, round(n * share, 3)))
        lines = ["region_id,variable,category,total"]
        lines += [f"{r},{v},{c},{t}" for r, v, c, t in marginals_rows]
        (tmp_path / "marginals.csv").write_text("\n".join(lines) + "\n")
        config["marginals"] = "marginals.csv"

    if method == "mm" or moments_rows is not None:
        if moments_rows is None:
            moments_rows = [(rid, "hh_size", 2.5) for rid, _, _ in region_specs]
        lines = ["region_id,variable,moment"]
        lines += [f"{r},{v},{m}" for r, v, m in moments_rows]
        (tmp_path / "moments.csv").write_text("\n".join(lines) + "\n")
        config["moments"] = "moments.csv"

    if with_environment:
        rows = ["component_id,kind,longitude,latitude,capacity"]
        for i, (rid, _, _) in enumerate(region_specs):
            x = 2.0 * i
            rows.append(f"school_{rid}_a,school,{x + 0.25},0.5,100")
            rows.append(f"school_{rid}_b,school,{x + 0.75},0.5,600")
        (tmp_path / "schools.csv").write_text("\n".join(rows) + "\n")
        config["environments"] = [
            {
                "kind": "school",
                "components": "schools.csv",
                "gravity": {"breakpoints": [[0, 1], [500, 2]], "distance_floor_km": 0.01},
                "assignment_fraction": 1.0,
            }
        ]

    if ipf_block:
        config["ipf"] = ipf_block

    config_path = tmp_path / "config.json"
    write_json(config_path, config)
    return config_path
