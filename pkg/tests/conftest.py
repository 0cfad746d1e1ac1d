import json

import numpy as np
import pytest

from newsdeserts.features import DesignMatrix
from newsdeserts.ingest import CountyRecord, CountyTable


def make_record(fips="01001", **overrides):
    base = dict(
        fips=fips,
        name="Test County",
        state="AL",
        np_current=1,
        np_lag=1,
        population=15_000,
        pct_black=5.0,
        pct_hisp=3.0,
        median_income=50_000.0,
        median_age=41.0,
    )
    base.update(overrides)
    return CountyRecord(**base)


@pytest.fixture
def small_table():
    """Nine counties spanning all three population segments."""
    recs = []
    pops = [1_000, 5_000, 18_000, 25_000, 60_000, 250_000, 400_000, 900_000, 2_000_000]
    lags = [0, 1, 1, 2, 3, 4, 8, 12, 20]
    for i, (pop, lag) in enumerate(zip(pops, lags)):
        recs.append(make_record(
            fips="01%03d" % (2 * i + 1),
            population=pop,
            np_lag=lag,
            np_current=lag,
            pct_black=float(3 + i * 7),
            pct_hisp=float(2 + i * 5),
            median_income=35_000.0 + 6_000.0 * i,
            median_age=30.0 + 2.5 * i,
            pct_poverty=10.0 + i,
            pct_bachelor=15.0 + i,
            pct_less_hs=8.0 + i,
            rucc=1 + (i % 9),
        ))
    return CountyTable(records=tuple(recs), reference_year=2023)


@pytest.fixture(scope="session")
def medium_table():
    """100 synthetic counties with a seeded response; big enough to fit the
    full segment-interaction designs."""
    from newsdeserts.reference import FORECASTING_COEFFS
    from newsdeserts.validation import national_covariates, simulate_counties

    cov = national_covariates(seed=5, n_small=40, n_medium=40, n_large=20)
    return simulate_counties(FORECASTING_COEFFS, cov, seed=5)


def simple_design(x, y, names=None, unpenalized=("(Intercept)",)):
    x = np.asarray(x, dtype=float)
    names = tuple(names or ["(Intercept)"] + ["x%d" % i for i in range(1, x.shape[1])])
    return DesignMatrix(
        x=x,
        columns=names,
        fips=tuple("%05d" % (i + 1) for i in range(x.shape[0])),
        y=np.asarray(y, dtype=float),
        lag_counts=np.zeros(x.shape[0], dtype=int),
        unpenalized=tuple(unpenalized),
    )


@pytest.fixture
def toy_geometry_doc():
    """Three unit-square counties in GeoJSON form."""
    features = []
    for i, fips in enumerate(["01001", "01003", "01005"]):
        x = -96.0 + 2.0 * i
        ring = [[x, 38.0], [x + 1.0, 38.0], [x + 1.0, 39.0], [x, 39.0], [x, 38.0]]
        features.append({
            "type": "Feature",
            "properties": {"GEOID": fips},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        })
    return {"type": "FeatureCollection", "features": features}


@pytest.fixture
def toy_geometry_path(tmp_path, toy_geometry_doc):
    path = tmp_path / "geo.json"
    path.write_text(json.dumps(toy_geometry_doc))
    return str(path)
