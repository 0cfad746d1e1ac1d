"""Held-out validation: deterministic train/test split, baseline and
penalized benchmark models, and the synthetic-data machinery (pinned Poisson
sampler plus a national covariate fixture) used by the oracle tests.

The AR(1) baseline is a Poisson GLM on intercept + ln(lagged count + 1) with
no segmentation; the null row is the train-fitted intercept evaluated on the
test rows, and every pseudo R-squared in a report shares that denominator.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .features import build_design, model_spec
from .glm import fit_poisson, poisson_deviance, pseudo_r2
from .ingest import CountyRecord, CountyTable
from .regularized import fit_cv
from .reference import FORECASTING_COEFFS, coefficient_vector

SAMPLER_VERSION = "inv+ptrs/1"  # inversion below mean 10, transformed rejection above


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise DomainError("test fraction must lie in (0, 1)")


def split(table, spec):
    """Deterministic disjoint/exhaustive split; test size round(n * fraction)."""
    n = len(table.records)
    if n == 0:
        raise DomainError("cannot split an empty table")
    n_test = int(math.floor(n * spec.test_fraction + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    perm = rng.permutation(n)
    test_rows = set(perm[:n_test].tolist())
    test = tuple(r for i, r in enumerate(table.records) if i in test_rows)
    train = tuple(r for i, r in enumerate(table.records) if i not in test_rows)
    return (
        CountyTable(records=train, reference_year=table.reference_year),
        CountyTable(records=test, reference_year=table.reference_year),
    )


# --- pinned Poisson sampler ---

def _poisson_inversion(mu, rng):
    # sequential search; one uniform per draw
    p = math.exp(-mu)
    cdf = p
    k = 0
    u = rng.random()
    while u > cdf:
        k += 1
        p *= mu / k
        cdf += p
        if k > 10_000:  # cdf rounding guard; unreachable for mu < 10
            break
    return k

def _poisson_ptrs(mu, rng):
    # transformed rejection with squeeze; two uniforms per trial
    b = 0.931 + 2.53 * math.sqrt(mu)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_mu = math.log(mu)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= k * log_mu - mu - math.lgamma(k + 1.0)):
            return int(k)


def poisson_draws(mu, rng):
    """Seeded Poisson variates with a pinned algorithm (SAMPLER_VERSION)."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
        raise DomainError("Poisson means must be positive and finite")
    out = np.empty(mu.shape[0], dtype=int)
    for i, m in enumerate(mu):
        out[i] = _poisson_inversion(m, rng) if m < 10.0 else _poisson_ptrs(m, rng)
    return out


def simulate_counties(beta, table, spec=None, seed=0):
    """Redraw each county's current count from Poisson(exp(x.beta)).

    ``beta`` may be a vector in design order or a column-name mapping.
    Returns a new table with np_current replaced by the draws.
    """
    spec = spec or model_spec("forecasting")
    design = build_design(table, spec)
    if isinstance(beta, dict):
        beta = coefficient_vector(beta, design.columns)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (design.p,):
        raise DomainError(
            "beta has %d entries but the design has %d columns"
            % (beta.shape[0], design.p)
        )
    mu = np.exp(design.x @ beta)
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = poisson_draws(mu, rng)
    records = tuple(
        replace(rec, np_current=int(d)) for rec, d in zip(table.records, draws)
    )
    return CountyTable(records=records, reference_year=table.reference_year)


# --- national covariate fixture ---

_STATE_CODES = (
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA",
    "HI", "ID", "IL", "IN", "IA", "KS", "KY", "LA", "ME", "MD",
    "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ",
    "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA", "RI", "SC",
    "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY",
)

# segment sizes for the 3,141-county fixture: small, medium, large
_FIXTURE_SEGMENTS = (1312, 1599, 230)

# lagged-count distributions per segment (probabilities over consecutive
# counts starting at the given base); large counties start at 8 with a
# truncated geometric tail
_LAG_SMALL = (0, (0.13, 0.42, 0.35, 0.10))
_LAG_MEDIUM = (1, (0.22, 0.26, 0.20, 0.13, 0.09, 0.06, 0.04))


def _draw_categorical(rng, base, probs):
    u = rng.random()
    acc = 0.0
    for k, p in enumerate(probs):
        acc += p
        if u <= acc:
            return base + k
    return base + len(probs) - 1


def _draw_lag_large(rng):
    # geometric(ratio 0.977) shifted to 8, truncated at 107
    u = rng.random()
    k = int(math.floor(math.log(max(1.0 - u, 1e-300)) / math.log(0.977)))
    return 8 + min(k, 99)


def _clipped_normal(rng, mean, sd, lo, hi):
    return float(min(max(mean + sd * rng.standard_normal(), lo), hi))


def national_covariates(seed=0, n_small=None, n_medium=None, n_large=None,
                        reference_year=2023):
    """Synthetic 3,141-county covariate table with realistic marginals.

    Population segments have fixed sizes; lagged newspaper counts couple to
    segment (small 0-1, medium 1-7, large 8+), which mirrors real markets
    and keeps per-lag prediction bands separated. np_current is initialized
    to np_lag; use simulate_counties to draw a response.
    """
    sizes = (
        n_small if n_small is not None else _FIXTURE_SEGMENTS[0],
        n_medium if n_medium is not None else _FIXTURE_SEGMENTS[1],
        n_large if n_large is not None else _FIXTURE_SEGMENTS[2],
    )
    rng = np.random.Generator(np.random.PCG64(seed))
    records = []
    idx = 0
    for seg, count in zip("SML", sizes):
        for _ in range(count):
            if seg == "S":
                pop = int(round(math.exp(_clipped_normal(rng, 9.0, 1.10,
                                                         math.log(75), math.log(19_999)))))
                pop = min(pop, 19_999)
                lag = _draw_categorical(rng, *_LAG_SMALL)
                if lag == 3 and pop < 10_000:
                    # three-paper small markets sit at the top of the segment
                    lo, hi = math.log(10_000), math.log(19_999)
                    pop = int(round(math.exp(lo + (hi - lo) * rng.random())))
            elif seg == "M":
                pop = int(round(math.exp(_clipped_normal(rng, 10.8, 0.95,
                                                         math.log(20_000), math.log(300_000)))))
                pop = min(max(pop, 20_000), 300_000)
                lag = _draw_categorical(rng, *_LAG_MEDIUM)
            else:
                pop = int(round(math.exp(_clipped_normal(rng, 13.4, 1.10,
                                                         math.log(300_001), math.log(10_098_000)))))
                pop = max(pop, 300_001)
                lag = _draw_lag_large(rng)
            ln_black = _clipped_normal(rng, 1.50, 1.45, 0.0, 4.48)
            ln_hisp = _clipped_normal(rng, 1.82, 1.15, 0.0, 4.61)
            state_i = idx // 63
            county_no = (idx % 63) * 2 + 1
            records.append(CountyRecord(
                fips="%02d%03d" % (state_i + 1, county_no),
                name="County %04d" % idx,
                state=_STATE_CODES[state_i % len(_STATE_CODES)],
                np_current=lag,
                np_lag=lag,
                population=pop,
                pct_black=round(math.expm1(ln_black), 4),
                pct_hisp=round(math.expm1(ln_hisp), 4),
                median_income=round(_clipped_normal(rng, 55_000, 17_000, 20_188, 136_268), 2),
                median_age=round(_clipped_normal(rng, 41.29, 7.0, 21.7, 67.0), 2),
                pct_poverty=round(_clipped_normal(rng, 14.0, 6.0, 2.0, 45.0), 4),
                pct_bachelor=round(_clipped_normal(rng, 22.0, 9.0, 5.0, 80.0), 4),
                pct_less_hs=round(_clipped_normal(rng, 13.0, 6.0, 1.0, 50.0), 4),
                rucc=int(min(9, max(1, round(10.0 - math.log(pop) / 1.8)))),
            ))
            idx += 1
    return CountyTable(records=tuple(records), reference_year=reference_year)


def national_fixture(seed=0):
    """Covariates plus a seeded response drawn from the reference model."""
    table = national_covariates(seed=seed)
    return simulate_counties(FORECASTING_COEFFS, table, seed=seed)


# --- benchmark report ---

@dataclass(frozen=True)
class BenchmarkRow:
    name: str
    test_deviance: float | None
    pseudo_r2: float | None
    status: str  # "ok", "external", or "failed: ..."


@dataclass(frozen=True)
class ValidationReport:
    rows: tuple
    n_train: int
    n_test: int


_CANONICAL_ORDER = (
    "Null (intercept)", "Poisson linear", "AR(1)", "Lasso", "Ridge", "GBM",
)

DEFAULT_BENCHMARKS = ("null", "forecasting", "ar1", "lasso", "ridge", "gbm")

_BENCH_DISPLAY = {
    "null": "Null (intercept)",
    "forecasting": "Poisson linear",
    "ar1": "AR(1)",
    "lasso": "Lasso",
    "ridge": "Ridge",
    "gbm": "GBM",
}


def _test_mu(coef, design):
    return np.exp(design.x @ np.asarray(coef, dtype=float))


def run_benchmarks(train, test, names=DEFAULT_BENCHMARKS, cv_seed=0, folds=10):
    """Fit each benchmark on the training table, score it on the test table.

    Rows report held-out Poisson deviance and pseudo R-squared against the
    shared null-row deviance; failures mark the row and do not abort the
    report. The GBM row is an external placeholder.
    """
    null_train = fit_poisson(build_design(train, model_spec("null")))
    null_test_design = build_design(test, model_spec("null"))
    null_dev = poisson_deviance(
        null_test_design.y, _test_mu(null_train.beta, null_test_design)
    )

    rows = []
    for name in names:
        display = _BENCH_DISPLAY.get(name, name)
        if name == "gbm":
            rows.append(BenchmarkRow(display, None, None, "external"))
            continue
        try:
            if name == "null":
                dev = null_dev
            elif name in ("lasso", "ridge"):
                design_tr = build_design(train, model_spec("forecasting"))
                alpha = 1.0 if name == "lasso" else 0.0
                coefs, _ = fit_cv(design_tr, alpha, folds=folds, seed=cv_seed)
                design_te = build_design(test, model_spec("forecasting"))
                dev = poisson_deviance(design_te.y, _test_mu(coefs, design_te))
            else:
                spec = model_spec(name)
                fitted = fit_poisson(build_design(train, spec))
                design_te = build_design(test, spec)
                dev = poisson_deviance(design_te.y, _test_mu(fitted.beta, design_te))
        except Exception as exc:  # keep scoring the remaining rows
            rows.append(BenchmarkRow(display, None, None, "failed: %s" % exc))
            continue
        rows.append(BenchmarkRow(display, float(dev), pseudo_r2(null_dev, dev), "ok"))

    order = {name: i for i, name in enumerate(_CANONICAL_ORDER)}
    rows.sort(key=lambda r: (order.get(r.name, len(order)), r.name))
    return ValidationReport(rows=tuple(rows), n_train=len(train.records),
                            n_test=len(test.records))


def report_to_csv(report):
    lines = ["model,test_deviance,pseudo_r2,status"]
    for r in report.rows:
        dev = "" if r.test_deviance is None else repr(r.test_deviance)
        pr2 = "" if r.pseudo_r2 is None else repr(r.pseudo_r2)
        lines.append("%s,%s,%s,%s" % (r.name, dev, pr2, r.status))
    return "\n".join(lines) + "\n"


def report_to_text(report):
    lines = ["%-18s %12s %10s" % ("Model", "Deviance", "Pseudo-R2")]
    for r in report.rows:
        if r.test_deviance is None:
            lines.append("%-18s %12s %10s" % (r.name, "-", r.status))
        else:
            lines.append("%-18s %12.3f %9.2f%%"
                         % (r.name, r.test_deviance, 100.0 * r.pseudo_r2))
    lines.append("(train n=%d, test n=%d)" % (report.n_train, report.n_test))
    return "\n".join(lines) + "\n"
