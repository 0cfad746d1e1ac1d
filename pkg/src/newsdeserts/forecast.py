"""Per-county forecasts from a fitted model: linear predictors, expected
counts, desert probabilities, risk-mode labels, lag-count summaries, and
Pearson residuals.

Risk modes partition counties by (lagged newspaper count, probability of not
being a desert). Band gaps attach to the nearest band edge, exact midpoints
rounding down, which makes the classification total.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ColumnMismatch, DomainError


@dataclass(frozen=True)
class Mode:
    label: str
    display_color: str
    band: str  # documented probability band, for legends


# The per-lag probability bands; midpoint 0.30 closes the 0.27-0.33 gap.
MODES = {
    "A": Mode("A", "black", ".21-.27"),
    "B": Mode("B", "gray", ".33-.35"),
    "OutlierND": Mode("OutlierND", "light gray", ">.35"),
    "C": Mode("C", "dark orange", ".55-.62"),
    "D": Mode("D", "orange", ".63-.66"),
    "E": Mode("E", "yellow", ".73-.81"),
    "F": Mode("F", "dark green", ".80-.84"),
    "G": Mode("G", "blue", ".86-.92"),
    "Safe3Plus": Mode("Safe3Plus", "dark blue", ".92-1"),
}
MODE_ORDER = ("A", "B", "OutlierND", "C", "D", "E", "F", "G", "Safe3Plus")


@dataclass(frozen=True)
class ForecastRecord:
    fips: str
    eta: float
    mu: float
    p_desert: float
    p_not_desert: float
    lag_count: int
    mode: Mode
    pearson_residual: float | None = None


def desert_probability(mu):
    """(P(Y=0), P(Y>0)) for a Poisson mean; the pair sums to exactly 1."""
    if mu <= 0:
        raise DomainError("mu must be positive")
    p0 = math.exp(-mu)
    return p0, 1.0 - p0


def poisson_pmf(mu, y):
    """Poisson probability mass, evaluated in log space."""
    if mu <= 0:
        raise DomainError("mu must be positive")
    if y < 0 or y != int(y):
        raise DomainError("y must be a nonnegative integer")
    y = int(y)
    return math.exp(y * math.log(mu) - mu - math.lgamma(y + 1))


def classify_mode(lag_count, p_not):
    """Risk mode from (lagged count group, probability of not being a desert)."""
    if not 0.0 <= p_not <= 1.0:
        raise DomainError("probability outside [0, 1]")
    if lag_count < 0:
        raise DomainError("lag count must be nonnegative")
    if lag_count == 0:
        if p_not <= 0.30:
            return MODES["A"]
        if p_not <= 0.35:
            return MODES["B"]
        return MODES["OutlierND"]
    if lag_count == 1:
        if p_not <= 0.62:
            return MODES["C"]
        if p_not >= 0.73:
            return MODES["E"]
        return MODES["D"]
    if lag_count == 2:
        if p_not <= 0.84:
            return MODES["F"]
        return MODES["G"]
    return MODES["Safe3Plus"]


def predict(model, design):
    """Row-wise forecasts eta = X.beta, mu = exp(eta) with mode labels."""
    if tuple(design.columns) != tuple(model.column_names):
        raise ColumnMismatch(
            "design columns %s do not match model columns %s"
            % (list(design.columns), list(model.column_names))
        )
    eta = design.x @ model.beta
    records = []
    for i, fips in enumerate(design.fips):
        e = float(eta[i])
        mu = math.exp(e)
        p0, p_not = desert_probability(mu)
        lag = int(design.lag_counts[i])
        records.append(ForecastRecord(
            fips=fips, eta=e, mu=mu, p_desert=p0, p_not_desert=p_not,
            lag_count=lag, mode=classify_mode(lag, p_not),
        ))
    return tuple(records)


def pearson_residuals(y, mu):
    """(y - mu) / sqrt(mu), elementwise."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise DomainError("mu must be strictly positive")
    return (y - mu) / np.sqrt(mu)


def residual_bucket(r):
    """Map bucket flips exactly at +-1; the closed band is 'as-expected'."""
    if r > 1.0:
        return "over-performing"
    if r < -1.0:
        return "under-performing"
    return "as-expected"


def attach_residuals(records, y):
    """Return records with Pearson residuals computed against observed counts."""
    if len(y) != len(records):
        raise DomainError("observed counts do not align with records")
    res = pearson_residuals(y, np.array([r.mu for r in records]))
    return tuple(replace(rec, pearson_residual=float(ri))
                 for rec, ri in zip(records, res))


@dataclass(frozen=True)
class LagSummaryRow:
    lag_count: int
    n: int
    eta_mean: float
    eta_min: float
    eta_max: float
    mu_mean: float
    mu_min: float
    mu_max: float
    p_not_mean: float
    p_not_min: float
    p_not_max: float


def summarize_by_lag(records):
    """Mean/min/max of eta, mu and P(not desert) per lagged newspaper count."""
    if not records:
        raise DomainError("no records to summarize")
    groups = {}
    for rec in records:
        groups.setdefault(rec.lag_count, []).append(rec)
    rows = []
    for lag in sorted(groups):
        recs = groups[lag]
        eta = np.array([r.eta for r in recs])
        mu = np.array([r.mu for r in recs])
        pn = np.array([r.p_not_desert for r in recs])
        rows.append(LagSummaryRow(
            lag_count=lag, n=len(recs),
            eta_mean=float(eta.mean()), eta_min=float(eta.min()), eta_max=float(eta.max()),
            mu_mean=float(mu.mean()), mu_min=float(mu.min()), mu_max=float(mu.max()),
            p_not_mean=float(pn.mean()), p_not_min=float(pn.min()), p_not_max=float(pn.max()),
        ))
    return tuple(rows)


def lag_summary_to_csv(rows):
    lines = ["lag_count,n,eta_mean,eta_min,eta_max,mu_mean,mu_min,mu_max,"
             "p_not_mean,p_not_min,p_not_max"]
    for r in rows:
        lines.append(",".join(
            [str(r.lag_count), str(r.n)]
            + [repr(v) for v in (r.eta_mean, r.eta_min, r.eta_max,
                                 r.mu_mean, r.mu_min, r.mu_max,
                                 r.p_not_mean, r.p_not_min, r.p_not_max)]
        ))
    return "\n".join(lines) + "\n"


def lag_summary_to_text(rows):
    head = "%4s | %7s %7s %7s | %7s %7s %7s | %6s %6s %6s" % (
        "#NP", "log mean", "min", "max", "mean", "min", "max", "mean", "min", "max")
    lines = ["     | log expected count      | expected count          | P(#NP>0)",
             head]
    for r in rows:
        lines.append(
            "%4d | %7.2f %7.2f %7.2f | %7.2f %7.2f %7.2f | %6.2f %6.2f %6.2f"
            % (r.lag_count, r.eta_mean, r.eta_min, r.eta_max,
               r.mu_mean, r.mu_min, r.mu_max,
               r.p_not_mean, r.p_not_min, r.p_not_max)
        )
    return "\n".join(lines) + "\n"


def records_to_csv(records):
    """Forecast CSV; the residual cell is empty when no count was observed."""
    lines = ["fips,eta,mu,p_desert,p_not_desert,lag_count,mode,pearson_residual"]
    for r in records:
        resid = "" if r.pearson_residual is None else repr(r.pearson_residual)
        lines.append("%s,%s,%s,%s,%s,%d,%s,%s" % (
            r.fips, repr(r.eta), repr(r.mu), repr(r.p_desert),
            repr(r.p_not_desert), r.lag_count, r.mode.label, resid,
        ))
    return "\n".join(lines) + "\n"


def records_from_csv(text):
    """Parse a forecast CSV (as written by records_to_csv) back into records."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = "fips,eta,mu,p_desert,p_not_desert,lag_count,mode,pearson_residual"
    if not lines or lines[0] != header:
        raise DomainError("not a forecast CSV (bad header)")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 8:
            raise DomainError("bad forecast row: %r" % line)
        fips, eta, mu, p0, pn, lag, mode, resid = parts
        records.append(ForecastRecord(
            fips=fips, eta=float(eta), mu=float(mu), p_desert=float(p0),
            p_not_desert=float(pn), lag_count=int(lag), mode=MODES[mode],
            pearson_residual=float(resid) if resid else None,
        ))
    return tuple(records)


def histogram(values, bin_width=0.01):
    """Fixed-width histogram with bins anchored at multiples of the width."""
    if bin_width <= 0:
        raise DomainError("bin width must be positive")
    counts = {}
    for v in values:
        idx = math.floor(v / bin_width + 1e-12)
        counts[idx] = counts.get(idx, 0) + 1
    return tuple((idx * bin_width, idx * bin_width + bin_width, counts[idx])
                 for idx in sorted(counts))


def histogram_to_csv(bins):
    lines = ["bin_left,bin_right,count"]
    for left, right, count in bins:
        lines.append("%s,%s,%d" % (repr(left), repr(right), count))
    return "\n".join(lines) + "\n"
