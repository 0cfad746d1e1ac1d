"""Covariate construction: transforms, population segments, descriptive
statistics, the SES composite, and design matrices for every model variant.

Design matrices follow a nested-slope layout: a global intercept that doubles
as the small-segment intercept, indicator offsets for the medium and large
segments, and per-covariate slope columns that are nonzero only inside their
segment. Column headers mirror the reporting convention used elsewhere in
the package (e.g. ``popseg300K+:lnPop``).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptySegmentWarning, MissingField

SEGMENT_SMALL = "S"
SEGMENT_MEDIUM = "M"
SEGMENT_LARGE = "L"
SEGMENT_LABELS = (SEGMENT_SMALL, SEGMENT_MEDIUM, SEGMENT_LARGE)
SEGMENT_DISPLAY = {
    SEGMENT_SMALL: "<20K",
    SEGMENT_MEDIUM: "20-300K",
    SEGMENT_LARGE: "300K+",
}
SEGMENT_LOWER = 20_000
SEGMENT_UPPER = 300_000

MODEL_KINDS = (
    "explanatory",
    "forecasting",
    "ses_variant",
    "poverty_variant",
    "rucc_variant",
    "ar1",
    "null",
)
INCOME_PROXIES = ("hh_income", "ses_pc1", "poverty")

_PROXY_LABEL = {"hh_income": "HHincome", "ses_pc1": "SES", "poverty": "poverty"}
LAG_LABEL = "ln(lagpub+1)"
RUCC_CODES = range(2, 10)  # code 1 is the reference level


def log1_percent(p):
    """ln(p + 1) for a percent on [0, 100]."""
    if p < 0:
        raise DomainError("percent below 0: %r" % (p,))
    return math.log(p + 1.0)


def ln_pop(pop):
    if pop < 1:
        raise DomainError("population below 1: %r" % (pop,))
    return math.log(pop)


def assign_segment(pop):
    """S below 20K, M on [20K, 300K], L above."""
    if pop < SEGMENT_LOWER:
        return SEGMENT_SMALL
    if pop <= SEGMENT_UPPER:
        return SEGMENT_MEDIUM
    return SEGMENT_LARGE


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one model variant."""

    kind: str
    include_lag: bool
    income_proxy: str | None
    extra_main_effects: tuple = ()

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DomainError("unknown model kind: %r" % (self.kind,))
        if self.kind == "explanatory" and self.include_lag:
            raise DomainError("explanatory models exclude the lag covariate")
        if self.kind in ("forecasting", "ses_variant", "poverty_variant",
                         "rucc_variant", "ar1") and not self.include_lag:
            raise DomainError("%s models require the lag covariate" % self.kind)
        if self.kind in ("ar1", "null") and self.income_proxy is not None:
            raise DomainError("%s models admit no demographic covariates" % self.kind)
        if self.kind not in ("ar1", "null") and self.income_proxy not in INCOME_PROXIES:
            raise DomainError("income_proxy must be one of %s" % (INCOME_PROXIES,))

    @property
    def has_demographics(self):
        return self.kind not in ("ar1", "null")


def model_spec(kind):
    """Build the canonical ModelSpec for a named variant."""
    if kind == "explanatory":
        return ModelSpec("explanatory", False, "hh_income")
    if kind == "forecasting":
        return ModelSpec("forecasting", True, "hh_income")
    if kind == "ses_variant":
        return ModelSpec("ses_variant", True, "ses_pc1")
    if kind == "poverty_variant":
        return ModelSpec("poverty_variant", True, "poverty")
    if kind == "rucc_variant":
        return ModelSpec(
            "rucc_variant", True, "hh_income",
            tuple("factor(RUCC)%d" % c for c in RUCC_CODES),
        )
    if kind == "ar1":
        return ModelSpec("ar1", True, None)
    if kind == "null":
        return ModelSpec("null", False, None)
    raise DomainError("unknown model kind: %r" % (kind,))


def format_model_spec(spec):
    lines = [
        "kind = %s" % spec.kind,
        "include_lag = %s" % ("true" if spec.include_lag else "false"),
        "income_proxy = %s" % (spec.income_proxy or "none"),
    ]
    if spec.extra_main_effects:
        lines.append("extra_main_effects = %s" % ",".join(spec.extra_main_effects))
    return "\n".join(lines) + "\n"


def parse_model_spec(text):
    values = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError("bad model-spec line: %r" % line)
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    if "kind" not in values:
        raise DomainError("model spec is missing 'kind'")
    spec = model_spec(values["kind"])
    if "include_lag" in values:
        want = values["include_lag"].lower() in ("true", "1", "yes")
        if want != spec.include_lag:
            raise DomainError(
                "include_lag=%s contradicts kind=%s" % (values["include_lag"], spec.kind)
            )
    if "income_proxy" in values and values["income_proxy"] != "none":
        if values["income_proxy"] != (spec.income_proxy or "none"):
            spec = ModelSpec(spec.kind, spec.include_lag, values["income_proxy"],
                             spec.extra_main_effects)
    return spec


@dataclass(frozen=True)
class VariableStats:
    name: str
    mean: float
    sd: float
    median: float
    skew: float
    min: float
    max: float


@dataclass(frozen=True)
class DescriptiveStats:
    rows: tuple
    n: int


def _sample_sd(v):
    if len(v) < 2:
        return 0.0
    return float(np.std(v, ddof=1))


def _skewness(v):
    # g1 = m3 / m2^(3/2) with biased central moments; constants report 0.
    m = np.mean(v)
    d = v - m
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        return 0.0
    m3 = float(np.mean(d * d * d))
    return m3 / m2 ** 1.5


def _var_stats(name, values):
    v = np.asarray(values, dtype=float)
    return VariableStats(
        name=name,
        mean=float(np.mean(v)),
        sd=_sample_sd(v),
        median=float(np.median(v)),
        skew=_skewness(v),
        min=float(np.min(v)),
        max=float(np.max(v)),
    )


def describe(table):
    """Descriptive statistics for the model variables, raw and transformed."""
    recs = table.records
    if not recs:
        raise DomainError("empty table")
    cols = [
        ("np_current", [r.np_current for r in recs]),
        ("np_lag", [r.np_lag for r in recs]),
        ("population", [r.population for r in recs]),
        ("pct_black", [r.pct_black for r in recs]),
        ("pct_hisp", [r.pct_hisp for r in recs]),
        ("median_income", [r.median_income for r in recs]),
        ("median_age", [r.median_age for r in recs]),
        ("ln_pop", [ln_pop(r.population) for r in recs]),
        ("ln_black", [log1_percent(r.pct_black) for r in recs]),
        ("ln_hisp", [log1_percent(r.pct_hisp) for r in recs]),
    ]
    return DescriptiveStats(
        rows=tuple(_var_stats(name, vals) for name, vals in cols),
        n=len(recs),
    )


def stats_to_csv(stats):
    lines = ["variable,mean,sd,median,skew,min,max"]
    for r in stats.rows:
        lines.append(
            "%s,%s,%s,%s,%s,%s,%s"
            % (r.name, repr(r.mean), repr(r.sd), repr(r.median),
               repr(r.skew), repr(r.min), repr(r.max))
        )
    return "\n".join(lines) + "\n"


def stats_to_text(stats):
    lines = ["%-14s %12s %12s %12s %8s %12s %12s"
             % ("", "Mean", "SD", "Median", "Skew", "Min", "Max")]
    for r in stats.rows:
        lines.append(
            "%-14s %12.4g %12.4g %12.4g %8.3g %12.4g %12.4g"
            % (r.name, r.mean, r.sd, r.median, r.skew, r.min, r.max)
        )
    lines.append("(n=%d)" % stats.n)
    return "\n".join(lines) + "\n"


def ses_pc1(table):
    """First principal component of ln(income), ln(bachelor+1), ln(less-HS+1).

    Columns are standardized before the eigen-decomposition; the component
    sign is fixed so the income loading is positive, and the returned scores
    have mean zero.
    """
    recs = table.records
    for fname in ("median_income", "pct_bachelor", "pct_less_hs"):
        missing = [r.fips for r in recs if getattr(r, fname) is None]
        if missing:
            raise MissingField(
                "%s absent for %d counties (first: %s)"
                % (fname, len(missing), missing[0])
            )
    cols = np.column_stack([
        [math.log(r.median_income) for r in recs],
        [log1_percent(r.pct_bachelor) for r in recs],
        [log1_percent(r.pct_less_hs) for r in recs],
    ])
    z = cols - cols.mean(axis=0)
    sd = z.std(axis=0, ddof=1)
    sd[sd == 0.0] = 1.0
    z = z / sd
    corr = (z.T @ z) / (len(recs) - 1)
    evals, evecs = np.linalg.eigh(corr)
    lead = evecs[:, int(np.argmax(evals))]
    if lead[0] < 0 or (lead[0] == 0 and lead.sum() < 0):
        lead = -lead
    return z @ lead


@dataclass(frozen=True)
class DesignMatrix:
    """Numeric predictor matrix with named columns, FIPS-aligned rows."""

    x: np.ndarray
    columns: tuple
    fips: tuple
    y: np.ndarray
    lag_counts: np.ndarray
    unpenalized: tuple
    spec: ModelSpec | None = None
    empty_segments: tuple = ()

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def take(self, rows):
        rows = np.asarray(rows)
        return DesignMatrix(
            x=self.x[rows],
            columns=self.columns,
            fips=tuple(np.array(self.fips)[rows]),
            y=self.y[rows],
            lag_counts=self.lag_counts[rows],
            unpenalized=self.unpenalized,
            spec=self.spec,
            empty_segments=self.empty_segments,
        )


_COVARIATE_BUILDERS = {
    "lnPop": lambda r, extras: ln_pop(r.population),
    "age": lambda r, extras: r.median_age,
    "lnHisp": lambda r, extras: log1_percent(r.pct_hisp),
    "lnBlack": lambda r, extras: log1_percent(r.pct_black),
    "HHincome": lambda r, extras: r.median_income,
    "poverty": lambda r, extras: r.pct_poverty,
    LAG_LABEL: lambda r, extras: math.log(r.np_lag + 1.0),
}


def _covariate_labels(spec):
    labels = []
    if spec.include_lag:
        labels.append(LAG_LABEL)
    if spec.has_demographics:
        labels += ["lnPop", "age", "lnHisp", "lnBlack", _PROXY_LABEL[spec.income_proxy]]
    return labels


def _require_fields(table, spec):
    need = []
    if spec.income_proxy == "poverty":
        need.append("pct_poverty")
    if spec.extra_main_effects:
        need.append("rucc")
    for fname in need:
        missing = [r.fips for r in table.records if getattr(r, fname) is None]
        if missing:
            raise MissingField(
                "%s absent for %d counties (first: %s)"
                % (fname, len(missing), missing[0])
            )


def build_design(table, spec):
    """Assemble the design matrix and response for a model variant.

    Layout: global intercept (small-segment baseline), M/L indicator
    offsets, then segment-specific slope columns per covariate. The ar1
    variant keeps only intercept plus the lag transform; null keeps the
    intercept alone. RUCC dummies (codes 2-9, code 1 reference) append as
    main effects.
    """
    recs = table.records
    if not recs:
        raise DomainError("empty table")
    _require_fields(table, spec)
    n = len(recs)
    segs = [assign_segment(r.population) for r in recs]
    ses = ses_pc1(table) if spec.income_proxy == "ses_pc1" else None

    names = ["(Intercept)"]
    cols = [np.ones(n)]
    unpenalized = ["(Intercept)"]
    cov_labels = _covariate_labels(spec)

    if spec.kind in ("ar1", "null"):
        for label in cov_labels:  # only the lag transform, unsegmented
            build = _COVARIATE_BUILDERS[label]
            names.append(label)
            cols.append(np.array([build(r, None) for r in recs], dtype=float))
    else:
        for si, seg in enumerate(SEGMENT_LABELS):
            disp = SEGMENT_DISPLAY[seg]
            in_seg = np.array([s == seg for s in segs])
            if si > 0:
                names.append("popseg%s" % disp)
                cols.append(in_seg.astype(float))
                unpenalized.append("popseg%s" % disp)
            for label in cov_labels:
                if label == "SES":
                    vals = np.asarray(ses, dtype=float)
                else:
                    build = _COVARIATE_BUILDERS[label]
                    vals = np.array([build(r, None) for r in recs], dtype=float)
                names.append("popseg%s:%s" % (disp, label))
                cols.append(np.where(in_seg, vals, 0.0))
        for dummy in spec.extra_main_effects:
            code = int(dummy[-1])
            names.append(dummy)
            cols.append(np.array([1.0 if r.rucc == code else 0.0 for r in recs]))

    x = np.column_stack(cols)
    if not np.all(np.isfinite(x)):
        raise DomainError("design matrix contains non-finite entries")

    empty = tuple(
        seg for seg in SEGMENT_LABELS
        if spec.kind not in ("ar1", "null") and segs.count(seg) == 0
    )
    for seg in empty:
        warnings.warn(
            "segment %s (%s) has no counties; its columns are all zero"
            % (seg, SEGMENT_DISPLAY[seg]),
            EmptySegmentWarning,
            stacklevel=2,
        )
    return DesignMatrix(
        x=x,
        columns=tuple(names),
        fips=tuple(r.fips for r in recs),
        y=np.array([r.np_current for r in recs], dtype=float),
        lag_counts=np.array([r.np_lag for r in recs], dtype=int),
        unpenalized=tuple(unpenalized),
        spec=spec,
        empty_segments=empty,
    )


def pool_segment_slopes(design, covariate):
    """Collapse a covariate's three segment slopes into one main effect.

    Produces the reduced design for the segment-interaction likelihood-ratio
    test; the pooled column replaces the first segment column in place.
    """
    seg_names = ["popseg%s:%s" % (SEGMENT_DISPLAY[s], covariate) for s in SEGMENT_LABELS]
    idx = {name: i for i, name in enumerate(design.columns)}
    for name in seg_names:
        if name not in idx:
            raise DomainError("design has no column %r" % name)
    pooled = design.x[:, [idx[n] for n in seg_names]].sum(axis=1)
    keep = [i for i, name in enumerate(design.columns) if name not in seg_names]
    first = idx[seg_names[0]]
    new_cols = []
    new_names = []
    inserted = False
    for i, name in enumerate(design.columns):
        if name in seg_names:
            if not inserted and i == first:
                new_cols.append(pooled)
                new_names.append(covariate)
                inserted = True
            continue
        new_cols.append(design.x[:, i])
        new_names.append(name)
    return DesignMatrix(
        x=np.column_stack(new_cols),
        columns=tuple(new_names),
        fips=design.fips,
        y=design.y,
        lag_counts=design.lag_counts,
        unpenalized=design.unpenalized,
        spec=None,
        empty_segments=design.empty_segments,
    )
