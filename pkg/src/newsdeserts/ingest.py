"""County panel ingestion: CSV parsing/serialization, table validation, and
the census ACS API client.

The canonical CSV schema is documented in README.md; required columns cover
both newspaper counts and the five core demographics, while poverty,
education and RUCC columns are optional (empty cells mean "absent", never
zero). Newspaper counts are never sourced from the ACS; the client only
fills demographic fields and merges by FIPS.
"""

import csv
import io
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import requests

from .errors import (
    BadValue,
    DomainError,
    DuplicateFips,
    HttpError,
    MissingColumn,
    MissingCounty,
    SchemaError,
)

REQUIRED_COLUMNS = (
    "fips", "name", "state", "np_current", "np_lag", "population",
    "pct_black", "pct_hisp", "median_income", "median_age",
)
OPTIONAL_COLUMNS = ("pct_poverty", "pct_bachelor", "pct_less_hs", "rucc")
ALL_COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS

_FIPS_RE = re.compile(r"^\d{5}$")


@dataclass(frozen=True)
class CountyRecord:
    """One county's observables for a reference year."""

    fips: str
    name: str
    state: str
    np_current: int
    np_lag: int
    population: int
    pct_black: float
    pct_hisp: float
    median_income: float
    median_age: float
    pct_poverty: float | None = None
    pct_bachelor: float | None = None
    pct_less_hs: float | None = None
    rucc: int | None = None

    def __post_init__(self):
        if not _FIPS_RE.match(self.fips):
            raise BadValue("fips must be exactly 5 digits: %r" % (self.fips,),
                           column="fips")
        if len(self.state) != 2:
            raise BadValue("state must be a 2-letter code: %r" % (self.state,),
                           column="state")
        if self.np_current < 0:
            raise BadValue("np_current must be >= 0", column="np_current")
        if self.np_lag < 0:
            raise BadValue("np_lag must be >= 0", column="np_lag")
        if self.population < 1:
            raise BadValue("population must be >= 1", column="population")
        for col in ("pct_black", "pct_hisp", "pct_poverty", "pct_bachelor",
                    "pct_less_hs"):
            v = getattr(self, col)
            if v is not None and not (0.0 <= v <= 100.0):
                raise BadValue("%s=%r outside [0, 100]" % (col, v), column=col)
        if self.median_income <= 0:
            raise BadValue("median_income must be positive", column="median_income")
        if self.median_age <= 0:
            raise BadValue("median_age must be positive", column="median_age")
        if self.rucc is not None and not (1 <= self.rucc <= 9):
            raise BadValue("rucc=%r outside 1..9" % (self.rucc,), column="rucc")


@dataclass(frozen=True)
class CountyTable:
    """Ordered collection of county records for one reference year."""

    records: tuple
    reference_year: int

    @property
    def lag_year(self):
        return self.reference_year - 5

    def __len__(self):
        return len(self.records)

    def by_fips(self):
        return {r.fips: r for r in self.records}


def _parse_int(raw, line_no, column):
    try:
        v = int(raw)
    except ValueError:
        raise BadValue("line %d column %s: %r is not an integer" % (line_no, column, raw),
                       row=line_no, column=column) from None
    return v


def _parse_float(raw, line_no, column):
    try:
        v = float(raw)
    except ValueError:
        raise BadValue("line %d column %s: %r is not numeric" % (line_no, column, raw),
                       row=line_no, column=column) from None
    return v


def parse_county_csv(source, reference_year=2023):
    """Parse the canonical county CSV into a CountyTable.

    ``source`` may be a path, text, bytes, or an open file object. Leading
    ``#`` comment lines are skipped; a ``# reference_year=YYYY`` comment
    overrides the default.
    """
    if isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    lines = text.splitlines()
    body_start = 0
    for line in lines:
        if not line.startswith("#"):
            break
        m = re.match(r"#\s*reference_year\s*=\s*(\d{4})", line)
        if m:
            reference_year = int(m.group(1))
        body_start += 1

    reader = csv.reader(io.StringIO("\n".join(lines[body_start:])))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty CSV: no header row") from None
    header = [h.strip() for h in header]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise MissingColumn("required column %r absent from header" % col)
    pos = {col: header.index(col) for col in header if col in ALL_COLUMNS}

    records = []
    seen = set()
    for row_idx, row in enumerate(reader):
        line_no = body_start + 2 + row_idx  # 1-based; header is the first body line
        if not row or all(not c.strip() for c in row):
            continue

        def cell(col):
            i = pos.get(col)
            if i is None or i >= len(row):
                return ""
            return row[i].strip()

        kwargs = {
            "fips": cell("fips"),
            "name": cell("name"),
            "state": cell("state"),
            "np_current": _parse_int(cell("np_current"), line_no, "np_current"),
            "np_lag": _parse_int(cell("np_lag"), line_no, "np_lag"),
            "population": _parse_int(cell("population"), line_no, "population"),
            "pct_black": _parse_float(cell("pct_black"), line_no, "pct_black"),
            "pct_hisp": _parse_float(cell("pct_hisp"), line_no, "pct_hisp"),
            "median_income": _parse_float(cell("median_income"), line_no, "median_income"),
            "median_age": _parse_float(cell("median_age"), line_no, "median_age"),
        }
        for col in ("pct_poverty", "pct_bachelor", "pct_less_hs"):
            raw = cell(col)
            kwargs[col] = _parse_float(raw, line_no, col) if raw else None
        raw = cell("rucc")
        kwargs["rucc"] = _parse_int(raw, line_no, "rucc") if raw else None

        try:
            rec = CountyRecord(**kwargs)
        except BadValue as exc:
            raise BadValue("line %d: %s" % (line_no, exc), row=line_no,
                           column=exc.column) from None
        if rec.fips in seen:
            raise DuplicateFips("duplicate fips %s at line %d" % (rec.fips, line_no))
        seen.add(rec.fips)
        records.append(rec)
    return CountyTable(records=tuple(records), reference_year=reference_year)


def _format_opt(v):
    return "" if v is None else str(v)


def write_county_csv(table, stream=None):
    """Serialize a CountyTable; returns the text when no stream is given."""
    out = stream or io.StringIO()
    out.write("# reference_year=%d\n" % table.reference_year)
    out.write(",".join(ALL_COLUMNS) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    for r in table.records:
        writer.writerow([
            r.fips, r.name, r.state, r.np_current, r.np_lag, r.population,
            r.pct_black, r.pct_hisp, r.median_income, r.median_age,
            _format_opt(r.pct_poverty), _format_opt(r.pct_bachelor),
            _format_opt(r.pct_less_hs), _format_opt(r.rucc),
        ])
    if stream is None:
        return out.getvalue()
    return None


@dataclass(frozen=True)
class ValidationSummary:
    n_records: int
    reference_year: int
    absent_optional: dict
    zero_population: tuple


def validate_table(table):
    """Report-only pass over a table; never mutates."""
    absent = {}
    for col in OPTIONAL_COLUMNS:
        fips = tuple(r.fips for r in table.records if getattr(r, col) is None)
        if fips:
            absent[col] = fips
    zero_pop = tuple(r.fips for r in table.records if r.population < 1)
    return ValidationSummary(
        n_records=len(table.records),
        reference_year=table.reference_year,
        absent_optional=absent,
        zero_population=zero_pop,
    )


# --- census ACS client ---

@dataclass(frozen=True)
class AcsConfig:
    endpoint: str
    year: int
    dataset: str
    api_key_env: str
    variables: dict  # census variable code -> CountyRecord field name

    @property
    def url(self):
        return "%s/%d/%s" % (self.endpoint.rstrip("/"), self.year, self.dataset)


_ACS_FIELDS = ("population", "pct_black", "pct_hisp", "median_income",
               "median_age", "pct_poverty", "pct_bachelor", "pct_less_hs")
_INT_FIELDS = {"population"}


def load_acs_config(path):
    endpoint = year = dataset = None
    api_key_env = "CENSUS_API_KEY"
    variables = {}
    in_vars = False
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower() == "[variables]":
                in_vars = True
                continue
            if "=" not in line:
                raise SchemaError("bad config line: %r" % line)
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if in_vars:
                if val not in _ACS_FIELDS:
                    raise SchemaError("unknown target field %r for code %s" % (val, key))
                variables[key] = val
            elif key == "endpoint":
                endpoint = val
            elif key == "year":
                year = int(val)
            elif key == "dataset":
                dataset = val
            elif key == "api_key_env":
                api_key_env = val
            else:
                raise SchemaError("unknown config key %r" % key)
    if not (endpoint and year and dataset):
        raise SchemaError("acs config requires endpoint, year and dataset")
    if not variables:
        raise SchemaError("acs config defines no variable mapping")
    return AcsConfig(endpoint, year, dataset, api_key_env, variables)


def _acs_request(session, url, params, retries=3):
    last = None
    for attempt in range(retries):
        try:
            resp = session.get(url, params=params, timeout=30)
        except requests.RequestException as exc:
            last = HttpError("request failed: %s" % exc, url=url)
        else:
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise SchemaError("response is not JSON: %s" % exc) from None
            last = HttpError("status %d from %s" % (resp.status_code, url),
                             status=resp.status_code, url=url)
            if 400 <= resp.status_code < 500:
                raise last
        time.sleep(0.2 * (attempt + 1))
    raise last


def _parse_acs_payload(payload, config):
    if not isinstance(payload, list) or not payload or not isinstance(payload[0], list):
        raise SchemaError("unexpected response shape (want array of arrays)")
    header = payload[0]
    for code in config.variables:
        if code not in header:
            raise SchemaError("response is missing variable code %s" % code)
    for geo in ("state", "county"):
        if geo not in header:
            raise SchemaError("response is missing %r geography column" % geo)
    idx = {name: header.index(name) for name in header}
    out = {}
    for row in payload[1:]:
        if len(row) != len(header):
            raise SchemaError("row length %d != header length %d" % (len(row), len(header)))
        fips = "%s%s" % (row[idx["state"]].zfill(2), row[idx["county"]].zfill(3))
        fields = {}
        for code, field in config.variables.items():
            raw = row[idx[code]]
            if raw is None or raw == "":
                continue
            val = float(raw)
            fields[field] = int(val) if field in _INT_FIELDS else val
        out[fips] = fields
    return out


def fetch_acs(config, fips_filter=None, session=None, max_workers=4,
              batch="state"):
    """Fetch demographic fields per county from the census API.

    Returns ``{fips: {field: value}}``. Results are independent of request
    batching (``batch`` is "state" or "county"); bounded concurrency with a
    deterministic FIPS-ordered merge.
    """
    own_session = session is None
    sess = session or requests.Session()
    get_codes = ",".join(sorted(config.variables))
    api_key = os.environ.get(config.api_key_env, "")

    def base_params():
        params = {"get": get_codes}
        if api_key:
            params["key"] = api_key
        return params

    requests_list = []
    if fips_filter is None:
        params = base_params()
        params["for"] = "county:*"
        requests_list.append(params)
    else:
        for f in fips_filter:
            if not _FIPS_RE.match(f):
                raise DomainError("bad fips in filter: %r" % (f,))
        if batch == "state":
            states = sorted({f[:2] for f in fips_filter})
            for st in states:
                params = base_params()
                params["for"] = "county:*"
                params["in"] = "state:%s" % st
                requests_list.append(params)
        elif batch == "county":
            for f in sorted(fips_filter):
                params = base_params()
                params["for"] = "county:%s" % f[2:]
                params["in"] = "state:%s" % f[:2]
                requests_list.append(params)
        else:
            raise DomainError("batch must be 'state' or 'county'")

    try:
        if len(requests_list) == 1:
            payloads = [_acs_request(sess, config.url, requests_list[0])]
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                payloads = list(pool.map(
                    lambda p: _acs_request(sess, config.url, p), requests_list
                ))
    finally:
        if own_session:
            sess.close()

    merged = {}
    for payload in payloads:
        merged.update(_parse_acs_payload(payload, config))
    if fips_filter is not None:
        for f in fips_filter:
            if f not in merged:
                raise MissingCounty("county %s absent from ACS response" % f)
        merged = {f: merged[f] for f in fips_filter}
    return dict(sorted(merged.items()))


def merge_acs(table, fetched):
    """Overlay fetched demographic fields onto a table, matching by FIPS."""
    out = []
    for rec in table.records:
        fields = fetched.get(rec.fips)
        out.append(replace(rec, **fields) if fields else rec)
    return CountyTable(records=tuple(out), reference_year=table.reference_year)
