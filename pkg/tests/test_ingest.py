"""CSV parsing/serialization round trips, table validation, and the ACS
client against a stubbed census endpoint."""

import http.server
import io
import json
import threading
from urllib.parse import parse_qs, urlparse

import pytest

from newsdeserts.errors import (
    BadValue,
    DuplicateFips,
    HttpError,
    MissingColumn,
    MissingCounty,
    SchemaError,
)
from newsdeserts.ingest import (
    AcsConfig,
    CountyRecord,
    CountyTable,
    fetch_acs,
    load_acs_config,
    merge_acs,
    parse_county_csv,
    validate_table,
    write_county_csv,
)
from newsdeserts.validation import national_covariates

from conftest import make_record

HEADER = ("fips,name,state,np_current,np_lag,population,pct_black,pct_hisp,"
          "median_income,median_age,pct_poverty,pct_bachelor,pct_less_hs,rucc")
ROW = "01001,Autauga,AL,2,2,55200,19.0,2.9,58786,38.2,13.8,27.0,11.5,2"


class TestParse:
    def test_header_plus_one_row(self):
        table = parse_county_csv("%s\n%s\n" % (HEADER, ROW))
        assert len(table.records) == 1
        rec = table.records[0]
        assert rec.fips == "01001"
        assert rec.np_current == 2
        assert rec.rucc == 2

    def test_percent_out_of_range_rejected(self):
        bad = ROW.replace("19.0", "110")
        with pytest.raises(BadValue) as err:
            parse_county_csv("%s\n%s\n" % (HEADER, bad))
        assert err.value.column == "pct_black"
        assert err.value.row == 2

    def test_missing_required_column(self):
        header = HEADER.replace("np_lag,", "")
        with pytest.raises(MissingColumn):
            parse_county_csv(header + "\n")

    def test_duplicate_fips(self):
        with pytest.raises(DuplicateFips):
            parse_county_csv("%s\n%s\n%s\n" % (HEADER, ROW, ROW))

    def test_optional_columns_absent_from_header(self):
        header = HEADER.rsplit(",pct_poverty", 1)[0]
        row = ",".join(ROW.split(",")[:10])
        table = parse_county_csv("%s\n%s\n" % (header, row))
        rec = table.records[0]
        assert rec.pct_poverty is None
        assert rec.rucc is None

    def test_empty_optional_cells_are_absent(self):
        row = ROW.rsplit(",", 4)[0] + ",,,,"
        table = parse_county_csv("%s\n%s\n" % (HEADER, row))
        assert table.records[0].pct_poverty is None

    def test_zero_population_rejected(self):
        bad = ROW.replace("55200", "0")
        with pytest.raises(BadValue):
            parse_county_csv("%s\n%s\n" % (HEADER, bad))

    def test_bad_fips_rejected(self):
        bad = ROW.replace("01001", "1001")
        with pytest.raises(BadValue):
            parse_county_csv("%s\n%s\n" % (HEADER, bad))

    def test_non_numeric_count_rejected(self):
        bad = ROW.replace("01001,Autauga,AL,2", "01001,Autauga,AL,x")
        with pytest.raises(BadValue) as err:
            parse_county_csv("%s\n%s\n" % (HEADER, bad))
        assert err.value.column == "np_current"

    def test_full_national_fixture(self, tmp_path):
        table = national_covariates(seed=0)
        path = tmp_path / "national.csv"
        path.write_text(write_county_csv(table))
        parsed = parse_county_csv(str(path))
        assert len(parsed.records) == 3141

    def test_reference_year_comment(self):
        text = "# reference_year=2018\n%s\n%s\n" % (HEADER, ROW)
        table = parse_county_csv(text)
        assert table.reference_year == 2018
        assert table.lag_year == 2013


class TestRoundTrip:
    def test_field_identical(self, small_table):
        text = write_county_csv(small_table)
        parsed = parse_county_csv(text)
        assert parsed.reference_year == small_table.reference_year
        assert parsed.records == small_table.records

    def test_round_trip_with_absent_optionals(self):
        rec = make_record()
        table = CountyTable(records=(rec,), reference_year=2023)
        parsed = parse_county_csv(write_county_csv(table))
        assert parsed.records[0] == rec
        assert parsed.records[0].rucc is None

    def test_stream_output(self, small_table):
        buf = io.StringIO()
        write_county_csv(small_table, buf)
        assert parse_county_csv(buf.getvalue()).records == small_table.records


class TestValidateTable:
    def test_complete_records_no_issues(self, small_table):
        summary = validate_table(small_table)
        assert summary.n_records == 9
        assert summary.absent_optional == {}
        assert summary.zero_population == ()

    def test_missing_rucc_listed(self):
        recs = (make_record(fips="01001", rucc=None),
                make_record(fips="01003", rucc=3))
        summary = validate_table(CountyTable(records=recs, reference_year=2023))
        assert summary.absent_optional["rucc"] == ("01001",)

    def test_reports_record_count_for_variant_tables(self):
        recs = tuple(make_record(fips="%05d" % (i + 1)) for i in range(7))
        summary = validate_table(CountyTable(records=recs, reference_year=2023))
        assert summary.n_records == 7

    def test_pure(self, small_table):
        s1 = validate_table(small_table)
        s2 = validate_table(small_table)
        assert s1 == s2


class _AcsHandler(http.server.BaseHTTPRequestHandler):
    """Stub census endpoint serving a fixed three-county payload."""

    counties = {
        ("01", "001"): {"B01003_001E": "55200", "B19013_001E": "58786",
                        "B01002_001E": "38.2"},
        ("01", "003"): {"B01003_001E": "218022", "B19013_001E": "55962",
                        "B01002_001E": "43.0"},
        ("06", "037"): {"B01003_001E": "10098052", "B19013_001E": "68044",
                        "B01002_001E": "36.7"},
    }
    variables = ("B01003_001E", "B19013_001E", "B01002_001E")
    fail_first = 0

    def do_GET(self):
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(500)
            self.end_headers()
            return
        query = parse_qs(urlparse(self.path).query)
        requested = query["get"][0].split(",")
        codes = [c for c in requested if c in self.variables]
        where = query.get("for", ["county:*"])[0]
        in_clause = query.get("in", [None])[0]
        rows = [codes + ["state", "county"]]
        for (st, cty), values in sorted(self.counties.items()):
            if in_clause and in_clause != "state:%s" % st:
                continue
            if where not in ("county:*", "county:%s" % cty):
                continue
            rows.append([values[c] for c in codes] + [st, cty])
        body = json.dumps(rows).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def acs_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _AcsHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield "http://127.0.0.1:%d" % server.server_port
    server.shutdown()


def _config(endpoint):
    return AcsConfig(
        endpoint=endpoint,
        year=2018,
        dataset="acs/acs5",
        api_key_env="CENSUS_API_KEY_TEST",
        variables={
            "B01003_001E": "population",
            "B19013_001E": "median_income",
            "B01002_001E": "median_age",
        },
    )


class TestFetchAcs:
    def test_filtered_fetch_populates_mapped_fields(self, acs_server):
        out = fetch_acs(_config(acs_server), fips_filter=["01001"])
        assert out == {"01001": {"population": 55200, "median_income": 58786.0,
                                 "median_age": 38.2}}

    def test_missing_mapped_code_is_schema_error(self, acs_server):
        config = _config(acs_server)
        bad = AcsConfig(config.endpoint, config.year, config.dataset,
                        config.api_key_env,
                        {"B99999_999E": "population"})
        with pytest.raises(SchemaError) as err:
            fetch_acs(bad)
        assert "B99999_999E" in str(err.value)

    def test_missing_county_raises(self, acs_server):
        with pytest.raises(MissingCounty):
            fetch_acs(_config(acs_server), fips_filter=["01999"])

    def test_batching_independence(self, acs_server):
        fips = ["01001", "01003", "06037"]
        by_state = fetch_acs(_config(acs_server), fips_filter=fips, batch="state")
        by_county = fetch_acs(_config(acs_server), fips_filter=fips, batch="county")
        assert by_state == by_county

    def test_merge_matches_csv_loaded_fixture(self, acs_server):
        base = CountyTable(records=(
            make_record(fips="01001", population=1, median_income=1.0, median_age=1.0),
            make_record(fips="01003", population=1, median_income=1.0, median_age=1.0),
            make_record(fips="06037", population=1, median_income=1.0, median_age=1.0),
        ), reference_year=2023)
        fetched = fetch_acs(_config(acs_server),
                            fips_filter=["01001", "01003", "06037"])
        merged = merge_acs(base, fetched)

        expected = CountyTable(records=(
            make_record(fips="01001", population=55200, median_income=58786.0,
                        median_age=38.2),
            make_record(fips="01003", population=218022, median_income=55962.0,
                        median_age=43.0),
            make_record(fips="06037", population=10098052, median_income=68044.0,
                        median_age=36.7),
        ), reference_year=2023)
        assert write_county_csv(merged) == write_county_csv(expected)

    def test_retries_transient_failures(self, acs_server):
        _AcsHandler.fail_first = 1
        try:
            out = fetch_acs(_config(acs_server), fips_filter=["01001"])
        finally:
            _AcsHandler.fail_first = 0
        assert "01001" in out

    def test_persistent_failure_raises_http_error(self, acs_server):
        _AcsHandler.fail_first = 99
        try:
            with pytest.raises(HttpError):
                fetch_acs(_config(acs_server), fips_filter=["01001"])
        finally:
            _AcsHandler.fail_first = 0


class TestAcsConfigFile:
    def test_load(self, tmp_path):
        path = tmp_path / "acs.cfg"
        path.write_text(
            "endpoint = http://example.test/data\n"
            "year = 2018\n"
            "dataset = acs/acs5\n"
            "api_key_env = MY_KEY\n"
            "[variables]\n"
            "B01003_001E = population\n"
        )
        config = load_acs_config(str(path))
        assert config.year == 2018
        assert config.variables == {"B01003_001E": "population"}
        assert config.url == "http://example.test/data/2018/acs/acs5"

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "acs.cfg"
        path.write_text(
            "endpoint = http://example.test\nyear = 2018\ndataset = d\n"
            "[variables]\nB1 = np_current\n"
        )
        with pytest.raises(SchemaError):
            load_acs_config(str(path))

    def test_shipped_default_parses(self):
        from importlib import resources
        with resources.as_file(
            resources.files("newsdeserts").joinpath("data/acs_default.cfg")
        ) as path:
            config = load_acs_config(str(path))
        assert "population" in config.variables.values()


class TestRecordInvariants:
    def test_state_code_length(self):
        with pytest.raises(BadValue):
            make_record(state="ALA")

    def test_negative_counts(self):
        with pytest.raises(BadValue):
            make_record(np_lag=-1)

    def test_rucc_range(self):
        with pytest.raises(BadValue):
            make_record(rucc=10)
