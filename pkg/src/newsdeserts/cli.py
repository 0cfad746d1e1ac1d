"""Command-line entry point wiring the modules into reproducible runs.

Subcommands: describe | fit | validate | forecast | residuals | map |
simulate | fetch-acs. Options resolve as flags > config file > defaults,
and every output file starts with a run-metadata header (seed, model-spec
hash, input hashes) so runs are byte-reproducible from their inputs.
"""

import argparse
import configparser
import hashlib
import json
import os
import sys

from . import features, forecast, glm, ingest, maps, validation
from .errors import ConfigError, NewsDesertsError
from .reference import FORECASTING_COEFFS

_BUILTIN_SPECS = features.MODEL_KINDS


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_text(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def meta_header(cfg, spec_desc="-"):
    lines = ["# seed=%d" % cfg.seed, "# model_spec=%s" % spec_desc]
    for label, path in cfg.input_hashes():
        lines.append("# input_%s_sha256=%s" % (label, path))
    return "\n".join(lines) + "\n"


class RunConfig:
    """Resolved options for one command invocation."""

    _KEYS = ("input", "out", "seed", "model_spec", "geometry", "scheme",
             "model", "models", "acs_config", "coeffs", "fips",
             "fips_property", "test_fraction")

    def __init__(self, args):
        file_vals = {}
        if args.config:
            if not os.path.exists(args.config):
                raise ConfigError("config file not found: %s" % args.config)
            parser = configparser.ConfigParser()
            parser.read(args.config)
            if parser.has_section("run"):
                file_vals = dict(parser.items("run"))
        def pick(key, default=None):
            flag = getattr(args, key, None)
            if flag is not None:
                return flag
            if key in file_vals:
                return file_vals[key]
            return default

        self.command = args.command
        self.input = pick("input")
        self.out = pick("out", "out")
        self.seed = int(pick("seed", 0))
        self.model_spec = pick("model_spec", "forecasting")
        self.geometry = pick("geometry")
        self.scheme = pick("scheme", "comprehensive")
        self.model = pick("model")
        self.models = pick("models")
        self.acs_config = pick("acs_config")
        self.coeffs = pick("coeffs")
        self.fips = pick("fips")
        self.fips_property = pick("fips_property", "GEOID")
        self.test_fraction = float(pick("test_fraction", 0.2))
        self.fixture = bool(getattr(args, "fixture", False))
        self.with_residuals = bool(getattr(args, "with_residuals", False))
        self.quiet = bool(getattr(args, "quiet", False))
        self._hashes = []

    def require(self, attr):
        value = getattr(self, attr)
        if value is None:
            raise ConfigError("missing required option: %s" % attr.replace("_", "-"))
        if attr in ("input", "geometry", "model", "acs_config", "coeffs"):
            if not os.path.exists(value):
                raise ConfigError("%s path does not exist: %s" % (attr, value))
        return value

    def note_input(self, label, path):
        self._hashes.append((label, _sha256_file(path)))

    def input_hashes(self):
        return tuple(self._hashes)


def _resolve_spec(cfg):
    """Model spec from a builtin kind name or a declarative spec file."""
    raw = cfg.model_spec
    if raw in _BUILTIN_SPECS:
        spec = features.model_spec(raw)
        return spec, "builtin:%s" % raw
    if not os.path.exists(raw):
        raise ConfigError("model spec is neither a builtin kind nor a file: %s" % raw)
    with open(raw, "r", encoding="utf-8") as fh:
        text = fh.read()
    return features.parse_model_spec(text), "%s:%s" % (raw, _sha256_text(text))


def _load_table(cfg):
    path = cfg.require("input")
    cfg.note_input("csv", path)
    return ingest.parse_county_csv(path)


def _write(cfg, name, payload):
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    mode = "wb" if isinstance(payload, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(payload)
    if not cfg.quiet:
        print("wrote %s" % path)
    return path


def command_describe(cfg):
    table = _load_table(cfg)
    stats = features.describe(table)
    head = meta_header(cfg)
    _write(cfg, "describe.csv", head + features.stats_to_csv(stats))
    _write(cfg, "describe.txt", head + features.stats_to_text(stats))
    return 0


def command_fit(cfg):
    table = _load_table(cfg)
    spec, spec_desc = _resolve_spec(cfg)
    design = features.build_design(table, spec)
    model = glm.fit_poisson(design)
    report = glm.wald_inference(model)
    head = meta_header(cfg, spec_desc)
    _write(cfg, "coefficients.csv", head + glm.report_to_csv(report))
    _write(cfg, "coefficients.txt", head + glm.report_to_text(report))
    body = json.loads(glm.model_to_json(model))
    body["meta"] = {"seed": cfg.seed, "model_spec": spec_desc,
                    "inputs": dict(cfg.input_hashes())}
    _write(cfg, "model.json", json.dumps(body, indent=1) + "\n")
    if not cfg.quiet:
        print("n=%d p=%d residual_deviance=%.4f pseudo_r2=%.4f"
              % (model.n, model.p,
                 model.residual_deviance,
                 glm.pseudo_r2(model.null_deviance, model.residual_deviance)))
    return 0


def command_validate(cfg):
    table = _load_table(cfg)
    names = validation.DEFAULT_BENCHMARKS
    if cfg.models:
        names = tuple(s.strip() for s in cfg.models.split(",") if s.strip())
    train, test = validation.split(
        table, validation.SplitSpec(cfg.test_fraction, cfg.seed))
    report = validation.run_benchmarks(train, test, names=names, cv_seed=cfg.seed)
    head = meta_header(cfg)
    _write(cfg, "validation.csv", head + validation.report_to_csv(report))
    _write(cfg, "validation.txt", head + validation.report_to_text(report))
    return 0


def _load_model(cfg):
    path = cfg.require("model")
    cfg.note_input("model", path)
    with open(path, "r", encoding="utf-8") as fh:
        return glm.model_from_json(fh.read())


def _forecast_records(cfg):
    table = _load_table(cfg)
    model = _load_model(cfg)
    spec, _ = _resolve_spec(cfg)
    design = features.build_design(table, spec)
    return forecast.predict(model, design), design


def command_forecast(cfg):
    records, design = _forecast_records(cfg)
    if cfg.with_residuals:
        records = forecast.attach_residuals(records, design.y)
    head = meta_header(cfg)
    _write(cfg, "forecast.csv", head + forecast.records_to_csv(records))
    rows = forecast.summarize_by_lag(records)
    _write(cfg, "lag_summary.csv", head + forecast.lag_summary_to_csv(rows))
    _write(cfg, "lag_summary.txt", head + forecast.lag_summary_to_text(rows))
    eta_bins = forecast.histogram([r.eta for r in records], 0.01)
    pnot_bins = forecast.histogram([r.p_not_desert for r in records], 0.01)
    _write(cfg, "hist_eta.csv", head + forecast.histogram_to_csv(eta_bins))
    _write(cfg, "hist_p_not.csv", head + forecast.histogram_to_csv(pnot_bins))
    return 0


def command_residuals(cfg):
    records, design = _forecast_records(cfg)
    records = forecast.attach_residuals(records, design.y)
    head = meta_header(cfg)
    lines = ["fips,observed,mu,pearson_residual,bucket"]
    for rec, y in zip(records, design.y):
        lines.append("%s,%d,%s,%s,%s" % (
            rec.fips, int(y), repr(rec.mu), repr(rec.pearson_residual),
            forecast.residual_bucket(rec.pearson_residual)))
    _write(cfg, "residuals.csv", head + "\n".join(lines) + "\n")
    return 0


def command_map(cfg):
    path = cfg.require("input")
    cfg.note_input("forecast", path)
    with open(path, "r", encoding="utf-8") as fh:
        records = forecast.records_from_csv(fh.read())
    geo_path = cfg.require("geometry")
    cfg.note_input("geometry", geo_path)
    geometry = maps.load_geometry(geo_path, fips_property=cfg.fips_property)
    if cfg.scheme not in maps.SCHEMES:
        raise ConfigError("unknown scheme %r (want one of %s)"
                          % (cfg.scheme, ", ".join(sorted(maps.SCHEMES))))
    document = maps.emit_geojson(records, geometry, cfg.scheme)
    document["meta"] = {"seed": cfg.seed, "inputs": dict(cfg.input_hashes())}
    _write(cfg, "map_%s.geojson" % cfg.scheme,
           json.dumps(document, indent=1) + "\n")
    svg = maps.render_svg(document)
    _write(cfg, "map_%s.svg" % cfg.scheme, svg)
    _write(cfg, "legend_%s.csv" % cfg.scheme,
           meta_header(cfg) + maps.legend_to_csv(document))
    return 0


def command_simulate(cfg):
    if cfg.fixture:
        table = validation.national_covariates(seed=cfg.seed)
    else:
        table = _load_table(cfg)
    spec, spec_desc = _resolve_spec(cfg)
    if cfg.coeffs:
        cfg.note_input("coeffs", cfg.require("coeffs"))
        with open(cfg.coeffs, "r", encoding="utf-8") as fh:
            mapping = json.load(fh)
        beta = {k: float(v) for k, v in mapping.items()}
    else:
        beta = FORECASTING_COEFFS
    simulated = validation.simulate_counties(beta, table, spec=spec, seed=cfg.seed)
    _write(cfg, "simulated.csv",
           meta_header(cfg, spec_desc) + ingest.write_county_csv(simulated))
    return 0


def command_fetch_acs(cfg):
    acs_path = cfg.require("acs_config")
    cfg.note_input("acs_config", acs_path)
    config = ingest.load_acs_config(acs_path)
    fips_filter = None
    if cfg.fips:
        fips_filter = [f.strip() for f in cfg.fips.split(",") if f.strip()]
    fetched = ingest.fetch_acs(config, fips_filter=fips_filter)
    table = _load_table(cfg)
    merged = ingest.merge_acs(table, fetched)
    _write(cfg, "merged.csv", meta_header(cfg) + ingest.write_county_csv(merged))
    return 0


_COMMANDS = {
    "describe": command_describe,
    "fit": command_fit,
    "validate": command_validate,
    "forecast": command_forecast,
    "residuals": command_residuals,
    "map": command_map,
    "simulate": command_simulate,
    "fetch-acs": command_fetch_acs,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run-config file ([run] section)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--quiet", action="store_true", default=None,
                        help="suppress progress lines")
    parser = argparse.ArgumentParser(
        prog="newsdeserts",
        description="County newspaper-count modeling pipeline",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        cmd.add_argument("--input", help="county CSV (forecast CSV for `map`)")
        cmd.add_argument("--model-spec", dest="model_spec",
                         help="builtin kind or spec file")
        cmd.add_argument("--model", help="fitted model JSON (forecast/residuals)")
        cmd.add_argument("--geometry", help="county boundary GeoJSON (map)")
        cmd.add_argument("--scheme",
                         help="map scheme: comprehensive|barometer|residual")
        cmd.add_argument("--models", help="comma list of validate benchmarks")
        cmd.add_argument("--acs-config", dest="acs_config", help="ACS config file")
        cmd.add_argument("--coeffs", help="JSON column->value coefficients (simulate)")
        cmd.add_argument("--fips", help="comma list of FIPS (fetch-acs filter)")
        cmd.add_argument("--fips-property", dest="fips_property",
                         help="geometry property holding FIPS (default GEOID)")
        cmd.add_argument("--test-fraction", dest="test_fraction", type=float,
                         help="held-out fraction for validate (default 0.2)")
        if name == "simulate":
            cmd.add_argument("--fixture", action="store_true",
                             help="use the built-in synthetic national covariates")
        if name == "forecast":
            cmd.add_argument("--with-residuals", dest="with_residuals",
                             action="store_true",
                             help="treat np_current as observed; attach residuals")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args)
        return _COMMANDS[args.command](cfg)
    except NewsDesertsError as exc:
        sys.stderr.write("%s: %s\n" % (type(exc).__name__, exc))
        return 2
    except OSError as exc:
        sys.stderr.write("IOError: %s\n" % exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
