"""Choropleth emission: join forecast records to county boundary geometry
and write GeoJSON and deterministic static SVG.

Three schemes: ``comprehensive`` colors every county by risk mode;
``barometer`` keeps only one-newspaper counties (dark blue for the C mode,
light blue for D and E); ``residual`` buckets Pearson residuals at +-1.
Colors come from the shipped palette file so output is reproducible.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources

from .errors import DomainError, EmptyDocument, GeometryMissingWarning, InvalidGeometry
from .forecast import MODE_ORDER, MODES, residual_bucket


def load_palette():
    """Named colors -> hex, from the shipped palette file."""
    text = resources.files("newsdeserts").joinpath("data/palette.csv").read_text()
    palette = {}
    for row in csv.DictReader(text.splitlines()):
        palette[row["name"]] = row["hex"]
    return palette


_PALETTE = load_palette()


@dataclass(frozen=True)
class GeometrySet:
    """County polygon geometry keyed by FIPS."""

    geometries: dict  # fips -> geojson geometry dict


def _check_rings(geometry):
    gtype = geometry.get("type")
    if gtype == "Polygon":
        polys = [geometry["coordinates"]]
    elif gtype == "MultiPolygon":
        polys = geometry["coordinates"]
    else:
        raise InvalidGeometry("unsupported geometry type %r" % gtype)
    for poly in polys:
        for ring in poly:
            if len(ring) < 4:
                raise InvalidGeometry("ring with fewer than 4 points")
            if ring[0] != ring[-1]:
                raise InvalidGeometry("ring is not closed")


def load_geometry(source, fips_property="GEOID"):
    """Read a FIPS-keyed GeoJSON FeatureCollection of county boundaries."""
    if isinstance(source, (dict,)):
        doc = source
    elif isinstance(source, bytes):
        doc = json.loads(source.decode("utf-8"))
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        doc = json.loads(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise InvalidGeometry("boundary file is not a FeatureCollection")
    geoms = {}
    for feature in doc.get("features", []):
        props = feature.get("properties") or {}
        if fips_property not in props:
            raise InvalidGeometry("feature lacks the %r property" % fips_property)
        fips = str(props[fips_property]).zfill(5)
        if fips in geoms:
            raise InvalidGeometry("FIPS %s appears more than once" % fips)
        geometry = feature.get("geometry") or {}
        _check_rings(geometry)
        geoms[fips] = geometry
    return GeometrySet(geometries=geoms)


@dataclass(frozen=True)
class Bucket:
    key: str
    label: str
    color: str  # palette name


def _comprehensive_bucket(record):
    mode = record.mode
    return Bucket(mode.label, "%s (%s)" % (mode.label, mode.band), mode.display_color)


def _barometer_bucket(record):
    if record.lag_count != 1:
        return None
    if record.mode.label == "C":
        return Bucket("more_at_risk", "more at risk (mode C)", "dark blue")
    return Bucket("less_at_risk", "less at risk (modes D, E)", "light blue")


def _residual_bucket(record):
    if record.pearson_residual is None:
        return None
    name = residual_bucket(record.pearson_residual)
    if name == "over-performing":
        return Bucket("over", "over-performing (r > 1)", "blue")
    if name == "under-performing":
        return Bucket("under", "under-performing (r < -1)", "orange")
    return Bucket("expected", "as expected (-1 <= r <= 1)", "light grey")


@dataclass(frozen=True)
class MapScheme:
    name: str
    bucket: callable
    legend_order: tuple


SCHEMES = {
    "comprehensive": MapScheme(
        "comprehensive", _comprehensive_bucket, MODE_ORDER),
    "barometer": MapScheme(
        "barometer", _barometer_bucket, ("more_at_risk", "less_at_risk")),
    "residual": MapScheme(
        "residual", _residual_bucket, ("under", "expected", "over")),
}


def emit_geojson(records, geometry, scheme):
    """One feature per county with mode/bucket properties and fill color.

    Counties without geometry are reported through a warning and listed in
    the document's ``missing_fips`` foreign member; legend counts live in
    the ``legend`` member.
    """
    if isinstance(scheme, str):
        scheme = SCHEMES[scheme]
    features = []
    missing = []
    counts = {}
    for rec in sorted(records, key=lambda r: r.fips):
        bucket = scheme.bucket(rec)
        if bucket is None:
            continue
        geom = geometry.geometries.get(rec.fips)
        if geom is None:
            missing.append(rec.fips)
            continue
        counts[bucket.key] = counts.get(bucket.key, 0) + 1
        features.append({
            "type": "Feature",
            "geometry": geom,
            "properties": {
                "fips": rec.fips,
                "bucket": bucket.key,
                "label": bucket.label,
                "mode": rec.mode.label,
                "p_not_desert": rec.p_not_desert,
                "fill": _PALETTE[bucket.color],
            },
        })
    if missing:
        warnings.warn(
            "no geometry for %d counties: %s" % (len(missing), ", ".join(missing[:5])),
            GeometryMissingWarning,
            stacklevel=2,
        )
    legend = []
    for key in scheme.legend_order:
        if key in counts:
            bucket = _legend_bucket(scheme, key)
            legend.append({
                "bucket": key,
                "label": bucket.label,
                "color": _PALETTE[bucket.color],
                "count": counts[key],
            })
    return {
        "type": "FeatureCollection",
        "features": features,
        "legend": legend,
        "missing_fips": missing,
        "scheme": scheme.name,
    }


def _legend_bucket(scheme, key):
    if scheme.name == "comprehensive":
        mode = MODES[key]
        return Bucket(key, "%s (%s)" % (mode.label, mode.band), mode.display_color)
    if scheme.name == "barometer":
        return (Bucket("more_at_risk", "more at risk (mode C)", "dark blue")
                if key == "more_at_risk"
                else Bucket("less_at_risk", "less at risk (modes D, E)", "light blue"))
    labels = {
        "over": Bucket("over", "over-performing (r > 1)", "blue"),
        "under": Bucket("under", "under-performing (r < -1)", "orange"),
        "expected": Bucket("expected", "as expected (-1 <= r <= 1)", "light grey"),
    }
    return labels[key]


def legend_to_csv(document):
    lines = ["bucket,label,color,count"]
    for entry in document["legend"]:
        lines.append("%s,%s,%s,%d"
                     % (entry["bucket"], entry["label"], entry["color"], entry["count"]))
    return "\n".join(lines) + "\n"


# --- projection and SVG rendering ---

# Albers equal-area conic with the standard US parameters
_LAT0 = math.radians(23.0)
_LON0 = math.radians(-96.0)
_PHI1 = math.radians(29.5)
_PHI2 = math.radians(45.5)
_ALBERS_N = (math.sin(_PHI1) + math.sin(_PHI2)) / 2.0
_ALBERS_C = math.cos(_PHI1) ** 2 + 2.0 * _ALBERS_N * math.sin(_PHI1)
_ALBERS_RHO0 = math.sqrt(_ALBERS_C - 2.0 * _ALBERS_N * math.sin(_LAT0)) / _ALBERS_N


def albers(lon, lat):
    """Project (lon, lat) degrees to planar coordinates (y grows north)."""
    phi = math.radians(lat)
    rho = math.sqrt(_ALBERS_C - 2.0 * _ALBERS_N * math.sin(phi)) / _ALBERS_N
    theta = _ALBERS_N * (math.radians(lon) - _LON0)
    return rho * math.sin(theta), _ALBERS_RHO0 - rho * math.cos(theta)


def _project_rings(geometry):
    gtype = geometry["type"]
    polys = [geometry["coordinates"]] if gtype == "Polygon" else geometry["coordinates"]
    out = []
    for poly in polys:
        out.append([[albers(lon, lat) for lon, lat in ring] for ring in poly])
    return out


def render_svg(document, size=(960, 600)):
    """Deterministic SVG: stable element order, 2-dp coordinates, legend block."""
    features = document.get("features", [])
    if not features:
        raise EmptyDocument("no features to render")
    width, height = size
    legend_w = 260
    pad = 10.0

    projected = [( _project_rings(f["geometry"]), f["properties"]["fill"])
                 for f in features]
    xs = [pt[0] for rings, _ in projected for poly in rings for ring in poly for pt in ring]
    ys = [pt[1] for rings, _ in projected for poly in rings for ring in poly for pt in ring]
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    span_x = max(xmax - xmin, 1e-12)
    span_y = max(ymax - ymin, 1e-12)
    scale = min((width - legend_w - 2 * pad) / span_x, (height - 2 * pad) / span_y)

    def to_svg(pt):
        # flip y: SVG grows downward
        x = pad + (pt[0] - xmin) * scale
        y = pad + (ymax - pt[1]) * scale
        return "%.2f,%.2f" % (x, y)

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
        'viewBox="0 0 %d %d">' % (width, height, width, height)
    ]
    for rings, fill in projected:
        path = []
        for poly in rings:
            for ring in poly:
                path.append("M" + " L".join(to_svg(pt) for pt in ring) + " Z")
        parts.append('<path d="%s" fill="%s" stroke="#ffffff" stroke-width="0.5"/>'
                     % (" ".join(path), fill))

    lx = width - legend_w + 10
    ly = 20.0
    parts.append('<g font-family="sans-serif" font-size="12">')
    for entry in document.get("legend", []):
        parts.append('<rect x="%.2f" y="%.2f" width="14" height="14" fill="%s"/>'
                     % (lx, ly, entry["color"]))
        parts.append('<text x="%.2f" y="%.2f">%s (%d)</text>'
                     % (lx + 20, ly + 12, entry["label"], entry["count"]))
        ly += 20.0
    parts.append("</g>")
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def validate_feature_collection(document):
    """Structural check against the GeoJSON feature-collection grammar."""
    if document.get("type") != "FeatureCollection":
        raise DomainError("type must be FeatureCollection")
    if not isinstance(document.get("features"), list):
        raise DomainError("features must be a list")
    for feature in document["features"]:
        if feature.get("type") != "Feature":
            raise DomainError("feature type must be Feature")
        if "properties" not in feature:
            raise DomainError("feature lacks properties")
        _check_rings(feature.get("geometry") or {})
    return True
