"""Parsing and context-free filtering of raw point-record streams.

The filter chain is fixed: parse -> prefilter (dedup, boundary clip,
keyword blocklist) -> per-user speed filter -> per-user residency filter.
Land-use dependent filtering lives in :mod:`motifmine.annotate`.
"""

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .geo import haversine_m, point_in_ring, ring_self_intersects

DEFAULT_BLOCKLIST = ("job", "jobs", "hiring", "recruiting", "traffic", "weather alert")

GPS = "gps"
GEOCODED = "geocoded"


@dataclass(slots=True)
class PointRecord:
    """One timestamped geo-located observation of one user."""

    user_id: str
    ts: int  # UTC epoch seconds
    lat: float
    lon: float
    source: str = GPS
    text: str = ""


@dataclass(slots=True)
class UserTrack:
    user_id: str
    points: list  # PointRecord, non-decreasing ts


@dataclass(slots=True)
class RecordSchema:
    """Column layout of the delimited input stream."""

    delimiter: str = ","
    columns: dict = field(
        default_factory=lambda: {
            "user_id": 0,
            "timestamp": 1,
            "lat": 2,
            "lon": 3,
            "location_source": 4,
            "text": 5,
        }
    )


SCHEMA_FIELDS = ("user_id", "timestamp", "lat", "lon", "location_source", "text")


def parse_schema_columns(spec: str) -> dict:
    """Column map from a "field=index,..." string; text is optional."""
    columns = {}
    for part in spec.split(","):
        name, sep, idx = (s.strip() for s in part.partition("="))
        if not sep or name not in SCHEMA_FIELDS or not idx.isdigit():
            raise ValueError(f"bad schema column entry: {part!r}")
        columns[name] = int(idx)
    missing = [f for f in SCHEMA_FIELDS if f != "text" and f not in columns]
    if missing:
        raise ValueError(f"schema columns missing fields: {missing}")
    return columns


@dataclass(slots=True)
class ParseReport:
    lines: int = 0
    records: int = 0
    malformed: int = 0
    bad_coord: int = 0
    geocoded: int = 0


@dataclass(slots=True)
class FilterConfig:
    boundary: tuple | None = None  # (lat, lon) ring without repeated last vertex
    keyword_blocklist: tuple = DEFAULT_BLOCKLIST
    max_speed_mps: float = 240.0
    min_residency_days: float = 30.0
    residency_mode: str = "span"  # or "active-days"

    def __post_init__(self):
        if self.max_speed_mps <= 0:
            raise ValueError("max_speed_mps must be positive")
        if self.min_residency_days <= 0:
            raise ValueError("min_residency_days must be positive")
        if self.residency_mode not in ("span", "active-days"):
            raise ValueError(f"unknown residency_mode {self.residency_mode!r}")
        if self.boundary is not None:
            if len(self.boundary) < 3 or ring_self_intersects(self.boundary):
                raise ValueError("boundary must be a simple polygon ring")
        self.keyword_blocklist = tuple(k.lower() for k in self.keyword_blocklist)


@dataclass(slots=True)
class SpeedDecision:
    keep: bool
    offender: tuple | None = None  # (PointRecord, PointRecord) of the violating pair
    speed_mps: float | None = None


def parse_timestamp(raw: str) -> int:
    """ISO-8601 string to UTC epoch seconds. Naive timestamps are taken as UTC."""
    s = raw.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_records(lines, schema: RecordSchema | None = None):
    """Parse a newline-delimited record stream.

    Malformed lines are skipped and counted, never fatal. Records whose
    location source is the geocoder rather than a GPS fix are dropped and
    counted separately.

    Returns (records, ParseReport).
    """
    schema = schema or RecordSchema()
    cols = schema.columns
    text_col = cols.get("text")
    report = ParseReport()
    records = []
    reader = csv.reader(lines, delimiter=schema.delimiter)
    for row in reader:
        report.lines += 1
        if not row:
            report.malformed += 1
            continue
        try:
            user_id = row[cols["user_id"]].strip()
            ts = parse_timestamp(row[cols["timestamp"]])
            lat = float(row[cols["lat"]])
            lon = float(row[cols["lon"]])
            source = row[cols["location_source"]].strip().lower()
        except (IndexError, KeyError, ValueError):
            report.malformed += 1
            continue
        if not user_id or source not in (GPS, GEOCODED):
            report.malformed += 1
            continue
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            report.bad_coord += 1
            continue
        if source == GEOCODED:
            report.geocoded += 1
            continue
        text = ""
        if text_col is not None and text_col < len(row):
            text = row[text_col]
        records.append(PointRecord(user_id, ts, lat, lon, source, text))
    report.records = len(records)
    return records, report


def parse_records_path(path, schema: RecordSchema | None = None):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_records(fh, schema)


def prefilter(records, cfg: FilterConfig):
    """Dedup, boundary clip and keyword blocklist, preserving record order.

    Duplicates share the full (user, ts, lat, lon) key; the first occurrence
    wins. The keyword match is a case-insensitive substring test against the
    message text.
    """
    seen = set()
    out = []
    blocklist = cfg.keyword_blocklist
    for rec in records:
        key = (rec.user_id, rec.ts, rec.lat, rec.lon)
        if key in seen:
            continue
        seen.add(key)
        if cfg.boundary is not None and not point_in_ring(rec.lat, rec.lon, cfg.boundary):
            continue
        if blocklist and rec.text:
            low = rec.text.lower()
            if any(k in low for k in blocklist):
                continue
        out.append(rec)
    return out


def group_tracks(records) -> list:
    """Group records into per-user chronological tracks, sorted by user id."""
    by_user: dict[str, list] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    tracks = []
    for user_id in sorted(by_user):
        pts = sorted(by_user[user_id], key=lambda r: r.ts)  # stable: ties keep input order
        tracks.append(UserTrack(user_id, pts))
    return tracks


def speed_filter(track: UserTrack, cfg: FilterConfig) -> SpeedDecision:
    """Drop the whole user when any consecutive relocation exceeds the speed cap.

    A zero time gap with nonzero displacement also drops the user; a zero
    gap with zero displacement is ignored (duplicates are removed upstream).
    The threshold is strict: exactly max_speed_mps is kept.
    """
    pts = track.points
    for a, b in zip(pts, pts[1:]):
        dt = b.ts - a.ts
        dist = haversine_m(a.lat, a.lon, b.lat, b.lon)
        if dt <= 0:
            if dist > 0.0:
                return SpeedDecision(False, (a, b), float("inf"))
            continue
        speed = dist / dt
        if speed > cfg.max_speed_mps:
            return SpeedDecision(False, (a, b), speed)
    return SpeedDecision(True)


def residency_filter(track: UserTrack, cfg: FilterConfig) -> bool:
    """Keep only users observed in the region for more than the residency minimum.

    In "span" mode the criterion is last-minus-first observation time; in
    "active-days" mode it is the count of distinct UTC days with a record.
    Both comparisons are strict.
    """
    if not track.points:
        return False
    if cfg.residency_mode == "active-days":
        days = {p.ts // 86400 for p in track.points}
        return len(days) > cfg.min_residency_days
    span_s = track.points[-1].ts - track.points[0].ts
    return span_s > cfg.min_residency_days * 86400.0
