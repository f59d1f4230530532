import math
import random

import pytest

from motifmine.ingest import (
    DEFAULT_BLOCKLIST,
    FilterConfig,
    UserTrack,
    group_tracks,
    parse_records,
    prefilter,
    residency_filter,
    speed_filter,
)

from conftest import rec

R = 6_371_000.0


def lines(*rows):
    return list(rows)


class TestParse:
    def test_well_formed_line(self):
        recs, report = parse_records(lines("u1,2014-03-01T12:00:00Z,41.88,-87.63,gps,hello"))
        assert len(recs) == 1
        r = recs[0]
        assert r.user_id == "u1"
        assert r.lat == 41.88 and r.lon == -87.63
        assert r.source == "gps" and r.text == "hello"
        assert report.records == 1 and report.lines == 1

    def test_timestamp_parses_to_utc_epoch(self):
        recs, _ = parse_records(lines("u1,1970-01-01T00:01:00Z,0,0,gps,"))
        assert recs[0].ts == 60
        recs, _ = parse_records(lines("u1,1970-01-01T01:00:00+01:00,0,0,gps,"))
        assert recs[0].ts == 0

    def test_out_of_bounds_latitude_counted(self):
        recs, report = parse_records(lines("u1,2014-03-01T12:00:00Z,99.0,-87.63,gps,"))
        assert not recs
        assert report.bad_coord == 1

    def test_geocoded_source_dropped_and_counted(self):
        recs, report = parse_records(lines("u1,2014-03-01T12:00:00Z,41.88,-87.63,geocoded,"))
        assert not recs
        assert report.geocoded == 1

    def test_malformed_lines_skipped_never_fatal(self):
        recs, report = parse_records(
            lines(
                "garbage",
                "u1,not-a-time,41.88,-87.63,gps,",
                "u1,2014-03-01T12:00:00Z,not-a-lat,-87.63,gps,",
                ",2014-03-01T12:00:00Z,41.88,-87.63,gps,",
                "u1,2014-03-01T12:00:00Z,41.88,-87.63,carrier-pigeon,",
                "u1,2014-03-01T12:00:00Z,41.88,-87.63,gps,ok",
            )
        )
        assert len(recs) == 1
        assert report.malformed == 5
        assert report.lines == 6

    def test_quoted_text_with_delimiter(self):
        recs, _ = parse_records(lines('u1,2014-03-01T12:00:00Z,41.88,-87.63,gps,"a, b"'))
        assert recs[0].text == "a, b"


class TestPrefilter:
    def test_exact_duplicates_keep_first(self):
        a = rec(text="first")
        b = rec(text="second")  # same (user, ts, lat, lon) key
        out = prefilter([a, b], FilterConfig())
        assert out == [a]

    def test_outside_boundary_removed(self, chicago_ring):
        inside = rec(lat=41.88, lon=-87.63)
        outside = rec(lat=0.0, lon=0.0, ts=1)
        out = prefilter([inside, outside], FilterConfig(boundary=chicago_ring))
        assert out == [inside]

    def test_blocklist_substring_case_insensitive(self):
        spam = rec(text="We are hiring! Apply now")
        ham = rec(ts=1, text="lunch time")
        out = prefilter([spam, ham], FilterConfig(keyword_blocklist=("hiring", "job")))
        assert out == [ham]

    def test_default_blocklist_contents(self):
        assert "hiring" in DEFAULT_BLOCKLIST and "weather alert" in DEFAULT_BLOCKLIST

    def test_order_preserved_and_idempotent(self, chicago_ring):
        rng = random.Random(99)
        records = []
        for i in range(400):
            records.append(
                rec(
                    user=f"u{rng.randrange(5)}",
                    ts=rng.randrange(1000),
                    lat=rng.uniform(40.0, 43.0),
                    lon=rng.uniform(-89.0, -87.0),
                    text=rng.choice(["", "hello", "now hiring", "traffic jam"]),
                )
            )
        cfg = FilterConfig(boundary=chicago_ring)
        once = prefilter(records, cfg)
        twice = prefilter(once, cfg)
        assert once == twice
        positions = {id(r): i for i, r in enumerate(records)}
        assert [positions[id(r)] for r in once] == sorted(positions[id(r)] for r in once)


def equator_point_at_m(meters: float):
    """Oracle: along the equator, arc length = R * radians(dlon)."""
    return 0.0, math.degrees(meters / R)


class TestSpeedFilter:
    def test_fast_pair_drops_user(self):
        # 1000 km in one hour is ~277.8 m/s, above the 240 m/s cap
        lat2, lon2 = equator_point_at_m(1_000_000.0)
        track = UserTrack("u1", [rec(lat=0.0, lon=0.0, ts=0), rec(lat=lat2, lon=lon2, ts=3600)])
        decision = speed_filter(track, FilterConfig())
        assert not decision.keep
        assert decision.speed_mps == pytest.approx(1_000_000.0 / 3600.0, rel=1e-4)
        assert decision.offender == (track.points[0], track.points[1])

    def test_boundary_is_strict_keep_at_238_9(self):
        # 860 km in 3600 s is ~238.9 m/s, inside the cap
        lat2, lon2 = equator_point_at_m(860_000.0)
        track = UserTrack("u1", [rec(lat=0.0, lon=0.0, ts=0), rec(lat=lat2, lon=lon2, ts=3600)])
        assert speed_filter(track, FilterConfig()).keep

    def test_zero_distance_any_dt_keeps(self):
        track = UserTrack("u1", [rec(ts=0), rec(ts=0), rec(ts=1000)])
        assert speed_filter(track, FilterConfig()).keep

    def test_zero_dt_nonzero_distance_drops(self):
        track = UserTrack("u1", [rec(ts=0, lon=-87.63), rec(ts=0, lon=-87.0)])
        decision = speed_filter(track, FilterConfig())
        assert not decision.keep
        assert decision.speed_mps == math.inf

    def test_decision_invariant_under_appending_slow_point(self):
        rng = random.Random(7)
        cfg = FilterConfig()
        for _ in range(50):
            pts = []
            ts = 0
            lat, lon = 41.9, -87.6
            for _ in range(rng.randrange(2, 8)):
                ts += rng.randrange(60, 3600)
                lat += rng.uniform(-0.01, 0.01)
                lon += rng.uniform(-0.01, 0.01)
                pts.append(rec(ts=ts, lat=lat, lon=lon))
            track = UserTrack("u1", pts)
            before = speed_filter(track, cfg).keep
            if not before:
                continue
            # append a point whose implied speed is well under the cap
            slow = rec(ts=pts[-1].ts + 3600, lat=pts[-1].lat + 0.001, lon=pts[-1].lon)
            assert speed_filter(UserTrack("u1", pts + [slow]), cfg).keep == before


class TestResidencyFilter:
    def test_long_span_keeps(self):
        track = UserTrack("u1", [rec(ts=0), rec(ts=45 * 86400)])
        assert residency_filter(track, FilterConfig())

    def test_exactly_30_days_drops(self):
        track = UserTrack("u1", [rec(ts=0), rec(ts=30 * 86400)])
        assert not residency_filter(track, FilterConfig())

    def test_single_record_drops(self):
        assert not residency_filter(UserTrack("u1", [rec(ts=0)]), FilterConfig())

    def test_active_days_mode(self):
        cfg = FilterConfig(residency_mode="active-days", min_residency_days=3)
        pts = [rec(ts=d * 86400) for d in range(4)]
        assert residency_filter(UserTrack("u1", pts), cfg)  # 4 distinct days > 3
        assert not residency_filter(UserTrack("u1", pts[:3]), cfg)


def test_group_tracks_sorted_and_chronological():
    records = [rec(user="b", ts=5), rec(user="a", ts=9), rec(user="a", ts=1)]
    tracks = group_tracks(records)
    assert [t.user_id for t in tracks] == ["a", "b"]
    assert [p.ts for p in tracks[0].points] == [1, 9]


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(max_speed_mps=0)
    with pytest.raises(ValueError):
        FilterConfig(residency_mode="sometimes")
    bowtie = ((0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0))
    with pytest.raises(ValueError):
        FilterConfig(boundary=bowtie)


def test_schema_columns_reorder():
    from motifmine.ingest import RecordSchema, parse_schema_columns

    columns = parse_schema_columns("lat=0,lon=1,user_id=2,timestamp=3,location_source=4")
    schema = RecordSchema(columns=columns)
    recs, report = parse_records(["41.88,-87.63,u1,2014-03-01T12:00:00Z,gps"], schema)
    assert report.malformed == 0
    assert recs[0].user_id == "u1" and recs[0].lat == 41.88
    with pytest.raises(ValueError):
        parse_schema_columns("lat=0")
    with pytest.raises(ValueError):
        parse_schema_columns("lat=zero,lon=1,user_id=2,timestamp=3,location_source=4")
