import json
import math
import random

import pytest

from motifmine.geo import METERS_PER_DEGREE
from motifmine.parcels import (
    ActivityScheme,
    NearestHit,
    SpatialIndex,
    load_parcels,
    nearest_parcel,
    nearest_parcel_scan,
)

from conftest import geojson_polygon_feature, make_index, make_parcel, square_ring, write_geojson


class TestActivityScheme:
    def test_canonical_names_map_to_their_codes(self):
        scheme = ActivityScheme()
        assert scheme.code_for("Residential") == 1
        assert scheme.code_for("Office/Workplace") == 6
        assert scheme.code_for("Transportation") == 11

    def test_unknown_category_falls_back_to_12(self):
        assert ActivityScheme().code_for("volcano lair") == 12

    def test_case_insensitive_and_custom(self):
        scheme = ActivityScheme({"single family": 1, "URBAN MIX": 3})
        assert scheme.code_for("Single Family") == 1
        assert scheme.code_for("urban mix") == 3

    def test_out_of_range_code_rejected(self):
        with pytest.raises(ValueError):
            ActivityScheme({"weird": 13})

    def test_from_file(self, tmp_path):
        p = tmp_path / "scheme.tsv"
        p.write_text("# comment\nsingle family\t1\nstrip mall\t9\n")
        scheme = ActivityScheme.from_file(p)
        assert scheme.code_for("strip mall") == 9


class TestLoadParcels:
    def test_categories_map_and_ids_are_sequential(self, tmp_path):
        feats = [
            geojson_polygon_feature(square_ring(41.90, -87.60, 50), "Residential"),
            geojson_polygon_feature(square_ring(41.92, -87.60, 50), "Office/Workplace"),
            geojson_polygon_feature(square_ring(41.94, -87.60, 50), "mystery meat"),
        ]
        path = write_geojson(tmp_path / "p.geojson", feats)
        index, report = load_parcels(path)
        assert [p.parcel_id for p in index.parcels] == [1, 2, 3]
        assert [p.activity_code for p in index.parcels] == [1, 6, 12]
        assert report.loaded == 3
        assert report.per_code == {1: 1, 6: 1, 12: 1}

    def test_self_intersecting_polygon_skipped_and_counted(self, tmp_path):
        bowtie = ((41.90, -87.60), (41.91, -87.59), (41.90, -87.59), (41.91, -87.60))
        feats = [
            geojson_polygon_feature(bowtie, "Residential"),
            geojson_polygon_feature(square_ring(41.92, -87.60, 50), "Residential"),
        ]
        path = write_geojson(tmp_path / "p.geojson", feats)
        index, report = load_parcels(path)
        assert report.skipped_invalid == 1
        assert report.loaded == 1

    def test_zero_valid_parcels_is_fatal(self, tmp_path):
        path = write_geojson(tmp_path / "p.geojson", [])
        with pytest.raises(ValueError):
            load_parcels(path)

    def test_load_report_percentages(self, tmp_path):
        feats = [
            geojson_polygon_feature(square_ring(41.90 + i * 0.02, -87.60, 50), cat)
            for i, cat in enumerate(["Residential", "Residential", "Residential", "Services"])
        ]
        path = write_geojson(tmp_path / "p.geojson", feats)
        _, report = load_parcels(path)
        pct = report.code_percentages()
        assert pct[1] == pytest.approx(75.0)
        assert pct[7] == pytest.approx(25.0)


class TestNearestParcel:
    def test_containment_wins_with_zero_distance(self):
        idx = make_index([make_parcel(7, 41.90, -87.60, half_m=100)])
        hit = nearest_parcel(41.90, -87.60, idx)
        assert hit == NearestHit(7, 1, 0.0)

    def test_beyond_radius_returns_none(self):
        idx = make_index([make_parcel(1, 41.90, -87.60, half_m=50)])
        lat = 41.90 + 350.0 / METERS_PER_DEGREE  # 300 m from the north edge
        assert nearest_parcel(lat, -87.60, idx) is None

    def test_distance_is_to_nearest_boundary_point(self):
        idx = make_index([make_parcel(1, 41.90, -87.60, half_m=50)])
        lat = 41.90 + 150.0 / METERS_PER_DEGREE
        hit = nearest_parcel(lat, -87.60, idx)
        assert hit is not None
        assert hit.distance_m == pytest.approx(100.0, abs=0.5)

    def test_equidistant_tie_breaks_to_smaller_id(self):
        # parcels 2 and 9 sit symmetrically 100 m east/west of the query
        center_off = (100.0 + 50.0) / (METERS_PER_DEGREE * math.cos(math.radians(41.90)))
        parcels = [make_parcel(1, 41.95, -87.60)]  # far filler so ids 2 and 9 exist
        parcels.append(make_parcel(2, 41.90, -87.60 + center_off, half_m=50))
        parcels.extend(make_parcel(i, 41.99, -87.60 + 0.01 * i) for i in range(3, 9))
        parcels.append(make_parcel(9, 41.90, -87.60 - center_off, half_m=50))
        idx = make_index(parcels)
        d2 = nearest_parcel_scan(41.90, -87.60, [parcels[1]], radius_m=1e9).distance_m
        d9 = nearest_parcel_scan(41.90, -87.60, [parcels[-1]], radius_m=1e9).distance_m
        assert d2 == d9  # the tie is real, not approximate
        hit = nearest_parcel(41.90, -87.60, idx)
        assert hit.parcel_id == 2

    def test_radius_must_be_positive(self):
        idx = make_index([make_parcel(1, 41.90, -87.60)])
        with pytest.raises(ValueError):
            nearest_parcel(41.90, -87.60, idx, radius_m=0)


def random_world(rng, n_parcels, lat0=41.5, lon0=-88.0, span=0.08):
    parcels = []
    for i in range(1, n_parcels + 1):
        lat = lat0 + rng.random() * span
        lon = lon0 + rng.random() * span
        parcels.append(make_parcel(i, lat, lon, half_m=rng.uniform(20, 120)))
    return parcels


class TestIndexEquivalence:
    def test_index_equals_linear_scan(self):
        rng = random.Random(2024)
        parcels = random_world(rng, 300)
        idx = SpatialIndex(parcels)
        for _ in range(300):
            lat = 41.5 + rng.random() * 0.08
            lon = -88.0 + rng.random() * 0.08
            a = nearest_parcel(lat, lon, idx)
            b = nearest_parcel_scan(lat, lon, parcels)
            if a is None or b is None:
                assert a is None and b is None
            else:
                assert a.parcel_id == b.parcel_id
                assert abs(a.distance_m - b.distance_m) < 1e-6

    def test_shrinking_radius_never_changes_the_parcel(self):
        rng = random.Random(55)
        parcels = random_world(rng, 120)
        idx = SpatialIndex(parcels)
        for _ in range(150):
            lat = 41.5 + rng.random() * 0.08
            lon = -88.0 + rng.random() * 0.08
            wide = nearest_parcel(lat, lon, idx, radius_m=400.0)
            narrow = nearest_parcel(lat, lon, idx, radius_m=150.0)
            if narrow is not None:
                assert wide is not None
                assert narrow.parcel_id == wide.parcel_id
                assert narrow.distance_m == wide.distance_m
            elif wide is not None:
                assert wide.distance_m > 150.0


def test_query_bbox_matches_brute_force():
    rng = random.Random(3)
    parcels = random_world(rng, 200)
    idx = SpatialIndex(parcels, leaf_size=8)
    for _ in range(100):
        lat = 41.5 + rng.random() * 0.08
        lon = -88.0 + rng.random() * 0.08
        box = (lat - 0.004, lon - 0.004, lat + 0.004, lon + 0.004)
        got = {p.parcel_id for p in idx.query_bbox(box)}
        expected = {
            p.parcel_id
            for p in parcels
            if p.bbox[0] <= box[2] and box[0] <= p.bbox[2]
            and p.bbox[1] <= box[3] and box[1] <= p.bbox[3]
        }
        assert got == expected
