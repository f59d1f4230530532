"""Land-use parcels: activity scheme, loading, and nearest-parcel queries.

Parcels are simple polygons (holes treated as outside) carrying a land-use
category that maps to one of twelve activity codes. Nearest-parcel lookups
run against a bulk-loaded R-tree whose results are, by construction,
identical to a linear scan; the tree is purely an accelerator.
"""

import json
import math
from dataclasses import dataclass, field

from .geo import (
    METERS_PER_DEGREE,
    haversine_m,
    normalize_ring,
    point_polygon_distance_m,
    ring_bbox,
    ring_self_intersects,
)

# canonical activity codes
CODE_NAMES = {
    1: "Residential",
    2: "Hotel/Resort",
    3: "Mixed-Use",
    4: "K-12 Schools",
    5: "University/College",
    6: "Office/Workplace",
    7: "Services",
    8: "Civic/Religious",
    9: "Shopping/Retail",
    10: "Recreation/Entertainment",
    11: "Transportation",
    12: "Others",
}

OTHERS_CODE = 12
RESIDENTIAL_CODE = 1

DEFAULT_RADIUS_M = 250.0


class ActivityScheme:
    """Mapping from land-use category strings to activity codes 1..12.

    Categories are matched case-insensitively; anything unmapped falls back
    to code 12 ("Others").
    """

    def __init__(self, mapping: dict | None = None):
        base = {name.lower(): code for code, name in CODE_NAMES.items()}
        if mapping:
            for cat, code in mapping.items():
                code = int(code)
                if not 1 <= code <= 12:
                    raise ValueError(f"activity code out of range for {cat!r}: {code}")
                base[cat.strip().lower()] = code
        self._map = base

    def code_for(self, category: str) -> int:
        return self._map.get(category.strip().lower(), OTHERS_CODE)

    @classmethod
    def from_file(cls, path) -> "ActivityScheme":
        """Two-column text file: category <TAB> code. '#' starts a comment."""
        mapping = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t") if "\t" in line else line.rsplit(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"bad scheme line: {line!r}")
                mapping[parts[0]] = int(parts[1])
        return cls(mapping)


@dataclass(slots=True)
class Parcel:
    parcel_id: int
    exterior: tuple  # (lat, lon) ring, no repeated last vertex
    holes: tuple
    land_use_category: str
    activity_code: int
    bbox: tuple = field(default=None)  # (minlat, minlon, maxlat, maxlon)

    def __post_init__(self):
        if self.bbox is None:
            self.bbox = ring_bbox(self.exterior)


@dataclass(slots=True)
class LoadReport:
    total_features: int = 0
    loaded: int = 0
    skipped_invalid: int = 0
    per_code: dict = field(default_factory=dict)

    def code_percentages(self) -> dict:
        if not self.loaded:
            return {}
        return {code: 100.0 * n / self.loaded for code, n in sorted(self.per_code.items())}


class _Node:
    __slots__ = ("bbox", "children", "parcels")

    def __init__(self, bbox, children=None, parcels=None):
        self.bbox = bbox
        self.children = children
        self.parcels = parcels


def _merge_bbox(boxes):
    return (
        min(b[0] for b in boxes),
        min(b[1] for b in boxes),
        max(b[2] for b in boxes),
        max(b[3] for b in boxes),
    )


def _bbox_intersects(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


class SpatialIndex:
    """Sort-tile-recursive packed R-tree over parcel bounding boxes."""

    def __init__(self, parcels, leaf_size: int = 16):
        self.parcels = list(parcels)
        self.leaf_size = leaf_size
        self._root = self._build(self.parcels) if self.parcels else None

    def _build(self, parcels) -> _Node:
        entries = sorted(
            parcels, key=lambda p: ((p.bbox[1] + p.bbox[3]) / 2.0, (p.bbox[0] + p.bbox[2]) / 2.0)
        )
        n = len(entries)
        slice_count = max(1, math.ceil(math.sqrt(math.ceil(n / self.leaf_size))))
        slice_size = math.ceil(n / slice_count) or 1
        leaves = []
        for i in range(0, n, slice_size):
            vertical = sorted(
                entries[i : i + slice_size],
                key=lambda p: ((p.bbox[0] + p.bbox[2]) / 2.0, (p.bbox[1] + p.bbox[3]) / 2.0),
            )
            for j in range(0, len(vertical), self.leaf_size):
                chunk = vertical[j : j + self.leaf_size]
                leaves.append(_Node(_merge_bbox([p.bbox for p in chunk]), parcels=chunk))
        nodes = leaves
        while len(nodes) > 1:
            parents = []
            for i in range(0, len(nodes), self.leaf_size):
                chunk = nodes[i : i + self.leaf_size]
                parents.append(_Node(_merge_bbox([c.bbox for c in chunk]), children=chunk))
            nodes = parents
        return nodes[0]

    def query_bbox(self, bbox) -> list:
        """All parcels whose bounding box intersects the query box."""
        out = []
        if self._root is None:
            return out
        stack = [self._root]
        while stack:
            node = stack.pop()
            if not _bbox_intersects(node.bbox, bbox):
                continue
            if node.parcels is not None:
                out.extend(p for p in node.parcels if _bbox_intersects(p.bbox, bbox))
            else:
                stack.extend(node.children)
        return out


def _valid_rings(geometry):
    """Normalize a GeoJSON Polygon geometry to (exterior, holes) or None if invalid."""
    if geometry.get("type") != "Polygon":
        return None
    rings = geometry.get("coordinates") or []
    if not rings:
        return None
    converted = []
    for ring in rings:
        pts = normalize_ring([(lat, lon) for lon, lat in ring])  # GeoJSON order is lon, lat
        if len(pts) < 3:
            return None
        converted.append(pts)
    if ring_self_intersects(converted[0]):
        return None
    return converted[0], tuple(converted[1:])


def load_parcels(path, scheme: ActivityScheme | None = None, category_attr: str = "category",
                 leaf_size: int = 16):
    """Load a GeoJSON polygon feature file into a spatial index.

    Parcel ids are re-assigned as sequential integers in file order, so the
    source identifiers never leave this function. Invalid geometries are
    skipped and counted. Raises ValueError when no valid parcel remains.

    Returns (SpatialIndex, LoadReport).
    """
    scheme = scheme or ActivityScheme()
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    features = doc.get("features", [])
    report = LoadReport(total_features=len(features))
    parcels = []
    next_id = 1
    for feat in features:
        rings = _valid_rings(feat.get("geometry") or {})
        if rings is None:
            report.skipped_invalid += 1
            continue
        category = str((feat.get("properties") or {}).get(category_attr, ""))
        code = scheme.code_for(category)
        parcels.append(Parcel(next_id, rings[0], rings[1], category, code))
        report.per_code[code] = report.per_code.get(code, 0) + 1
        next_id += 1
    report.loaded = len(parcels)
    if not parcels:
        raise ValueError(f"no valid parcels in {path}")
    return SpatialIndex(parcels, leaf_size=leaf_size), report


@dataclass(slots=True)
class NearestHit:
    parcel_id: int
    activity_code: int
    distance_m: float


def _bbox_lower_bound_m(lat, lon, bbox) -> float:
    """Distance lower bound from a point to a bbox, safe for pruning only."""
    clat = min(max(lat, bbox[0]), bbox[2])
    clon = min(max(lon, bbox[1]), bbox[3])
    if clat == lat and clon == lon:
        return 0.0
    # shave a hair so degree-space clamping never over-prunes at city scale
    return haversine_m(lat, lon, clat, clon) * (1.0 - 1e-6)


def _best_parcel(lat, lon, candidates, radius_m=math.inf):
    """Exact (distance, id)-minimal parcel over candidates.

    Candidates are probed in increasing bbox lower-bound order so the scan
    can stop once no remaining parcel can beat (or tie) the current best;
    pruning uses strict inequality, so exact ties still reach the id
    tie-break.
    """
    scored = sorted(
        ((_bbox_lower_bound_m(lat, lon, p.bbox), p) for p in candidates),
        key=lambda t: (t[0], t[1].parcel_id),
    )
    best = None
    for bound, parcel in scored:
        if bound > radius_m:
            break
        if best is not None and bound > best[0][0]:
            break
        d = point_polygon_distance_m(lat, lon, parcel.exterior, parcel.holes)
        key = (d, parcel.parcel_id)
        if best is None or key < best[0]:
            best = (key, parcel)
    return best


def _best_parcel_scan(lat, lon, parcels):
    """Prune-free reference: evaluate every parcel, minimize (distance, id)."""
    best = None
    for parcel in parcels:
        d = point_polygon_distance_m(lat, lon, parcel.exterior, parcel.holes)
        key = (d, parcel.parcel_id)
        if best is None or key < best[0]:
            best = (key, parcel)
    return best


def _radius_bbox(lat, lon, radius_m):
    # conservative degree box: any point within radius_m falls inside it
    dlat = radius_m / METERS_PER_DEGREE * 1.001
    band = min(89.9, abs(lat) + dlat)
    cosb = max(math.cos(math.radians(band)), 1e-9)
    dlon = radius_m / (METERS_PER_DEGREE * cosb) * 1.001
    return (lat - dlat, lon - dlon, lat + dlat, lon + dlon)


def nearest_parcel(lat: float, lon: float, index: SpatialIndex,
                   radius_m: float = DEFAULT_RADIUS_M) -> NearestHit | None:
    """Nearest parcel within radius_m of the point, or None.

    Containment counts as distance zero. Ties on distance resolve to the
    smallest parcel id. Callers map a None result to activity code 12.
    """
    if radius_m <= 0:
        raise ValueError("radius_m must be positive")
    candidates = index.query_bbox(_radius_bbox(lat, lon, radius_m))
    best = _best_parcel(lat, lon, candidates, radius_m)
    if best is None or best[0][0] > radius_m:
        return None
    (dist, _), parcel = best
    return NearestHit(parcel.parcel_id, parcel.activity_code, dist)


def nearest_parcel_scan(lat: float, lon: float, parcels,
                        radius_m: float = DEFAULT_RADIUS_M) -> NearestHit | None:
    """Reference linear-scan implementation of :func:`nearest_parcel`."""
    if radius_m <= 0:
        raise ValueError("radius_m must be positive")
    best = _best_parcel_scan(lat, lon, parcels)
    if best is None or best[0][0] > radius_m:
        return None
    (dist, _), parcel = best
    return NearestHit(parcel.parcel_id, parcel.activity_code, dist)


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle meters; exposed here as the pipeline distance primitive."""
    return haversine_m(lat1, lon1, lat2, lon2)
