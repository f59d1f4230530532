"""Great-circle and local planar geometry primitives.

All coordinates are WGS84 decimal degrees, latitude first. Distances are
meters on a sphere of mean radius 6,371 km. Planar work (nearest point on
a polygon, trajectory projection) uses an equirectangular frame centered
on the point of interest, which is accurate at the sub-kilometer scales
this pipeline operates on.
"""

import math

EARTH_RADIUS_M = 6_371_000.0

# meters per degree of latitude (and of longitude at the equator)
METERS_PER_DEGREE = EARTH_RADIUS_M * math.pi / 180.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters between two lat/lon points."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def local_xy(lat: float, lon: float, lat0: float, lon0: float) -> tuple[float, float]:
    """Project a point to meters in an equirectangular frame centered at (lat0, lon0)."""
    x = (lon - lon0) * METERS_PER_DEGREE * math.cos(math.radians(lat0))
    y = (lat - lat0) * METERS_PER_DEGREE
    return x, y


def local_latlon(x: float, y: float, lat0: float, lon0: float) -> tuple[float, float]:
    """Inverse of :func:`local_xy`."""
    lat = lat0 + y / METERS_PER_DEGREE
    lon = lon0 + x / (METERS_PER_DEGREE * math.cos(math.radians(lat0)))
    return lat, lon


def normalize_ring(ring) -> tuple:
    """Return the ring as a tuple of (lat, lon) pairs without a repeated last vertex."""
    pts = [(float(a), float(b)) for a, b in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return tuple(pts)


def ring_bbox(ring) -> tuple[float, float, float, float]:
    lats = [p[0] for p in ring]
    lons = [p[1] for p in ring]
    return min(lats), min(lons), max(lats), max(lons)


def _orient(ax, ay, bx, by, cx, cy) -> int:
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if v > 0.0:
        return 1
    if v < 0.0:
        return -1
    return 0


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def segments_intersect(p1, p2, p3, p4) -> bool:
    """True when segment p1-p2 intersects p3-p4 (including touching)."""
    d1 = _orient(*p3, *p4, *p1)
    d2 = _orient(*p3, *p4, *p2)
    d3 = _orient(*p1, *p2, *p3)
    d4 = _orient(*p1, *p2, *p4)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(*p3, *p4, *p1):
        return True
    if d2 == 0 and _on_segment(*p3, *p4, *p2):
        return True
    if d3 == 0 and _on_segment(*p1, *p2, *p3):
        return True
    if d4 == 0 and _on_segment(*p1, *p2, *p4):
        return True
    return False


def ring_self_intersects(ring) -> bool:
    """Check a closed ring for self-intersection between non-adjacent edges."""
    n = len(ring)
    if n < 3:
        return True
    segs = [(ring[i], ring[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex by construction
            if segments_intersect(segs[i][0][::-1], segs[i][1][::-1], segs[j][0][::-1], segs[j][1][::-1]):
                return True
    return False


def point_in_ring(lat: float, lon: float, ring) -> bool:
    """Even-odd crossing test. Ring vertices are (lat, lon) without repeat."""
    inside = False
    n = len(ring)
    for i in range(n):
        alat, alon = ring[i]
        blat, blon = ring[(i + 1) % n]
        if (alat > lat) != (blat > lat):
            t = (lat - alat) / (blat - alat)
            lon_cross = alon + t * (blon - alon)
            if lon_cross > lon:
                inside = not inside
    return inside


def point_in_polygon(lat: float, lon: float, exterior, holes=()) -> bool:
    """Containment with interior rings treated as outside."""
    if not point_in_ring(lat, lon, exterior):
        return False
    for hole in holes:
        if point_in_ring(lat, lon, hole):
            return False
    return True


def _nearest_on_segment(px, py, ax, ay, bx, by) -> tuple[float, float]:
    dx = bx - ax
    dy = by - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return ax, ay
    t = ((px - ax) * dx + (py - ay) * dy) / denom
    t = max(0.0, min(1.0, t))
    return ax + t * dx, ay + t * dy


def point_polygon_distance_m(lat: float, lon: float, exterior, holes=()) -> float:
    """Great-circle meters from a point to a polygon (0 when contained).

    The nearest boundary point is found in a local planar frame centered on
    the query point and the returned distance is the great-circle distance
    to it, which is the convention used for the nearest-parcel radius cap.
    """
    if point_in_polygon(lat, lon, exterior, holes):
        return 0.0
    best = None
    best_xy = None
    for ring in (exterior, *holes):
        n = len(ring)
        proj = [local_xy(p[0], p[1], lat, lon) for p in ring]
        for i in range(n):
            ax, ay = proj[i]
            bx, by = proj[(i + 1) % n]
            nx, ny = _nearest_on_segment(0.0, 0.0, ax, ay, bx, by)
            d2 = nx * nx + ny * ny
            if best is None or d2 < best:
                best = d2
                best_xy = (nx, ny)
    if best is None:
        return math.inf
    nlat, nlon = local_latlon(best_xy[0], best_xy[1], lat, lon)
    return haversine_m(lat, lon, nlat, nlon)
