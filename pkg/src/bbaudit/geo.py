"""Geodesy, hexagonal cell grid, and Web-Mercator quadkey tile math.

All spatial datasets in the pipeline are aligned on an opaque 64-bit cell
identifier produced by a reference hex grid: a flat-top hexagonal tiling of
an equirectangular plane anchored at a configurable origin, with the edge
length sized so the mean cell area is ~0.5 km^2. The grid sits behind a
small functional interface (cell_of / cell_centroid / cells_within_radius)
so an exact production grid backend can be swapped in later; downstream
code treats CellId as opaque.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

EARTH_RADIUS_KM = 6371.0
KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0
MERCATOR_LAT_LIMIT = 85.05113

# Edge length giving a mean hex area of 0.5 km^2 (area = 1.5*sqrt(3)*edge^2).
CELL_AREA_KM2 = 0.5
DEFAULT_EDGE_KM = math.sqrt(2.0 * CELL_AREA_KM2 / (3.0 * math.sqrt(3.0)))

_SQRT3 = math.sqrt(3.0)

# Cell ids carry a grid tag in the top byte plus two 28-bit signed axial
# coordinates; ids without the tag are rejected as foreign.
_CELL_TAG = 0xA8
_AXIAL_BITS = 28
_AXIAL_MOD = 1 << _AXIAL_BITS
_AXIAL_MAX = 1 << (_AXIAL_BITS - 1)


class GeoError(ValueError):
    """Base class for spatial input errors."""


class EmptyQuadkey(GeoError):
    pass


class InvalidDigit(GeoError):
    pass


class UnknownCell(GeoError):
    pass


@dataclass(frozen=True, order=True)
class GeoPoint:
    """Latitude/longitude in degrees; lon normalized to [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise GeoError(f"latitude out of range: {self.lat}")
        lon = self.lon
        # Wrap only out-of-range values: the modulo arithmetic can round
        # in-range longitudes sitting within one ulp of 180.
        if lon < -180.0 or lon >= 180.0:
            lon = ((lon + 180.0) % 360.0) - 180.0
            if lon >= 180.0:
                lon = -180.0
            object.__setattr__(self, "lon", lon)


@dataclass(frozen=True, order=True)
class CellId:
    """Opaque 64-bit identifier of one hex cell."""

    id: int

    def to_hex(self) -> str:
        return f"{self.id:016x}"

    @classmethod
    def from_hex(cls, s: str) -> "CellId":
        try:
            value = int(s, 16)
        except ValueError:
            raise UnknownCell(f"not a cell hex string: {s!r}") from None
        if not 0 <= value < 1 << 64:
            raise UnknownCell(f"cell id out of 64-bit range: {s!r}")
        return cls(value)


@dataclass(frozen=True)
class TileXYZ:
    """Web-Mercator tile address at zoom z (x east, y south from NW)."""

    x: int
    y: int
    z: int

    def __post_init__(self):
        if self.z < 1:
            raise GeoError(f"zoom must be >= 1, got {self.z}")
        if not (0 <= self.x < 1 << self.z and 0 <= self.y < 1 << self.z):
            raise GeoError(f"tile ({self.x},{self.y}) out of range at z={self.z}")


@dataclass(frozen=True)
class GridConfig:
    """Hex grid parameters: edge length in km and the anchoring origin."""

    edge_km: float = DEFAULT_EDGE_KM
    origin: GeoPoint = field(default_factory=lambda: GeoPoint(39.0, -98.0))

    def __post_init__(self):
        if self.edge_km <= 0:
            raise GeoError(f"edge_km must be positive, got {self.edge_km}")
        if abs(self.origin.lat) > 80.0:
            raise GeoError("grid origin latitude must be within +/-80 degrees")


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance on a sphere of radius 6371 km."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    h = min(1.0, h)
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


# ---------------------------------------------------------------------------
# Quadkey / Web-Mercator tiles


def quadkey_to_tile(quadkey: str) -> TileXYZ:
    """Decode a base-4 quadkey into tile coordinates (bit de-interleave)."""
    if not quadkey:
        raise EmptyQuadkey("quadkey must be non-empty")
    z = len(quadkey)
    x = y = 0
    for i, ch in enumerate(quadkey):
        if ch not in "0123":
            raise InvalidDigit(f"invalid quadkey digit {ch!r} in {quadkey!r}")
        d = ord(ch) - ord("0")
        mask = 1 << (z - 1 - i)
        if d & 1:
            x |= mask
        if d & 2:
            y |= mask
    return TileXYZ(x, y, z)


def tile_to_quadkey(tile: TileXYZ) -> str:
    """Inverse of quadkey_to_tile."""
    digits = []
    for i in range(tile.z, 0, -1):
        mask = 1 << (i - 1)
        d = 0
        if tile.x & mask:
            d |= 1
        if tile.y & mask:
            d |= 2
        digits.append(str(d))
    return "".join(digits)


def _mercator_lat(y: float, z: int) -> float:
    n = math.pi * (1.0 - 2.0 * y / (1 << z))
    lat = math.degrees(math.atan(math.sinh(n)))
    return max(-MERCATOR_LAT_LIMIT, min(MERCATOR_LAT_LIMIT, lat))


def tile_bounds(tile: TileXYZ) -> tuple[GeoPoint, GeoPoint]:
    """(south-west, north-east) corners of the tile's lat/lon box."""
    n = 1 << tile.z
    lon_w = tile.x / n * 360.0 - 180.0
    lon_e = (tile.x + 1) / n * 360.0 - 180.0
    lat_n = _mercator_lat(tile.y, tile.z)
    lat_s = _mercator_lat(tile.y + 1, tile.z)
    # The eastern edge of the last column is +180, which GeoPoint would wrap.
    lon_e = min(lon_e, math.nextafter(180.0, -math.inf))
    return GeoPoint(lat_s, lon_w), GeoPoint(lat_n, lon_e)


def point_to_tile(p: GeoPoint, z: int) -> TileXYZ:
    """Tile containing a point at zoom z (used by the scenario generator)."""
    if z < 1:
        raise GeoError(f"zoom must be >= 1, got {z}")
    lat = max(-MERCATOR_LAT_LIMIT, min(MERCATOR_LAT_LIMIT, p.lat))
    n = 1 << z
    x = int((p.lon + 180.0) / 360.0 * n)
    lat_rad = math.radians(lat)
    y = int((1.0 - math.asinh(math.tan(lat_rad)) / math.pi) / 2.0 * n)
    return TileXYZ(min(x, n - 1), min(y, n - 1), z)


# ---------------------------------------------------------------------------
# Hex grid


def _project(p: GeoPoint, g: GridConfig) -> tuple[float, float]:
    """Equirectangular km coordinates relative to the grid origin."""
    coslat0 = math.cos(math.radians(g.origin.lat))
    x = (p.lon - g.origin.lon) * KM_PER_DEG * coslat0
    y = (p.lat - g.origin.lat) * KM_PER_DEG
    return x, y


def _unproject(x: float, y: float, g: GridConfig) -> GeoPoint:
    coslat0 = math.cos(math.radians(g.origin.lat))
    return GeoPoint(g.origin.lat + y / KM_PER_DEG, g.origin.lon + x / (KM_PER_DEG * coslat0))


def _axial_round(qf: float, rf: float) -> tuple[int, int]:
    # Cube rounding: snap to the nearest hex center, fixing the coordinate
    # with the largest rounding error so x+y+z stays 0.
    xf, zf = qf, rf
    yf = -xf - zf
    rx, ry, rz = round(xf), round(yf), round(zf)
    dx, dy, dz = abs(rx - xf), abs(ry - yf), abs(rz - zf)
    if dx > dy and dx > dz:
        rx = -ry - rz
    elif dy > dz:
        ry = -rx - rz
    else:
        rz = -rx - ry
    return int(rx), int(rz)


def _axial_to_planar(q: int, r: int, g: GridConfig) -> tuple[float, float]:
    s = g.edge_km
    return 1.5 * s * q, _SQRT3 * s * (r + q / 2.0)


def _planar_to_axial(x: float, y: float, g: GridConfig) -> tuple[float, float]:
    s = g.edge_km
    qf = (2.0 / 3.0) * (x / s)
    rf = y / (_SQRT3 * s) - qf / 2.0
    return qf, rf


def _encode_axial(q: int, r: int) -> CellId:
    if not (-_AXIAL_MAX <= q < _AXIAL_MAX and -_AXIAL_MAX <= r < _AXIAL_MAX):
        raise GeoError(f"axial coordinate out of range: ({q},{r})")
    value = (_CELL_TAG << 56) | ((q % _AXIAL_MOD) << _AXIAL_BITS) | (r % _AXIAL_MOD)
    return CellId(value)


def _decode_axial(c: CellId) -> tuple[int, int]:
    if c.id >> 56 != _CELL_TAG:
        raise UnknownCell(f"cell id {c.to_hex()} was not produced by this grid")
    q = (c.id >> _AXIAL_BITS) & (_AXIAL_MOD - 1)
    r = c.id & (_AXIAL_MOD - 1)
    if q >= _AXIAL_MAX:
        q -= _AXIAL_MOD
    if r >= _AXIAL_MAX:
        r -= _AXIAL_MOD
    return q, r


def cell_of(p: GeoPoint, g: GridConfig) -> CellId:
    """Cell containing a point. Deterministic; boundary ties are stable."""
    x, y = _project(p, g)
    q, r = _axial_round(*_planar_to_axial(x, y, g))
    return _encode_axial(q, r)


def cell_centroid(c: CellId, g: GridConfig) -> GeoPoint:
    """Centroid of a cell produced by this grid; rejects foreign ids."""
    q, r = _decode_axial(c)
    x, y = _axial_to_planar(q, r, g)
    return _unproject(x, y, g)


def cell_boundary(c: CellId, g: GridConfig) -> list[GeoPoint]:
    """Six corner points of the (flat-top) hexagon, counter-clockwise."""
    q, r = _decode_axial(c)
    cx, cy = _axial_to_planar(q, r, g)
    pts = []
    for i in range(6):
        ang = math.radians(60.0 * i)
        pts.append(_unproject(cx + g.edge_km * math.cos(ang), cy + g.edge_km * math.sin(ang), g))
    return pts


def cells_within_radius(p: GeoPoint, r_km: float, g: GridConfig) -> set[CellId]:
    """All cells whose centroid is within haversine r_km + one edge of p.

    The +edge slack makes the result an inclusive over-approximation: no
    cell containing a point within r_km of p is ever omitted.
    """
    if r_km < 0:
        raise GeoError(f"radius must be >= 0, got {r_km}")
    reach = r_km + g.edge_km
    dlat = reach / KM_PER_DEG
    band_cos = min(
        math.cos(math.radians(max(-89.9, p.lat - dlat))),
        math.cos(math.radians(min(89.9, p.lat + dlat))),
    )
    band_cos = max(band_cos, 1e-6)
    coslat0 = math.cos(math.radians(g.origin.lat))
    half_w = reach * coslat0 / band_cos
    half_h = reach

    px, py = _project(p, g)
    s = g.edge_km
    q_lo = math.floor((px - half_w) / (1.5 * s)) - 2
    q_hi = math.ceil((px + half_w) / (1.5 * s)) + 2
    out: set[CellId] = set()
    for q in range(q_lo, q_hi + 1):
        r_lo = math.floor((py - half_h) / (_SQRT3 * s) - q / 2.0) - 2
        r_hi = math.ceil((py + half_h) / (_SQRT3 * s) - q / 2.0) + 2
        for r in range(r_lo, r_hi + 1):
            cx, cy = _axial_to_planar(q, r, g)
            if haversine_km(p, _unproject(cx, cy, g)) <= reach:
                out.add(_encode_axial(q, r))
    return out


def cells_overlapping_bbox(sw: GeoPoint, ne: GeoPoint, g: GridConfig) -> set[CellId]:
    """Cells whose circumscribed circle intersects the lat/lon box.

    Over-approximates actual hexagon/box overlap, which is the inclusive
    behavior the tile reprojection step needs.
    """
    center = GeoPoint((sw.lat + ne.lat) / 2.0, (sw.lon + ne.lon) / 2.0)
    half_diag = haversine_km(sw, ne) / 2.0
    out: set[CellId] = set()
    for c in cells_within_radius(center, half_diag, g):
        ctr = cell_centroid(c, g)
        nearest = GeoPoint(
            min(max(ctr.lat, sw.lat), ne.lat),
            min(max(ctr.lon, sw.lon), ne.lon),
        )
        if haversine_km(ctr, nearest) <= g.edge_km:
            out.add(c)
    return out
