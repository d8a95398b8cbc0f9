"""Great-circle geodesy and the direction/distance partitions.

All distances are meters on a sphere of radius 6,371,000 m; all bearings are
degrees clockwise from true north in [0, 360). The compass rose is split into
8 half-open sectors of 45 degrees with N centered on 0; distances are split
into half-open rings with a finite outer cap.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
MILE_M = 1609.344

SECTOR_WIDTH_DEG = 45.0
SECTOR_HALF_WIDTH_DEG = 22.5


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in decimal degrees.

    Latitude must lie in [-90, 90]; longitude is normalized into [-180, 180).
    """

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        object.__setattr__(self, "lon", ((self.lon + 180.0) % 360.0) - 180.0)


class DirectionBin(enum.IntEnum):
    """One of the 8 compass sectors; bin i covers [45i - 22.5, 45i + 22.5) deg."""

    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    @property
    def index(self) -> int:
        return self.value

    @property
    def label(self) -> str:
        return self.name

    @property
    def center_deg(self) -> float:
        return SECTOR_WIDTH_DEG * self.value

    def sector(self) -> tuple[float, float]:
        """Half-open bearing interval [lo, hi) covered by this sector.

        The interval is returned un-wrapped (lo may be negative for N), so
        ``lo <= b < hi`` holds after shifting b by -360 when needed.
        """
        lo = self.center_deg - SECTOR_HALF_WIDTH_DEG
        return lo, lo + SECTOR_WIDTH_DEG


DIRECTION_LABELS = tuple(d.name for d in DirectionBin)


@dataclass(frozen=True)
class DistanceBins:
    """Concentric half-open rings: bin j covers [edges[j], edges[j+1}).

    The last ring is open-ended in spirit but capped at ``cap_m`` so that
    sampling and pruning have finite support.
    """

    edges: tuple[float, ...]
    cap_m: float

    def __post_init__(self) -> None:
        if len(self.edges) < 1 or self.edges[0] != 0.0:
            raise ValueError("distance edges must start at 0")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError(f"distance edges not strictly increasing: {self.edges}")
        if self.cap_m <= self.edges[-1]:
            raise ValueError(f"cap {self.cap_m} must exceed last edge {self.edges[-1]}")
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        object.__setattr__(self, "cap_m", float(self.cap_m))

    @property
    def n_bins(self) -> int:
        return len(self.edges)

    def ring(self, index: int) -> tuple[float, float]:
        """Return the (r_lo, r_hi) interval of ring ``index`` in meters."""
        if not 0 <= index < self.n_bins:
            raise ValueError(f"ring index {index} outside [0, {self.n_bins})")
        r_hi = self.edges[index + 1] if index + 1 < self.n_bins else self.cap_m
        return self.edges[index], r_hi


def default_distance_bins() -> DistanceBins:
    """Mile-based rings 0-0.5mi, 0.5-1mi, 1-2mi and 2mi+ capped at 4mi."""
    return DistanceBins(
        edges=(0.0, 0.5 * MILE_M, MILE_M, 2.0 * MILE_M),
        cap_m=4.0 * MILE_M,
    )


class DistBinResult(NamedTuple):
    index: int
    out_of_cap: bool


def haversine_m(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance between two points in meters.

    Args:
        p: First point.
        q: Second point.

    Returns:
        Distance in meters (symmetric, zero iff the points coincide).
    """
    phi1 = math.radians(p.lat)
    phi2 = math.radians(q.lat)
    d_phi = math.radians(q.lat - p.lat)
    d_lam = math.radians(q.lon - p.lon)
    a = math.sin(d_phi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lam / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))


def bearing_deg(p: GeoPoint, q: GeoPoint) -> float:
    """Initial great-circle bearing from ``p`` to ``q`` in degrees [0, 360).

    0 is due north, increasing clockwise. Coincident points have no defined
    bearing; the degenerate value 0.0 is returned and callers that bin
    bearings must detect coincidence themselves (see ``haversine_m`` == 0).
    """
    if p.lat == q.lat and p.lon == q.lon:
        return 0.0
    phi1 = math.radians(p.lat)
    phi2 = math.radians(q.lat)
    d_lam = math.radians(q.lon - p.lon)
    y = math.sin(d_lam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(d_lam)
    return math.degrees(math.atan2(y, x)) % 360.0


def destination(origin: GeoPoint, bearing: float, dist_m: float) -> GeoPoint:
    """Point reached from ``origin`` along ``bearing`` after ``dist_m`` meters."""
    if dist_m < 0:
        raise ValueError(f"distance must be non-negative, got {dist_m}")
    if dist_m == 0:
        return origin
    delta = dist_m / EARTH_RADIUS_M
    theta = math.radians(bearing)
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))


def dir_bin(bearing: float) -> DirectionBin:
    """Map a bearing in [0, 360) to its compass sector (half-open rule)."""
    shifted = (bearing + SECTOR_HALF_WIDTH_DEG) % 360.0
    return DirectionBin(int(shifted // SECTOR_WIDTH_DEG) % 8)


def dist_bin(dist_m: float, bins: DistanceBins) -> DistBinResult:
    """Map a distance to its ring index.

    Distances at or beyond the cap land in the last ring with the
    ``out_of_cap`` flag set.
    """
    if dist_m < 0:
        raise ValueError(f"distance must be non-negative, got {dist_m}")
    if dist_m >= bins.cap_m:
        return DistBinResult(bins.n_bins - 1, True)
    # edges are sorted; the containing half-open interval is one left of bisect
    index = int(np.searchsorted(bins.edges, dist_m, side="right")) - 1
    return DistBinResult(index, False)


# Array variants (degrees in, numpy broadcasting) used on hot paths.

def haversine_m_arr(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized ``haversine_m`` over degree arrays (broadcasting)."""
    phi1 = np.radians(np.asarray(lat1, dtype=float))
    phi2 = np.radians(np.asarray(lat2, dtype=float))
    d_phi = np.radians(np.asarray(lat2, dtype=float) - np.asarray(lat1, dtype=float))
    d_lam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    a = np.sin(d_phi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(d_lam / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))


def bearing_deg_arr(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized ``bearing_deg``; coincident pairs yield the degenerate 0.0."""
    phi1 = np.radians(np.asarray(lat1, dtype=float))
    phi2 = np.radians(np.asarray(lat2, dtype=float))
    d_lam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    y = np.sin(d_lam) * np.cos(phi2)
    x = np.cos(phi1) * np.sin(phi2) - np.sin(phi1) * np.cos(phi2) * np.cos(d_lam)
    out = np.degrees(np.arctan2(y, x)) % 360.0
    coincident = (np.asarray(lat1) == np.asarray(lat2)) & (np.asarray(lon1) == np.asarray(lon2))
    return np.where(coincident, 0.0, out)


def destination_arr(origin: GeoPoint, bearings, dists_m) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``destination`` from a single origin; returns (lats, lons)."""
    delta = np.asarray(dists_m, dtype=float) / EARTH_RADIUS_M
    theta = np.radians(np.asarray(bearings, dtype=float))
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    phi2 = np.arcsin(
        math.sin(phi1) * np.cos(delta) + math.cos(phi1) * np.sin(delta) * np.cos(theta)
    )
    lam2 = lam1 + np.arctan2(
        np.sin(theta) * np.sin(delta) * math.cos(phi1),
        np.cos(delta) - math.sin(phi1) * np.sin(phi2),
    )
    lons = (np.degrees(lam2) + 180.0) % 360.0 - 180.0
    return np.degrees(phi2), lons


def dir_index_arr(bearings) -> np.ndarray:
    """Vectorized ``dir_bin`` returning integer sector indices."""
    shifted = (np.asarray(bearings, dtype=float) + SECTOR_HALF_WIDTH_DEG) % 360.0
    return (shifted // SECTOR_WIDTH_DEG).astype(int) % 8
