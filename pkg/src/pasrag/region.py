"""The uncertainty region a released token pins the user to.

A token constrains the user to an annular sector (compass wedge intersected
with a distance ring) around the sampled anchor. Latent user locations are
drawn area-uniformly from that set; their centroid is the adversary's
location estimate, and the distance from the true location to that estimate
is the localization-error security metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Anchor
from .geo import (
    EARTH_RADIUS_M,
    SECTOR_HALF_WIDTH_DEG,
    DirectionBin,
    DistanceBins,
    GeoPoint,
    bearing_deg,
    bearing_deg_arr,
    destination_arr,
    dir_bin,
    dir_index_arr,
    haversine_m,
    haversine_m_arr,
)
from .mechanism import PasToken


@dataclass(frozen=True)
class UncertaintyRegion:
    """Annular sector around ``anchor_loc``: bearing wedge ``dir`` x ring [r_lo, r_hi)."""

    anchor_loc: GeoPoint
    dir: DirectionBin
    r_lo: float
    r_hi: float

    def __post_init__(self) -> None:
        if not 0 <= self.r_lo < self.r_hi:
            raise ValueError(f"invalid ring [{self.r_lo}, {self.r_hi})")


@dataclass(frozen=True, eq=False)
class LatentSamples:
    """Area-uniform draws from a region, with the region anchor as tangent origin."""

    origin: GeoPoint
    lats: np.ndarray
    lons: np.ndarray
    redraws: int = 0

    @property
    def k(self) -> int:
        return int(self.lats.shape[0])

    @property
    def points(self) -> tuple[GeoPoint, ...]:
        return tuple(GeoPoint(float(a), float(o)) for a, o in zip(self.lats, self.lons))


def region_from_token(
    token: PasToken, anchors: Sequence[Anchor], bins: DistanceBins
) -> UncertaintyRegion:
    """Build the region a token describes, resolving the anchor id."""
    anchor = next((a for a in anchors if a.id == token.anchor_id), None)
    if anchor is None:
        raise ValueError(f"token references unknown anchor {token.anchor_id!r}")
    r_lo, r_hi = bins.ring(token.dist_bin)
    return UncertaintyRegion(anchor_loc=anchor.loc, dir=token.dir, r_lo=r_lo, r_hi=r_hi)


def contains(region: UncertaintyRegion, x: GeoPoint) -> bool:
    """Membership test: bearing sector and half-open distance ring both match.

    A point coincident with the anchor has no bearing; it belongs to the
    region only when the ring starts at distance zero.
    """
    d = haversine_m(region.anchor_loc, x)
    if d == 0.0:
        return region.r_lo == 0.0
    if not region.r_lo <= d < region.r_hi:
        return False
    return dir_bin(bearing_deg(region.anchor_loc, x)) == region.dir


_MAX_REDRAW_ROUNDS = 60


def sample_region(
    region: UncertaintyRegion, k: int, rng: np.random.Generator
) -> LatentSamples:
    """Draw ``k`` i.i.d. area-uniform points from the region.

    Bearings are uniform over the sector; radii use the inverse-CDF
    sqrt(r_lo^2 + U * (r_hi^2 - r_lo^2)) so density is uniform per unit
    area. Floating-point boundary draws that fail the membership test after
    re-binning are re-drawn, never clamped; the count is recorded.
    """
    if k < 1:
        raise ValueError(f"sample count must be >= 1, got {k}")
    lo_deg = region.dir.center_deg - SECTOR_HALF_WIDTH_DEG
    lats = np.empty(k)
    lons = np.empty(k)
    pending = np.arange(k)
    redraws = 0
    rounds = 0
    while pending.size:
        if rounds >= _MAX_REDRAW_ROUNDS:
            raise RuntimeError(
                f"region sampling failed to converge; {pending.size} of {k} draws"
                " kept landing outside the region"
            )
        rounds += 1
        m = pending.size
        bearings = (lo_deg + 45.0 * rng.random(m)) % 360.0
        radii = np.sqrt(region.r_lo**2 + rng.random(m) * (region.r_hi**2 - region.r_lo**2))
        plat, plon = destination_arr(region.anchor_loc, bearings, radii)
        d = haversine_m_arr(region.anchor_loc.lat, region.anchor_loc.lon, plat, plon)
        b = bearing_deg_arr(region.anchor_loc.lat, region.anchor_loc.lon, plat, plon)
        ok = (d >= region.r_lo) & (d < region.r_hi) & (dir_index_arr(b) == int(region.dir))
        ok &= d > 0.0
        lats[pending[ok]] = plat[ok]
        lons[pending[ok]] = plon[ok]
        pending = pending[~ok]
        redraws += int(np.count_nonzero(~ok))
    return LatentSamples(origin=region.anchor_loc, lats=lats, lons=lons, redraws=redraws)


def _to_tangent(origin: GeoPoint, lats: np.ndarray, lons: np.ndarray):
    """Project to east/north meters in the tangent plane at ``origin``."""
    east = np.radians(lons - origin.lon) * EARTH_RADIUS_M * math.cos(math.radians(origin.lat))
    north = np.radians(lats - origin.lat) * EARTH_RADIUS_M
    return east, north


def _from_tangent(origin: GeoPoint, east: float, north: float) -> GeoPoint:
    lat = origin.lat + math.degrees(north / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat, lon)


def centroid(samples: LatentSamples) -> GeoPoint:
    """Mean of the samples in the tangent plane at the region anchor.

    Averaging in a local metric plane avoids the longitude-scaling bias of
    naive lat/lon means; at sub-10 km region scale the projection error is
    negligible.
    """
    if samples.k < 1:
        raise ValueError("cannot take the centroid of zero samples")
    east, north = _to_tangent(samples.origin, samples.lats, samples.lons)
    return _from_tangent(samples.origin, float(east.mean()), float(north.mean()))


def ale(
    true_loc: GeoPoint,
    token: PasToken,
    anchors: Sequence[Anchor],
    bins: DistanceBins,
    k: int,
    rng: np.random.Generator,
) -> float:
    """Adversarial localization error for one released token, in meters.

    The adversary sees only the token, models the user as uniform over the
    region, and estimates the location as the sampled centroid; the error is
    the great-circle distance from the true location to that estimate.
    """
    region = region_from_token(token, anchors, bins)
    est = centroid(sample_region(region, k, rng))
    return haversine_m(true_loc, est)
