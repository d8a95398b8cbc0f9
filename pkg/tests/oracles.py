"""Independent oracle implementations used by the test suite.

Everything here is deliberately written with different formulations than the
library (asin haversine instead of atan2, explicit loops and enumerations
instead of closed forms) so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

EARTH_R = 6371000.0


def haversine_oracle(lat1, lon1, lat2, lon2):
    """asin-form haversine distance in meters (scalar or numpy arrays)."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = np.radians(np.asarray(lat2) - np.asarray(lat1))
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_R * np.arcsin(np.sqrt(a))


def bearing_oracle(lat1, lon1, lat2, lon2):
    """Initial bearing in [0, 360), independent formulation."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    y = np.sin(dl) * np.cos(p2)
    x = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dl)
    return np.degrees(np.arctan2(y, x)) % 360.0


def destination_oracle(lat, lon, bearing_degs, dist_m):
    """Spherical direct problem; returns (lat, lon) arrays in degrees."""
    delta = np.asarray(dist_m, dtype=float) / EARTH_R
    theta = np.radians(np.asarray(bearing_degs, dtype=float))
    p1 = math.radians(lat)
    l1 = math.radians(lon)
    p2 = np.arcsin(np.sin(p1) * np.cos(delta) + np.cos(p1) * np.sin(delta) * np.cos(theta))
    l2 = l1 + np.arctan2(
        np.sin(theta) * np.sin(delta) * np.cos(p1),
        np.cos(delta) - np.sin(p1) * np.sin(p2),
    )
    return np.degrees(p2), (np.degrees(l2) + 180.0) % 360.0 - 180.0


def sector_interval(dir_index: int) -> tuple[float, float]:
    lo = 45.0 * dir_index - 22.5
    return lo, lo + 45.0


def bearing_in_sector(bearing, dir_index: int):
    """Half-open sector membership, handling the wrap at north."""
    lo, hi = sector_interval(dir_index)
    b = np.asarray(bearing, dtype=float) % 360.0
    if lo < 0:
        return (b >= lo + 360.0) | (b < hi)
    return (b >= lo) & (b < hi)


def region_grid(anchor_lat, anchor_lon, dir_index, r_lo, r_hi, nr=1000, nt=1000):
    """Polar fine grid over an annular sector: cell centers and area weights."""
    lo_deg, hi_deg = sector_interval(dir_index)
    r_edges = np.linspace(r_lo, r_hi, nr + 1)
    t_edges = np.linspace(lo_deg, hi_deg, nt + 1)
    r_mid = 0.5 * (r_edges[:-1] + r_edges[1:])
    t_mid = 0.5 * (t_edges[:-1] + t_edges[1:])
    rr, tt = np.meshgrid(r_mid, t_mid, indexing="ij")
    weights = rr * (r_edges[1] - r_edges[0]) * math.radians(t_edges[1] - t_edges[0])
    lat, lon = destination_oracle(anchor_lat, anchor_lon, tt % 360.0, rr)
    return lat.ravel(), lon.ravel(), weights.ravel()


def spatial_probability_grid(
    anchor_lat, anchor_lon, dir_index, r_lo, r_hi,
    t_lat, t_lon, radius_m, query_dir=None, nr=1000, nt=1000,
):
    """Exact P(d(x,t) <= R and dir(x,t) in B_q) for x area-uniform in the region."""
    lat, lon, w = region_grid(anchor_lat, anchor_lon, dir_index, r_lo, r_hi, nr, nt)
    hit = haversine_oracle(lat, lon, t_lat, t_lon) <= radius_m
    if query_dir is not None:
        hit &= bearing_in_sector(bearing_oracle(lat, lon, t_lat, t_lon), query_dir)
    return float(np.sum(w * hit) / np.sum(w))


def region_centroid_grid(anchor_lat, anchor_lon, dir_index, r_lo, r_hi, nr=1500, nt=1500):
    """Area centroid of the region via the same fine grid (tangent-plane mean)."""
    lat, lon, w = region_grid(anchor_lat, anchor_lon, dir_index, r_lo, r_hi, nr, nt)
    east = np.radians(lon - anchor_lon) * EARTH_R * math.cos(math.radians(anchor_lat))
    north = np.radians(lat - anchor_lat) * EARTH_R
    tot = np.sum(w)
    e, n = float(np.sum(w * east) / tot), float(np.sum(w * north) / tot)
    out_lat = anchor_lat + math.degrees(n / EARTH_R)
    out_lon = anchor_lon + math.degrees(e / (EARTH_R * math.cos(math.radians(anchor_lat))))
    return out_lat, out_lon


def recall_oracle(retrieved, ground_truth, k) -> float:
    """Loop-and-count recall, no set algebra."""
    hits = 0
    seen = []
    for doc in list(retrieved)[:k]:
        if doc in ground_truth and doc not in seen:
            hits += 1
            seen.append(doc)
    return hits / len(set(ground_truth))


@lru_cache(maxsize=None)
def _ideal_dcg_bruteforce(n: int, n_relevant: int, k: int) -> float:
    """Max DCG over every arrangement of n_relevant ones among n ranks."""
    best = 0.0
    for positions in itertools.combinations(range(n), n_relevant):
        dcg = sum(1.0 / math.log2(p + 2) for p in positions if p < k)
        best = max(best, dcg)
    return best


def ndcg_oracle(retrieved, ground_truth, k) -> float:
    """DCG by explicit loop; ideal DCG by brute-force enumeration."""
    gt = set(ground_truth)
    dcg = 0.0
    for i, doc in enumerate(list(retrieved)[:k]):
        if doc in gt:
            dcg += 1.0 / math.log2(i + 2)
    n = max(len(retrieved), len(gt))
    ideal = _ideal_dcg_bruteforce(n, min(len(gt), n), k)
    return dcg / ideal if ideal > 0 else 0.0


def ground_truth_oracle(chunks, true_lat, true_lon, radius_m, dir_index,
                        category, must_tags):
    """Constraint-satisfaction scan written against raw floats, loop style."""
    out = []
    for c in chunks:
        if c.category != category:
            continue
        if any(t not in c.tags for t in must_tags):
            continue
        d = float(haversine_oracle(true_lat, true_lon, c.loc.lat, c.loc.lon))
        if d > radius_m:
            continue
        if dir_index is not None:
            if d == 0.0:
                b = 0.0
            else:
                b = float(bearing_oracle(true_lat, true_lon, c.loc.lat, c.loc.lon))
            if not bool(bearing_in_sector(b, dir_index)):
                continue
        out.append(c.doc_id)
    return sorted(out)
