from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pasrag.corpus import Anchor, Chunk, Dataset, SpatialQuery
from pasrag.datagen import GeneratorConfig, generate_dataset
from pasrag.geo import DirectionBin, GeoPoint, default_distance_bins, destination


@pytest.fixture(scope="session")
def bins():
    return default_distance_bins()


@pytest.fixture(scope="session")
def small_dataset():
    """A quick city: 12 anchors, 240 chunks, 60 queries."""
    cfg = GeneratorConfig(n_anchors=12, n_chunks=240, n_queries=60)
    return generate_dataset(cfg, seed=7)


def make_chunk(doc_id, lat, lon, category="cafe", tags=("espresso",), name=None,
               anchors=None, bins=None):
    """Hand-placed chunk with minimally valid anchor tags."""
    from pasrag.corpus import recompute_anchor_tag

    loc = GeoPoint(lat, lon)
    name = name or f"Chunk {doc_id}"
    if anchors is None:
        anchors = [
            Anchor("ax0", "Anchor X0", "X", GeoPoint(lat + 0.05, lon)),
            Anchor("ax1", "Anchor X1", "X", GeoPoint(lat - 0.05, lon)),
        ]
    b = bins or default_distance_bins()
    anchor_tags = tuple(recompute_anchor_tag(a, loc, b) for a in anchors[:2])
    return Chunk(
        doc_id=doc_id, name=name, category=category, tags=tuple(tags),
        description=f"{name} is a {category}.", loc=loc, anchor_tags=anchor_tags,
    )


@pytest.fixture()
def micro_dataset(bins):
    """Three-chunk corpus around one anchor, one simple query."""
    anchor = Anchor("a000", "Center Plaza", "Center", GeoPoint(40.70, -74.00))
    anchor2 = Anchor("a001", "East Plaza", "East", GeoPoint(40.70, -73.95))
    anchors = [anchor, anchor2]
    north = make_chunk("c0000", *_offset(anchor.loc, 0.0, 600), category="cafe",
                       tags=("espresso", "wifi"), name="North Cafe", anchors=anchors,
                       bins=bins)
    east = make_chunk("c0001", *_offset(anchor.loc, 90.0, 600), category="cafe",
                      tags=("espresso",), name="East Cafe", anchors=anchors, bins=bins)
    far = make_chunk("c0002", *_offset(anchor.loc, 180.0, 5000), category="cafe",
                     tags=("espresso",), name="Far Cafe", anchors=anchors, bins=bins)
    query = SpatialQuery(
        query_id="q0000",
        raw_query="find a cafe with espresso within 0.5 miles to the north",
        entity_category="cafe",
        must_have_tags=("espresso",),
        true_loc=GeoPoint(40.6955, -74.00),   # 500 m south of the anchor
        radius_m=1200.0,
        direction_constraint=DirectionBin.N,
        ground_truth=("c0000",),
        extras={},
    )
    from pasrag.corpus import ground_truth_for

    gt = ground_truth_for(query.true_loc, query.radius_m, query.direction_constraint,
                          query.entity_category, query.must_have_tags,
                          [north, east, far])
    query.ground_truth = tuple(gt)
    return Dataset(anchors=anchors, chunks=[north, east, far], queries=[query])


def _offset(origin, bearing, dist):
    p = destination(origin, bearing, dist)
    return p.lat, p.lon
