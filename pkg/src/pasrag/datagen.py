"""Synthetic-city dataset generator.

Produces a deterministic benchmark: public anchors spread over a bounding
box with a minimum pairwise separation, POI chunks clustered around anchors
(plus a uniform background), and evaluation queries whose ground truth is
computed by the brute-force constraint oracle. The same (config, seed) pair
always yields byte-identical JSONL files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .corpus import (
    Anchor,
    Chunk,
    Dataset,
    SpatialQuery,
    ground_truth_for,
    recompute_anchor_tag,
)
from .geo import (
    MILE_M,
    DirectionBin,
    DistanceBins,
    GeoPoint,
    bearing_deg,
    default_distance_bins,
    destination,
    dir_bin,
    haversine_m,
)


class GenerationError(RuntimeError):
    """The generator configuration could not be satisfied."""


_NEIGHBORHOODS = (
    "Harborview", "Eastgate", "Mapleton", "Rivermouth", "Stonebridge", "Oakhurst",
    "Ferry Landing", "Gull Point", "Cedar Flats", "Brickyard", "Old Mill", "Lantern Hill",
    "Copperline", "Ashford", "Windmere", "Saltmarsh", "Kings Crossing", "Birchwood",
    "Fox Hollow", "Granite Row", "Meadowbank", "Ironside", "Clearwater", "Hollis Park",
    "Summit Ridge", "Bayside", "Elm Terrace", "Quarry Heights", "Willow Bend", "Noble Square",
    "Pike Slip", "Drydock", "Carver Point", "Linden Yard", "Morrow Hill", "Sable Court",
)

_ANCHOR_KINDS = (
    "Station", "Plaza", "Square", "Park", "Terminal", "Library",
    "Market", "Bridge", "Hall", "Center",
)

_NAME_ADJ = (
    "Golden", "Silver", "Blue", "Red", "Green", "Grand", "Little", "Old", "New",
    "Royal", "Urban", "Cozy", "Bright", "Quiet", "Lucky", "Happy", "Rustic",
    "Modern", "Classic", "Sunny", "Misty", "Velvet", "Copper", "Crystal", "Amber",
    "Ivory", "Scarlet", "Emerald", "Marble", "Wandering",
)

_NAME_NOUN = (
    "Harbor", "Garden", "Corner", "Anchor", "Lantern", "Compass", "Fountain",
    "Meadow", "Summit", "Canal", "Orchard", "Bridge", "Beacon", "Harvest",
    "Juniper", "Pebble", "Raven", "Sparrow", "Tulip", "Walnut", "Cobble",
    "Dune", "Ember", "Fable", "Gable", "Hearth", "Inlet", "Jetty", "Kettle", "Loom",
)

# category -> (name suffixes, content tag pool)
_CATEGORIES: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "restaurant": (
        ("Bistro", "Trattoria", "Grill", "Kitchen", "Diner", "Eatery"),
        ("italian", "mexican", "sushi", "vegan", "barbecue", "seafood", "brunch", "noodles"),
    ),
    "cafe": (
        ("Cafe", "Coffee House", "Espresso Bar", "Tea Room"),
        ("espresso", "pastries", "wifi", "outdoor seating", "cold brew", "matcha"),
    ),
    "hotel": (
        ("Hotel", "Inn", "Suites", "Lodge"),
        ("boutique", "budget", "luxury", "pet friendly", "rooftop bar", "free breakfast"),
    ),
    "hospital": (
        ("Hospital", "Medical Center", "Clinic"),
        ("emergency", "pediatrics", "cardiology", "urgent care", "maternity"),
    ),
    "park": (
        ("Park", "Green", "Commons", "Gardens"),
        ("playground", "dog run", "fountain", "picnic", "trails", "skate park"),
    ),
    "museum": (
        ("Museum", "Gallery", "Exhibit Hall"),
        ("modern art", "history", "science", "interactive", "sculpture"),
    ),
    "gym": (
        ("Gym", "Fitness Club", "Athletics"),
        ("crossfit", "yoga", "pool", "climbing", "24 hour", "personal training"),
    ),
    "pharmacy": (
        ("Pharmacy", "Drugstore", "Apothecary"),
        ("24 hour", "vaccinations", "compounding", "drive through"),
    ),
    "bookstore": (
        ("Books", "Bookshop", "Reading Room"),
        ("used books", "rare books", "children", "comics", "poetry readings"),
    ),
    "bar": (
        ("Bar", "Taproom", "Pub", "Lounge"),
        ("craft beer", "cocktails", "live music", "trivia night", "wine list"),
    ),
    "bakery": (
        ("Bakery", "Patisserie", "Bakehouse"),
        ("sourdough", "bagels", "cakes", "gluten free", "croissants"),
    ),
    "theater": (
        ("Theater", "Playhouse", "Cinema"),
        ("indie films", "broadway", "improv", "matinee", "imax"),
    ),
}

_QUERY_TEMPLATES = (
    "find a {category}{tags} within {miles} miles{direction}",
    "looking for a {category}{tags}{direction} within {miles} miles of me",
    "any {category}{tags} around {miles} miles{direction} from my location?",
    "where can I find a {category}{tags} no more than {miles} miles{direction}?",
    "recommend a {category}{tags} within about {miles} miles{direction}",
    "I need a {category}{tags} less than {miles} miles{direction}",
)

_DIRECTION_WORDS = {
    "N": "north", "NE": "northeast", "E": "east", "SE": "southeast",
    "S": "south", "SW": "southwest", "W": "west", "NW": "northwest",
}


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic-city generator."""

    lat_min: float = 40.55
    lat_max: float = 40.90
    lon_min: float = -74.05
    lon_max: float = -73.75
    n_anchors: int = 30
    n_chunks: int = 1010
    n_queries: int = 423
    k_tags: int = 2                    # anchors tagged per chunk (nearest first)
    anchor_min_sep_m: float = 1500.0
    chunk_cluster_frac: float = 0.85   # fraction of POIs clustered near an anchor
    chunk_cluster_sigma_m: float = 500.0
    dir_constraint_prob: float = 0.5
    query_radii_m: tuple[float, ...] = (0.5 * MILE_M, MILE_M, 2.0 * MILE_M, 4.0 * MILE_M)
    bins: DistanceBins = field(default_factory=default_distance_bins)

    def validate(self) -> None:
        if self.lat_min >= self.lat_max or self.lon_min >= self.lon_max:
            raise GenerationError(
                f"empty bounding box ({self.lat_min}, {self.lon_min}) to"
                f" ({self.lat_max}, {self.lon_max})"
            )
        if not (-90 <= self.lat_min and self.lat_max <= 90):
            raise GenerationError("bounding box latitude outside [-90, 90]")
        if self.k_tags < 2:
            raise GenerationError("each chunk must be tagged with at least 2 anchors")
        if self.n_anchors < self.k_tags:
            raise GenerationError(
                f"need at least {self.k_tags} anchors to tag chunks, got {self.n_anchors}"
            )
        if min(self.n_chunks, self.n_queries) < 1:
            raise GenerationError("counts must be positive")
        if not self.query_radii_m:
            raise GenerationError("query_radii_m must be non-empty")

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "GeneratorConfig":
        cfg = cls()
        known = {f for f in cfg.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise GenerationError(f"unknown generator config keys {sorted(unknown)}")
        fixed = dict(obj)
        if "query_radii_m" in fixed:
            fixed["query_radii_m"] = tuple(float(r) for r in fixed["query_radii_m"])
        if "bins" in fixed and isinstance(fixed["bins"], dict):
            fixed["bins"] = DistanceBins(
                edges=tuple(fixed["bins"]["edges_m"]), cap_m=fixed["bins"]["cap_m"]
            )
        return replace(cfg, **fixed)


def _round6(p: GeoPoint) -> GeoPoint:
    # stored coordinates are the canonical values everything is derived from
    return GeoPoint(round(p.lat, 6), round(p.lon, 6))


def _uniform_point(cfg: GeneratorConfig, rng: np.random.Generator) -> GeoPoint:
    return GeoPoint(
        rng.uniform(cfg.lat_min, cfg.lat_max),
        rng.uniform(cfg.lon_min, cfg.lon_max),
    )


def _in_bbox(p: GeoPoint, cfg: GeneratorConfig) -> bool:
    return cfg.lat_min <= p.lat <= cfg.lat_max and cfg.lon_min <= p.lon <= cfg.lon_max


def _generate_anchors(cfg: GeneratorConfig, rng: np.random.Generator) -> list[Anchor]:
    placed: list[GeoPoint] = []
    attempts = 0
    budget = 200 * cfg.n_anchors
    while len(placed) < cfg.n_anchors:
        if attempts >= budget:
            raise GenerationError(
                f"could not place {cfg.n_anchors} anchors with separation"
                f" >= {cfg.anchor_min_sep_m} m after {budget} attempts"
            )
        attempts += 1
        cand = _round6(_uniform_point(cfg, rng))
        if all(haversine_m(cand, p) >= cfg.anchor_min_sep_m for p in placed):
            placed.append(cand)
    anchors = []
    for i, loc in enumerate(placed):
        hood = _NEIGHBORHOODS[i % len(_NEIGHBORHOODS)]
        if i >= len(_NEIGHBORHOODS):
            hood = f"{hood} {i // len(_NEIGHBORHOODS) + 1}"
        kind = _ANCHOR_KINDS[int(rng.integers(len(_ANCHOR_KINDS)))]
        anchors.append(Anchor(id=f"a{i:03d}", name=f"{hood} {kind}", neighborhood=hood, loc=loc))
    return anchors


def _nearest_anchors(loc: GeoPoint, anchors: list[Anchor], k: int) -> list[Anchor]:
    ranked = sorted(anchors, key=lambda a: (haversine_m(loc, a.loc), a.id))
    return ranked[:k]


def _chunk_name(category: str, rng: np.random.Generator, used: set[str]) -> str:
    suffixes = _CATEGORIES[category][0]
    adj = _NAME_ADJ[int(rng.integers(len(_NAME_ADJ)))]
    noun = _NAME_NOUN[int(rng.integers(len(_NAME_NOUN)))]
    suffix = suffixes[int(rng.integers(len(suffixes)))]
    name = f"{adj} {noun} {suffix}"
    n = 2
    while name in used:
        name = f"{adj} {noun} {suffix} No. {n}"
        n += 1
    used.add(name)
    return name


def _generate_chunks(
    cfg: GeneratorConfig, anchors: list[Anchor], rng: np.random.Generator
) -> list[Chunk]:
    categories = tuple(_CATEGORIES)
    used_names: set[str] = set()
    chunks = []
    for i in range(cfg.n_chunks):
        loc = None
        if rng.random() < cfg.chunk_cluster_frac:
            home = anchors[int(rng.integers(len(anchors)))]
            for _ in range(20):
                cand = destination(
                    home.loc,
                    rng.uniform(0.0, 360.0),
                    float(rng.rayleigh(cfg.chunk_cluster_sigma_m)),
                )
                if _in_bbox(cand, cfg):
                    loc = cand
                    break
        if loc is None:
            loc = _uniform_point(cfg, rng)
        loc = _round6(loc)

        category = categories[int(rng.integers(len(categories)))]
        tag_pool = _CATEGORIES[category][1]
        n_tags = int(rng.integers(2, 5))
        tag_idx = rng.permutation(len(tag_pool))[:n_tags]
        tags = tuple(tag_pool[j] for j in sorted(tag_idx))

        name = _chunk_name(category, rng, used_names)
        nearest = _nearest_anchors(loc, anchors, cfg.k_tags)
        description = (
            f"{name} is a {category} in {nearest[0].neighborhood}"
            f" known for {', '.join(tags)}."
        )
        anchor_tags = tuple(recompute_anchor_tag(a, loc, cfg.bins) for a in nearest)
        chunks.append(Chunk(
            doc_id=f"c{i:04d}",
            name=name,
            category=category,
            tags=tags,
            description=description,
            loc=loc,
            anchor_tags=anchor_tags,
        ))
    return chunks


def _render_query(
    template_idx: int,
    category: str,
    must_tags: tuple[str, ...],
    radius_m: float,
    direction: DirectionBin | None,
) -> str:
    tags = ""
    if len(must_tags) == 1:
        tags = f" with {must_tags[0]}"
    elif len(must_tags) >= 2:
        tags = f" with {' and '.join(must_tags)}"
    dir_part = "" if direction is None else f" to the {_DIRECTION_WORDS[direction.label]}"
    miles = f"{radius_m / MILE_M:g}"
    return _QUERY_TEMPLATES[template_idx % len(_QUERY_TEMPLATES)].format(
        category=category, tags=tags, miles=miles, direction=dir_part
    )


def _generate_queries(
    cfg: GeneratorConfig, chunks: list[Chunk], rng: np.random.Generator
) -> list[SpatialQuery]:
    queries = []
    seen_raw: set[str] = set()
    for i in range(cfg.n_queries):
        target = chunks[int(rng.integers(len(chunks)))]
        radius_m = float(cfg.query_radii_m[int(rng.integers(len(cfg.query_radii_m)))])
        # user stands near the target so the target always satisfies the query
        offset = rng.uniform(0.05, 0.90) * radius_m
        true_loc = _round6(destination(target.loc, rng.uniform(0.0, 360.0), float(offset)))

        direction = None
        if rng.random() < cfg.dir_constraint_prob:
            direction = dir_bin(bearing_deg(true_loc, target.loc))

        n_must = int(rng.integers(0, 3))
        tag_idx = rng.permutation(len(target.tags))[:n_must]
        must_tags = tuple(target.tags[j] for j in sorted(tag_idx))

        template_idx = int(rng.integers(len(_QUERY_TEMPLATES)))
        raw = _render_query(template_idx, target.category, must_tags, radius_m, direction)
        bump = 0
        while raw in seen_raw and bump < len(_QUERY_TEMPLATES):
            bump += 1
            raw = _render_query(template_idx + bump, target.category, must_tags,
                                radius_m, direction)
        if raw in seen_raw:
            raw = f"{raw} (variant {i})"
        seen_raw.add(raw)

        gt = ground_truth_for(true_loc, radius_m, direction,
                              target.category, must_tags, chunks)
        queries.append(SpatialQuery(
            query_id=f"q{i:04d}",
            raw_query=raw,
            entity_category=target.category,
            must_have_tags=must_tags,
            true_loc=true_loc,
            radius_m=radius_m,
            direction_constraint=direction,
            ground_truth=tuple(gt),
        ))
    return queries


def generate_dataset(cfg: GeneratorConfig, seed: int) -> Dataset:
    """Generate a full synthetic dataset, deterministic in (cfg, seed)."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    anchors = _generate_anchors(cfg, rng)
    chunks = _generate_chunks(cfg, anchors, rng)
    queries = _generate_queries(cfg, chunks, rng)
    return Dataset(anchors=anchors, chunks=chunks, queries=queries)
