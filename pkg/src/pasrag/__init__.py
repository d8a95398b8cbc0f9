"""Anchor-based location privacy for spatial retrieval-augmented generation."""

from .geo import (
    DirectionBin,
    DistanceBins,
    GeoPoint,
    bearing_deg,
    default_distance_bins,
    destination,
    dir_bin,
    dist_bin,
    haversine_m,
)
from .corpus import Anchor, AnchorTag, Chunk, Dataset, SpatialQuery, load_dataset, save_dataset
from .datagen import GeneratorConfig, generate_dataset
from .mechanism import (
    AnchorDistribution,
    PasToken,
    PrivacyParams,
    anchor_distribution,
    audit_geo_dp,
    make_token,
    sample_anchor,
)
from .region import LatentSamples, UncertaintyRegion, ale, centroid, contains, sample_region
from .semantics import Embedding, LexicalEmbedder, cosine, load_precomputed
from .retrieval import (
    RankedResult,
    RetrievalConfig,
    prune_candidates,
    retrieve_baseline,
    retrieve_pas,
    spatial_score_mc,
    spatial_score_true,
)
from .evaluation import (
    EvalReport,
    citation_correctness,
    f1_overlap,
    ndcg_at_k,
    recall_at_k,
    run_eval,
    sweep,
)
from .generation import GenerationRecord, HttpChatClient, build_prompt, parse_response, stub_client

__version__ = "0.1.0"
