"""Multi-view panoramic stereo: view selection, PatchMatch depth,
consistency cleaning, and point fusion."""

from .cleanup import SPECKLE_MIN_PIXELS, FusedCloud, clean_depth, fuse
from .patchmatch import match_panoramas, patchmatch_depth
from .selection import select_keyframes, select_views, view_score
from .types import DepthMap, MatchConfig

__all__ = [
    "MatchConfig",
    "DepthMap",
    "select_keyframes",
    "select_views",
    "view_score",
    "match_panoramas",
    "patchmatch_depth",
    "clean_depth",
    "fuse",
    "FusedCloud",
    "SPECKLE_MIN_PIXELS",
]
