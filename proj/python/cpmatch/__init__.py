"""Consistent point matching for 3D medical volumes."""

import json as _json

from . import _core
from ._core import (
    SearchError,
    Volume,
    VolumeError,
    combined_similarity,
    cosine,
    descriptor_length,
    froc,
    load_volume,
    nmi,
    phantom_pair,
    sample_descriptor,
    save_volume,
)


def _config_text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def point_matching(source, query, target, config=None, trace=False):
    return _json.loads(_core.point_matching(source, query, target, _config_text(config), trace))


def consistent_point_matching(source, query, target, variant=13, config=None, trace=False):
    return _json.loads(
        _core.consistent_point_matching(source, query, target, variant, _config_text(config), trace)
    )


__all__ = [
    "SearchError",
    "Volume",
    "VolumeError",
    "combined_similarity",
    "consistent_point_matching",
    "cosine",
    "descriptor_length",
    "froc",
    "load_volume",
    "nmi",
    "phantom_pair",
    "point_matching",
    "sample_descriptor",
    "save_volume",
]
