"""Rotation theory diagnostics for homeomorphisms of the two-torus."""
from .core import LiftMap, Raster, RegionMask, translation
from .dsl import MapDef, builtin_family, load_map, make_map, parse_map_text
from .rotation import classify_rotation_vector, rotation_set_estimate
from .lamination import build_lamination, build_torus_semiconjugacy
from .classify import classify

__version__ = "0.1.0"

__all__ = [
    "LiftMap",
    "MapDef",
    "Raster",
    "RegionMask",
    "build_lamination",
    "build_torus_semiconjugacy",
    "builtin_family",
    "classify",
    "classify_rotation_vector",
    "load_map",
    "make_map",
    "parse_map_text",
    "rotation_set_estimate",
    "translation",
]
