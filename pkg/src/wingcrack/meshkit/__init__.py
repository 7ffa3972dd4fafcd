"""Mixed-dimensional conforming meshes for fractured domains."""
from .geometry import FractureNetwork, Rectangle, SIDES
from .grid import MixedDimGrid, Triangulation, build_grid, split_along_fractures, triangulate_conforming
from .overlap import overlap_areas
from .remesh import RemeshRegion, RemeshResult, extend_fracture, rosette_remesh

__all__ = [
    "FractureNetwork",
    "MixedDimGrid",
    "Rectangle",
    "RemeshRegion",
    "RemeshResult",
    "SIDES",
    "Triangulation",
    "build_grid",
    "extend_fracture",
    "overlap_areas",
    "rosette_remesh",
    "split_along_fractures",
    "triangulate_conforming",
]
