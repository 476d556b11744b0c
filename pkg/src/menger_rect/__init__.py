"""Menger curvature, multiscale beta numbers and Lipschitz graph extraction
for weighted point clouds."""

from .geometry import (
    Ball,
    Line,
    angle_between_lines,
    menger_curvature,
    menger_curvature_sq_complex,
    point_line_distance,
    project_onto_line,
)
from .measure import DiscreteMeasure, NotFound
from .params import Parameters, ScaleGrid

__all__ = [
    "Ball",
    "DiscreteMeasure",
    "Line",
    "NotFound",
    "Parameters",
    "ScaleGrid",
    "angle_between_lines",
    "menger_curvature",
    "menger_curvature_sq_complex",
    "point_line_distance",
    "project_onto_line",
]

__version__ = "0.1.0"
