"""Deformable image registration workbench comparing B-spline and dual-mesh models
under the same multi-objective evolutionary optimizer."""

__version__ = "0.1.0"
