"""Pose and curvature estimation for planar labels wrapped on cylinders."""

__version__ = "0.1.0"
