"""Surrogate-assisted (co)evolution of voxel vertical-axis wind turbines."""

__version__ = "0.1.0"
