"""Neural unsigned distance fields for open surfaces: adaptive sampling,
per-shape field fitting, point extraction, meshing and evaluation."""

__version__ = "0.1.0"
