"""Carbon-aware DAG job placement on edge-fog-cloud infrastructure."""

__version__ = "0.1.0"
