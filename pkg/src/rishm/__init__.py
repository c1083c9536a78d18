"""Surrogate-assisted hybrid optimisation of directional sensor deployments over terrain."""

__version__ = "0.1.0"
