"""Graph reaction-diffusion-advection models of thermally driven dispersal."""

__version__ = "0.1.0"
