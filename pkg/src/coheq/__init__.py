"""Coherent optical link simulation and nonlinear post-equalization toolkit."""

__version__ = "0.1.0"
