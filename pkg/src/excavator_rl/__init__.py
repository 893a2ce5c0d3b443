"""Reinforcement-learning workbench for 3D excavator bucket control."""

__version__ = "0.1.0"
