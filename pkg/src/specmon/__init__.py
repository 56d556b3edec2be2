"""Simulator for a ring-resonator + interlaced-AWG optical spectrum monitor."""

__version__ = "0.1.0"
