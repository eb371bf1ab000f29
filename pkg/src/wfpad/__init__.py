"""Padding defenses against website fingerprinting: Tamaraw, FRONT, Random-WT.

The package simulates the defenses over recorded traces, runs them as a
client/bridge tunnel, and measures data and time overhead for both.
"""
__version__ = "0.1.0"
