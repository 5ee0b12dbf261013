"""Dual lock-in contrast estimation for nanodiamond ODMR in flowing droplets.

Synthesize photoluminescence traces, estimate contrast with windowed Fourier
amplitudes or a conventional lock-in, and analyze long-run stability,
titrations and particle kinetics.
"""
__version__ = "0.1.0"
