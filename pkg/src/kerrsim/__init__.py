"""Simulator for a flux-tunable multimode Kerr resonator used as a bifurcation amplifier."""

__version__ = "0.1.0"
