"""Desk-scale simulator of shaping single photons and photon pairs through a
multimode fiber with a bank of bend actuators."""

__version__ = "0.1.0"
