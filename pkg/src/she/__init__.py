"""Secure hybrid beamforming for dual-function radar-communication transmitters."""

__version__ = "0.1.0"
