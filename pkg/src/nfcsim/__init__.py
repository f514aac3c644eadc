"""Near-field multiuser channel models, capacity limits and beamforming."""

__version__ = "0.1.0"
