"""spikenav: multimodal spiking actor workbench for dynamic obstacle avoidance.

A self-contained library plus CLI that trains a spiking policy network on
laser scans and synthetic event-camera data inside a built-in 2D simulator:
LIF dynamics with surrogate-gradient BPTT, a hybrid spiking VAE for event
frames, Gaussian population coding, learnable-threshold fusion, and DDPG.
"""

__version__ = "0.1.0"


class SpikenavError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(SpikenavError):
    """Invalid or unknown configuration (CLI exit code 2)."""
