"""Maritime edge-computing offloading simulator and learning toolkit."""

from maredge.config import SimConfig, load_config

__all__ = ["SimConfig", "load_config"]
