"""simnoc: cycle-level simulator for a burst-based AXI-style 2D-mesh NoC."""

__version__ = "0.1.0"

from .topology import NocConfig  # noqa: F401
