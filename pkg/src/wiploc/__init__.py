"""Collision-tolerant room-level and cell-level localization with wirelessly
powered anchors: codec, channel models, energy accounting, node protocols and
a deterministic discrete-event simulator."""

from . import codec, energy, phy, protocol

__version__ = "0.1.0"

__all__ = ["codec", "energy", "phy", "protocol", "__version__"]
