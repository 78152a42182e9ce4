"""Desk-scale BB84 simulator and key-rate analysis for single-photon sources."""

from .sources import PRESETS, SourceKind, SourceSpec, get_preset

__version__ = "0.1.0"

__all__ = ["PRESETS", "SourceKind", "SourceSpec", "get_preset", "__version__"]
