"""Streaming continual learning with STAM units (self-taught associative memories)."""

from .unit import CentroidRecord, StamUnit, UnitConfig

__all__ = ["CentroidRecord", "StamUnit", "UnitConfig"]
