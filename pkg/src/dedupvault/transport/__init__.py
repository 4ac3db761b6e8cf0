"""Runtimes that carry framed messages between actors."""

from .memory import MemoryNetwork, TranscriptEntry

__all__ = ["MemoryNetwork", "TranscriptEntry"]
