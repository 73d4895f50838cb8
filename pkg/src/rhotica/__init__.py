"""Rhoticity analysis toolkit for accent-conversion TTS experiments."""

__version__ = "0.1.0"
