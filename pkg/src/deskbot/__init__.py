"""Desk-scale robot stack: simulator, firmware emulator, learning, evaluation."""

__version__ = "0.1.0"
