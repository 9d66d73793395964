"""Dissipative preparation of entangled states with an electron-transfer control qubit."""

from .main import app  # re-export FastAPI app for convenience

__all__ = ["app"]
