"""Scribble-driven interactive segmentation workbench."""

__version__ = "0.1.0"
