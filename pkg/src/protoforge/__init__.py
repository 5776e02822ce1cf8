"""Prototype-based spatio-temporal classifier with human-in-the-loop refinement."""

__version__ = "0.1.0"
