"""Gaze forecasting for head-mounted displays without eye tracking."""

__version__ = "0.1.0"
