"""Temporally informed evaluation of video road-anomaly segmentation."""

__version__ = "0.1.0"
