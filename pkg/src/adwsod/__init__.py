"""Weakly supervised object detection from action labels with a learned human-object spatial prior."""

__version__ = "0.1.0"
