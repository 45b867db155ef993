"""Localization operators on groups with square-integrable representations."""

__version__ = "0.1.0"
