"""Pathology term extraction and benchmarking for chest X-ray reports."""

__version__ = "0.1.0"
