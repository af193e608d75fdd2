"""Patchplan - ADMM trajectory planner for multi-limbed climbing robots with patch-contact grippers."""

__version__ = "0.3.0"
