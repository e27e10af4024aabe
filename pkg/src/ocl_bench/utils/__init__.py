"""Utilities package for ocl-bench."""
