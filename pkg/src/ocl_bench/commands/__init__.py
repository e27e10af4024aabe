"""Commands package for ocl-bench."""
