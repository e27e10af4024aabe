"""Algorithm modules: data streams, networks, strategies and metrics."""
