"""Self-powered flight analysis for buoyant solar multirotors."""
__version__ = "0.1.0"
