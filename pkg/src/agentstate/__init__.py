"""Generate-and-test agent-state learning with deep-trace and imprinting features."""

__version__ = "0.1.0"
