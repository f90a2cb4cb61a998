"""Schema-guided, norm-aware agent simulation of complex news events."""

__version__ = "0.1.0"
