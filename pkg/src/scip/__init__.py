"""Stream classification and integration proxy for TSN networks."""

__version__ = "0.1.0"
