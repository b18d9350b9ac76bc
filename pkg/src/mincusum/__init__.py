"""Min-CuSum sequential change diagnosis: engine, bounds and Monte Carlo harness."""

__version__ = "0.1.0"
