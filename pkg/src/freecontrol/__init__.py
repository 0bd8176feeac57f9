"""Free stochastic control at finite matrix size."""

__version__ = "0.1.0"
