"""Monte Carlo simulation of mixed yard-sale / theft-and-fraud exchange economies."""

__version__ = "0.1.0"
