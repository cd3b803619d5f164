"""Predator/prey flocking simulator, trainers and swarm metrics."""

__version__ = "0.1.0"
