"""Networked restless bandits: cascade-coupled arm dynamics, hill-climbing
Bellman operators, learners, baselines and an executable theory suite."""

__version__ = "0.1.0"
