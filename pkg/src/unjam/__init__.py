"""Deadlock-recovery motion planning and closed-loop simulation.

Pipeline: a variable-resolution Hybrid A* search produces a feasible
reference path; a rule-penalized MPPI controller refines and tracks it;
a deadlock manager watches progress and replans when the route is
blocked. Traffic rules are STL formulas monitored both inside the
controller (per rollout) and offline over the executed episode.
"""

__version__ = "0.1.0"
