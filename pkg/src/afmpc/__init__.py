"""Hierarchical MPC with online data-driven model matching.

Offline E-FRIT tuning of a PID inner loop against a first-order PL model,
online directional-forgetting adaptation of the PID gains, and a constrained
MPC outer loop that uses the PL model as its predictor.
"""

__version__ = "0.1.0"
