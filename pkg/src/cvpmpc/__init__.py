"""Probability-minimizing collision-avoidance MPC for planar vehicles.

The package couples a receding-horizon tracking controller with a
first-step input-set tightening that minimizes the probability of
violating a 2-norm separation constraint against a stochastically
moving obstacle, plus an analytic collision-probability evaluator
and a Monte-Carlo validation harness.
"""

__version__ = "0.1.0"
