"""Smart-building energy sandbox.

A simulated building (digital twin) whose appliance schedules are
optimized by a tabular Q-learning agent, a small feed-forward surrogate
trained under a physics-penalized loss, a hash-chained ledger of meter
readings and actions, and a metric battery for evaluating predictions.
"""

__version__ = "0.1.0"
