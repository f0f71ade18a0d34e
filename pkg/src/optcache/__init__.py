"""Online caching with untrusted request predictions.

Learners (optimistic bipartite, elastic and experts caching, plus projected
gradient ascent), the projections they rely on, workload and predictor
simulators, best-in-hindsight benchmarks and a config-driven runner.
"""

__version__ = "0.1.0"
