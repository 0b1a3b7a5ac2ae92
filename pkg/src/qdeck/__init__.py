"""qdeck: a desk-scale quantum-LDPC decoding workbench.

Builds bivariate-bicycle and coprime-BB CSS codes, simulates depolarizing
noise, and benchmarks belief propagation, OSD-0 post-processing, and a
Bayesian attention graph decoder with Monte Carlo uncertainty, plus a
three-phase cross-code training procedure.
"""

__version__ = "0.1.0"
