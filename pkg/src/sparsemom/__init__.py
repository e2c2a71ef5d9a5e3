"""sparsemom: second-moment dynamics of SGD-with-momentum under sparse updates.

Exact moment ODEs for Bernoulli-gated least squares and rare-class
logistic regression, Routh-Hurwitz stability ceilings, the (kappa,
gamma) phase plane and all per-region high-dimensional limits, plus
seeded Monte Carlo simulators as ground truth.
"""

__version__ = "0.1.0"
