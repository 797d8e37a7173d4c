"""Gaussian approximation of random projections of high-dimensional vectors.

Submodules: :mod:`sources` (vector laws, projection and noise),
:mod:`stats` (alpha, beta_1, beta_2), :mod:`moments` (m_p and M),
:mod:`bounds` (closed-form upper bounds), :mod:`estimators` (Monte Carlo KL,
MI and Wasserstein) and :mod:`harness` (configs, verification runs, CLI).
"""

__version__ = "0.1.0"
