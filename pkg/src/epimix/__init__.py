"""Bayesian nonparametric mixture models for case-control genetic
interaction analysis: gene-gene and gene-environment models, a three-level
hierarchical Dirichlet process, deterministic parallel MCMC, and a Bayesian
hypothesis-testing suite."""

__version__ = "0.1.0"
