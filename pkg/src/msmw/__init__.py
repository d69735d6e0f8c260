"""Numerics for the minimum of a random walk with Markov-modulated steps.

The package computes, exactly where possible and by simulation otherwise,
the objects of the local limit theory for m_n = min(S_0, ..., S_n): the
transfer-matrix spectral calculus, the Wiener-Hopf factorization of
I - zP(lambda) as z-series of matrix measures, exact path-space oracles,
reproducible Monte Carlo estimators, and the singularity-analysis limits
(the matrices A+, A-, the Laplace limit H, and the harmonic function h).
"""

from .model import (
    Gaussian,
    HypothesisReport,
    Lattice,
    MarkovKernel,
    SemiMarkovModel,
    Uniform,
    load_model,
    model_from_json,
    model_to_json,
    save_model,
    step_laplace,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "Gaussian",
    "HypothesisReport",
    "Lattice",
    "MarkovKernel",
    "SemiMarkovModel",
    "Uniform",
    "load_model",
    "model_from_json",
    "model_to_json",
    "save_model",
    "step_laplace",
    "validate",
    "__version__",
]
