"""Multiscale entropic training of hierarchical near-identity models.

The package decomposes a smooth invertible target into a ladder of
near-identity rungs, generates power-law multiscale data, trains a
level-per-scale step-network model by exact Gibbs sampling with a
decreasing temperature schedule, and numerically certifies every
regularity, risk, and bound identity it relies on.

Modules
    entropy    finite-support distributions and entropic primitives
    ladder     dilations, ladder decompositions, regularity certificates
    scales     scale-band geometry, power-law sampling, datasets
    stepnet    discretized step networks and the hierarchical model
    training   Gibbs level sampling, ERM baselines, congruency oracle
    risk       risk estimators and every closed-form bound
    config     experiment configuration
    verify     command-line property suites
    cli        experiment runner
"""

from . import cli, config, entropy, figures, ladder, risk, rng, scales, stepnet, training, verify

__version__ = "0.1.0"

__all__ = [
    "cli",
    "config",
    "entropy",
    "figures",
    "ladder",
    "risk",
    "rng",
    "scales",
    "stepnet",
    "training",
    "verify",
    "__version__",
]
