"""kickstab: a numerical lab for feedback stabilization under random kicks.

Pipeline: build an unstable Oseen-type operator, split the space at a rate
sigma, project kicks back into the stable subspace, run the controlled
chain, and verify contraction, envelope, density regularity, and mixing.
"""

from . import (
    artifacts,
    chain,
    config,
    density,
    ergodicity,
    errors,
    feedback,
    kicks,
    model_builder,
    spectral,
)

__version__ = "0.1.0"

__all__ = [
    "artifacts",
    "chain",
    "config",
    "density",
    "ergodicity",
    "errors",
    "feedback",
    "kicks",
    "model_builder",
    "spectral",
    "__version__",
]
