"""Transfer-matrix numerics for Gaussian beta-ensemble characteristic polynomials.

Submodules
----------
sampling     tridiagonal model draws, noise variables, truncation events
transfer     Phi recurrence, Hermite recurrence, hyperbolic factorization
expansion    perturbative psi expansion of U-products and deviation harness
field        Brownian paths, the field W, GAF series and covariances
asymptotics  Sturm eigensolver, Plancherel-Rotach / Airy checks, CLT
cli          command-line front end
"""

__version__ = "0.1.0"

from ._backend import name as backend  # noqa: E402

__all__ = ["__version__", "backend"]
