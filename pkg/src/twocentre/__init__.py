"""Integrable two-centre problems on the sphere and the hyperbolic plane with a Dirac monopole."""

__version__ = "0.1.0"

from .algebra import EUCLIDEAN, LORENTZIAN, PhasePoint, poisson_bracket  # noqa: E402
from .systems import SystemParams, SystemSignature  # noqa: E402

__all__ = ["EUCLIDEAN", "LORENTZIAN", "PhasePoint", "SystemParams", "SystemSignature", "poisson_bracket", "__version__"]
