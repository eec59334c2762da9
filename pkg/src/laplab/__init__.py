"""Numerical laboratory for regularized Laplacian growth and logarithmic potential theory."""

from .conformal import (BoundarySample, MomentVector, PolyMap, Trajectory, area,
                        area_quadrature, conformal_radius, derivative,
                        derivative_on_circle, evaluate, harmonic_moments,
                        harmonic_moments_exact, reduced_modulus)
from .errors import (AliasingError, ConfigError, ConvergenceError, DomainError,
                     LaplabError, NumericalGuardError, ResolutionError,
                     SingularityError)

__version__ = "0.1.0"
