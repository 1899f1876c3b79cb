"""Optimal ellipsoids for nonlocal anisotropic attractive-repulsive energies.

The energy of a set ``Omega`` of volume ``m`` is
``int int W(x - y) + |x - y|^2 / 2`` over ``Omega x Omega``, where ``W`` is
a Coulomb-type kernel whose Fourier transform is ``psi(xi/|xi|) / |xi|^2``.
Minimisers among ellipsoids reduce to minimising a convex function of the
shape matrix; this package evaluates that function, solves the reduced
problems and certifies the results.
"""

from .anisotropy import (AnisotropyProfile, ball_condition, ball_critical_mass, cosine_profile,
                         critical_mass_upper_bound, isotropic_profile, make_profile,
                         reconstruct_kernel_2d, tabulated_profile, zonal_profile)
from .energy import ellipsoid_energy, f, g, grad_f, mc_energy_oracle, q_matrix
from .errors import (DomainError, InvalidArgument, InvalidProfile, NumericalDomainError,
                     SolverError)
from .optimizer import (SolverOptions, classify, critical_mass, kkt_residual,
                        minimize_constrained, minimize_unconstrained, solve)
from .spd_geometry import Ellipsoid, ball, from_axes, to_axes
from .verify import certify, el_exterior, el_interior, monotonicity_sweep, roundness_sweep

__version__ = "0.1.0"
