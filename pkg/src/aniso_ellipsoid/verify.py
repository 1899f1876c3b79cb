"""Euler-Lagrange certificates for ellipsoids and mass sweeps of the optimum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import energy
from .anisotropy import AnisotropyProfile
from .errors import InvalidArgument, SolverError
from .optimizer import (NON_DEGENERATE_THRESHOLD, Regime, SolverOptions, classify,
                        kkt_residual, minimize_constrained, snap_to_mass)
from .sphere_quad import QuadratureRule, default_rule
from .spd_geometry import BALL_VOLUME, Ellipsoid, matrix_sqrt

EXTERIOR_RADIUS_MAX = 10.0


@dataclass(frozen=True)
class ElCertificate:
    interior_residual: float
    lambda_: float
    exterior_min: float
    n_samples: int
    seed: int
    tol: float

    @property
    def interior_pass(self) -> bool:
        return self.interior_residual < self.tol

    @property
    def lambda_pass(self) -> bool:
        return self.lambda_ >= -self.tol

    @property
    def exterior_pass(self) -> bool:
        return self.exterior_min >= -self.tol

    @property
    def passed(self) -> bool:
        return self.interior_pass and self.lambda_pass and self.exterior_pass

    def to_dict(self) -> dict:
        return {
            "interior_residual": self.interior_residual,
            "lambda": self.lambda_,
            "exterior_min": self.exterior_min,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "tol": self.tol,
            "interior_pass": self.interior_pass,
            "lambda_pass": self.lambda_pass,
            "exterior_pass": self.exterior_pass,
            "passed": self.passed,
        }


def _check_mass(E: Ellipsoid, m: float):
    if not (m > 0 and abs(E.mass - m) <= 1e-9 * m):
        raise InvalidArgument(f"ellipsoid has mass {E.mass!r}, expected {m!r}")


def el_interior(p: AnisotropyProfile, E: Ellipsoid, m: float, tol: float = 1e-8,
                rule: QuadratureRule | None = None):
    """``(residual, lambda)`` for ``M^{1/2} (Q + (m/2) I) M^{1/2} = lambda I``.

    ``lambda`` is the mean eigenvalue of the left-hand side and the residual
    is the max-norm of its deviation from ``lambda I``.
    """
    _check_mass(E, m)
    d = E.dimension
    Q = energy.q_matrix(p, E.matrix, m, rule)
    S = matrix_sqrt(E.matrix)
    L = S @ (Q + 0.5 * m * np.eye(d)) @ S
    lam = float(np.trace(L)) / d
    return float(np.max(np.abs(L - lam * np.eye(d)))), lam


def boundary_samples(E: Ellipsoid, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points distributed uniformly by surface measure on the boundary of ``E``."""
    d = E.dimension
    S = matrix_sqrt(E.matrix)
    S_inv = np.linalg.inv(S)
    # area element of z -> S z at the unit normal z is det(S) |S^{-1} z|
    j_max = 1.0 / np.min(E.semi_axes)
    out = []
    have = 0
    while have < n:
        z = rng.standard_normal((2 * (n - have) + 16, d))
        z /= np.linalg.norm(z, axis=1)[:, None]
        jac = np.linalg.norm(z @ S_inv, axis=1)
        keep = rng.random(z.shape[0]) * j_max <= jac
        pts = (z[keep] @ S)[: n - have]
        out.append(pts)
        have += pts.shape[0]
    X = np.concatenate(out)
    return X / np.sqrt(E.quadratic_form(X))[:, None]


def el_exterior(p: AnisotropyProfile, E: Ellipsoid, m: float, n_samples: int = 10_000,
                seed: int = 0, resolution: int | None = None) -> float:
    """Minimum of ``x . grad(W * chi_E)(x) + m |x|^2`` over sampled exterior points.

    Points are ``t x0`` with ``x0`` uniform on the boundary and ``t``
    log-uniform in (1, 10].  A sample is evidence, not a proof.
    """
    if n_samples < 1:
        raise InvalidArgument("need at least one exterior sample")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    x0 = boundary_samples(E, n_samples, rng)
    t = np.exp((1.0 - rng.random(n_samples)) * math.log(EXTERIOR_RADIUS_MAX))
    t = np.maximum(t, 1.0 + 1e-9)
    X = x0 * t[:, None]
    if resolution is None:
        resolution = 96 if E.dimension == 2 else 32
    radial = np.atleast_1d(energy.radial_derivative_outside(p, E, X, resolution))
    return float(np.min(radial + m * np.einsum("ij,ij->i", X, X)))


def certify(p: AnisotropyProfile, E: Ellipsoid, m: float, tol: float = 1e-8,
            rule: QuadratureRule | None = None, n_samples: int = 10_000,
            seed: int = 0) -> ElCertificate:
    """Interior and exterior Euler-Lagrange checks for ``E`` at mass ``m``."""
    res, lam = el_interior(p, E, m, tol, rule)
    ext = el_exterior(p, E, m, n_samples, seed)
    return ElCertificate(res, lam, ext, int(n_samples), int(seed), tol)


@dataclass(frozen=True)
class SweepRow:
    m: float
    semi_axes: tuple
    trace_ratio: float
    max_t2_gap: float
    lambda_tilde: float
    kkt_residual: float
    t_product: float

    @property
    def axis_ratio(self) -> float:
        return max(self.semi_axes) / min(self.semi_axes)


def _threshold(p, opts, regime):
    regime = regime or classify(p, opts)
    if regime.kind == NON_DEGENERATE_THRESHOLD:
        return regime.m_star
    if regime.kind == "degenerate_all_masses":
        return 0.0
    raise InvalidArgument(f"sweeps are undefined in the {regime.kind} regime")


def sweep_rows(p: AnisotropyProfile, masses, opts: SolverOptions | None = None,
               regime: Regime | None = None) -> list[SweepRow]:
    """Constrained optimum at every mass, summarised for sweeps.

    Raises :class:`InvalidArgument` naming the first mass below the
    critical mass.
    """
    masses = [float(m) for m in masses]
    if not masses:
        raise InvalidArgument("mass list is empty")
    opts = opts or SolverOptions()
    m_star = _threshold(p, opts, regime)
    for m in masses:
        if not m > 0 or m < m_star * (1.0 - 1e-9):
            raise InvalidArgument(f"mass {m!r} is below the critical mass {m_star!r}")
    d = p.dimension
    rule = default_rule(d, opts.resolution)
    rows = []
    for m in masses:
        res = minimize_constrained(p, m, opts)
        if not res.converged:
            raise SolverError(f"constrained solve did not converge at m={m!r}", res)
        E = snap_to_mass(res.M, m, d)
        t = (BALL_VOLUME[d] / m) ** (1.0 / d) * E.semi_axes
        t2 = t**2
        kres, lam = kkt_residual(p, E.matrix, m, rule)
        rows.append(SweepRow(m, tuple(float(a) for a in E.semi_axes),
                             float(np.trace(E.matrix)) / m ** (2.0 / d),
                             float(t2.max() - t2.min()), lam, kres, float(np.prod(t))))
    return rows


@dataclass(frozen=True)
class MonotonicityTable:
    rows: list
    nonincreasing: bool

    @property
    def ratios(self):
        return [(r.m, r.trace_ratio) for r in self.rows]


def monotonicity_sweep(p: AnisotropyProfile, masses, opts: SolverOptions | None = None,
                       regime: Regime | None = None, slack: float = 1e-9) -> MonotonicityTable:
    """``tr(M)/m^{2/d}`` along ascending masses; flags any increase beyond ``slack``."""
    masses = list(masses)
    if any(b < a for a, b in zip(masses, masses[1:])):
        raise InvalidArgument("masses must be ascending")
    return check_monotonicity(sweep_rows(p, masses, opts, regime), slack)


def check_monotonicity(rows, slack: float = 1e-9) -> MonotonicityTable:
    ok = all(b.trace_ratio <= a.trace_ratio + slack for a, b in zip(rows, rows[1:]))
    return MonotonicityTable(list(rows), ok)


@dataclass(frozen=True)
class RoundnessTable:
    rows: list
    C: float
    slope: float | None
    bound_holds: bool
    ratios_monotone: bool
    max_product_error: float


def roundness_sweep(p: AnisotropyProfile, masses, opts: SolverOptions | None = None,
                    regime: Regime | None = None, slack: float = 1e-9) -> RoundnessTable:
    """Rescaled semi-axes ``t_i = (|B|/m)^{1/d} a_i`` along ascending masses.

    ``C`` is fitted from the first row (``gap * m``); the bound
    ``gap <= C/m`` and the monotone decrease of the axis ratio are checked
    with ``slack``.  ``slope`` is the least-squares log-log slope of the gap
    against the mass, or None when a gap vanishes.
    """
    masses = list(masses)
    if any(b < a for a, b in zip(masses, masses[1:])):
        raise InvalidArgument("masses must be ascending")
    return check_roundness(sweep_rows(p, masses, opts, regime), slack)


def check_roundness(rows, slack: float = 1e-9) -> RoundnessTable:
    C = rows[0].max_t2_gap * rows[0].m
    bound = all(r.max_t2_gap <= C / r.m + slack for r in rows)
    monotone = all(b.axis_ratio <= a.axis_ratio + slack for a, b in zip(rows, rows[1:]))
    gaps = np.array([r.max_t2_gap for r in rows])
    slope = None
    if len(rows) >= 2 and np.all(gaps > 1e-12):
        slope = float(np.polyfit(np.log([r.m for r in rows]), np.log(gaps), 1)[0])
    err = max(abs(r.t_product - 1.0) for r in rows)
    return RoundnessTable(rows, C, slope, bound, monotone, err)
