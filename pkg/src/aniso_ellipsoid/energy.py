"""The auxiliary energy f(M) = g_d(M) + tr(M) and the ellipsoid potentials.

Conventions
-----------
* ``M`` is the SPD shape matrix of ``E = M^{1/2} B``; ``u(y) = M y . y``.
* Gradients use the full-matrix convention: ``d u / d M_ij = y_i y_j`` for
  every ``(i, j)`` independently, so ``grad_f`` is a symmetric matrix and
  ``d det / d M = adj(M)``.
* In 2D the kernel, the interior potential and the energy are only defined
  up to additive constants; values returned for d = 2 are relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate

from .anisotropy import GAMMA, AnisotropyProfile
from .errors import DomainError, InvalidArgument, NumericalDomainError, SolverError
from .sphere_quad import QuadratureRule, default_rule, integrate_converged
from .spd_geometry import BALL_VOLUME, Ellipsoid, check_spd

NEAR_DEGENERATE_COND = 1e8
MAX_DOUBLINGS = 4


@dataclass(frozen=True)
class EnergyReport:
    f_value: float
    g_value: float
    trace_term: float
    gradient: np.ndarray
    resolution: int
    warnings: tuple = ()


@dataclass(frozen=True)
class McEstimate:
    mean: float
    standard_error: float
    samples: int
    seed: int


@dataclass(frozen=True)
class EllipsoidEnergy:
    """Normalized ellipsoid energy; ``absolute`` is False when defined up to a constant."""

    value: float
    absolute: bool

    def __float__(self):
        return self.value


def _check_inputs(p: AnisotropyProfile, M):
    M = check_spd(M)
    if M.shape[0] != p.dimension:
        raise InvalidArgument(
            f"profile is {p.dimension}D but matrix is {M.shape[0]}x{M.shape[0]}")
    return M


def _u(M, nodes):
    return np.einsum("ni,ij,nj->n", nodes, M, nodes)


def _g_from_u(p, rule, u):
    d = p.dimension
    wpsi = rule.weights * p.values(rule)
    if d == 2:
        return -float(np.dot(wpsi, np.log(u))) / BALL_VOLUME[2]
    return 2.0 * GAMMA[3] / BALL_VOLUME[3] * float(np.dot(wpsi, u ** -0.5))


def select_rule(p: AnisotropyProfile, M, rule: QuadratureRule | None = None):
    """Quadrature rule for ``M``; refined when ``M`` is badly conditioned.

    Returns ``(rule, warnings)``.  Above condition number 1e8 the resolution
    is doubled until ``g`` stabilises (at most 16x); if it never does the
    result carries an ``"unresolved_near_degenerate"`` warning.
    """
    rule = rule or default_rule(p.dimension)
    eig = np.linalg.eigvalsh(M)
    if eig[-1] / eig[0] <= NEAR_DEGENERATE_COND:
        return rule, ()
    d = p.dimension

    def integrand(nodes):
        u = _u(M, nodes)
        vals = p.evaluator(nodes)
        return -vals * np.log(u) if d == 2 else vals * u ** -0.5

    _, used, ok = integrate_converged(rule, integrand, rtol=1e-10, max_doublings=MAX_DOUBLINGS)
    return used, (("near_degenerate_refined",) if ok else ("unresolved_near_degenerate",))


def g(p: AnisotropyProfile, M, rule: QuadratureRule | None = None) -> float:
    """The profile-dependent part g_d(M) of the auxiliary energy."""
    M = _check_inputs(p, M)
    rule = rule or default_rule(p.dimension)
    return _g_from_u(p, rule, _u(M, rule.nodes))


def _grad_g(p, rule, M):
    d = p.dimension
    u = _u(M, rule.nodes)
    coef = -GAMMA[d] / BALL_VOLUME[d] * rule.weights * p.values(rule) * u ** (-d / 2.0)
    G = (rule.nodes * coef[:, None]).T @ rule.nodes
    return 0.5 * (G + G.T), u


def f(p: AnisotropyProfile, M, rule: QuadratureRule | None = None) -> EnergyReport:
    """Evaluate f(M) = g_d(M) + tr(M) together with its gradient."""
    M = _check_inputs(p, M)
    if rule is None:
        rule, flags = select_rule(p, M)
    else:
        flags = ()
    Gg, u = _grad_g(p, rule, M)
    gv = _g_from_u(p, rule, u)
    tr = float(np.trace(M))
    return EnergyReport(gv + tr, gv, tr, Gg + np.eye(M.shape[0]), rule.resolution, flags)


def grad_f(p: AnisotropyProfile, M, rule: QuadratureRule | None = None) -> np.ndarray:
    """Full-matrix gradient ``-(gamma_d/|B|) int psi y y^T u^{-d/2} + I``."""
    M = _check_inputs(p, M)
    rule = rule or default_rule(p.dimension)
    return _grad_g(p, rule, M)[0] + np.eye(M.shape[0])


def hess_f(p: AnisotropyProfile, M, rule: QuadratureRule | None = None) -> np.ndarray:
    """Second derivative tensor ``H[i,j,k,l] = d^2 f / dM_ij dM_kl`` (full-matrix convention)."""
    M = _check_inputs(p, M)
    rule = rule or default_rule(p.dimension)
    d = p.dimension
    Y = rule.nodes
    u = _u(M, Y)
    coef = (d / 2.0) * GAMMA[d] / BALL_VOLUME[d] * rule.weights * p.values(rule) * u ** (-d / 2.0 - 1.0)
    return np.einsum("n,ni,nj,nk,nl->ijkl", coef, Y, Y, Y, Y)


def q_matrix(p: AnisotropyProfile, M, m: float, rule: QuadratureRule | None = None) -> np.ndarray:
    """Matrix Q of the interior quadratic potential ``(W * chi_E)(x) = Q x . x + c``."""
    if not m > 0:
        raise InvalidArgument("mass must be positive")
    M = _check_inputs(p, M)
    rule = rule or default_rule(p.dimension)
    return 0.5 * m * _grad_g(p, rule, M)[0]


def _interior_constant_3d(p, E, rule):
    u = _u(E.matrix, rule.nodes)
    wpsi = rule.weights * p.values(rule)
    return E.mass / (2.0 * BALL_VOLUME[3]) * GAMMA[3] * float(np.dot(wpsi, u ** -0.5))


def potential_inside(p: AnisotropyProfile, E: Ellipsoid, x, rule: QuadratureRule | None = None) -> float:
    """``(W * chi_E)(x)`` for ``x`` in ``E``.

    Absolute in 3D; in 2D the undetermined constant is dropped, so only
    differences between points are meaningful.
    """
    x = np.asarray(x, dtype=float)
    if E.quadratic_form(x) > 1.0 + 1e-12:
        raise DomainError(f"point {x.tolist()} lies outside the ellipsoid")
    rule = rule or default_rule(p.dimension)
    Q = q_matrix(p, E.matrix, E.mass, rule)
    value = float(x @ Q @ x)
    if p.dimension == 3:
        value += _interior_constant_3d(p, E, rule)
    return value


def _cosine_mapped_nodes(n):
    """Gauss-Legendre nodes on [0, 1] pushed through ``(1 - cos(pi s)) / 2``.

    Square-root behaviour at either end of an interval becomes analytic in
    ``s``.  Returns ``(fraction, weight)``; multiply the weight by the length.
    """
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * s)), 0.25 * np.pi * w * np.sin(np.pi * s)


def _exterior_2d(p, M, X, n):
    A = X[:, :, None] * X[:, None, :] - M
    mu, V = np.linalg.eigh(A)
    v_neg, v_pos = V[:, :, 0], V[:, :, 1]
    psi_c = np.arctan(np.sqrt(mu[:, 1] / -mu[:, 0]))
    frac, wf = _cosine_mapped_nodes(n)
    total = np.zeros(X.shape[0])
    for lo, hi, outer in ((-psi_c, psi_c, True), (psi_c, np.pi - psi_c, False)):
        length = (hi - lo)[:, None]
        ang = lo[:, None] + length * frac
        Y = np.cos(ang)[..., None] * v_pos[:, None, :] + np.sin(ang)[..., None] * v_neg[:, None, :]
        u = np.einsum("pni,ij,pnj->pn", Y, M, Y)
        alpha = np.einsum("pni,pi->pn", Y, X) / np.sqrt(u)
        if outer:
            a_abs = np.abs(alpha)
            h = a_abs / (a_abs + np.sqrt(np.maximum(alpha**2 - 1.0, 0.0)))
        else:
            h = alpha**2
        psi = p.evaluator(Y.reshape(-1, 2)).reshape(Y.shape[:2])
        total += np.sum(length * wf * psi * h, axis=1)
    # the integrand is even in y and the two arcs cover half the circle
    return -2.0 * total / BALL_VOLUME[2]


def _exterior_3d(p, M, X, n_polar):
    A = X[:, :, None] * X[:, None, :] - M
    mu, V = np.linalg.eigh(A)
    n_az = 2 * n_polar
    theta = 2.0 * np.pi * np.arange(n_az) / n_az
    c, s_ = np.cos(theta), np.sin(theta)
    nu = -(mu[:, 0, None] * c**2 + mu[:, 1, None] * s_**2)
    phi_c = np.arctan(np.sqrt(mu[:, 2, None] / nu))
    t, wt = np.polynomial.legendre.leggauss(n_polar)
    t, wt = 0.5 * (t + 1.0), 0.5 * wt
    # phi runs over [phi_c(theta), pi/2]; antipodal symmetry doubles it
    span = (0.5 * np.pi - phi_c)[..., None]
    phi = phi_c[..., None] + span * t
    wphi = span * wt * np.sin(phi)
    horiz = c[None, :, None] * V[:, None, :, 0] + s_[None, :, None] * V[:, None, :, 1]
    Y = (np.cos(phi)[..., None] * V[:, None, None, :, 2]
         + np.sin(phi)[..., None] * horiz[:, :, None, :])
    u = np.einsum("paki,ij,pakj->pak", Y, M, Y)
    alpha2 = np.einsum("paki,pi->pak", Y, X) ** 2 / u
    psi = p.evaluator(Y.reshape(-1, 3)).reshape(Y.shape[:3])
    total = np.sum(wphi * psi * alpha2 / np.sqrt(u), axis=(1, 2)) * (2.0 * np.pi / n_az) * 2.0
    return -GAMMA[3] * total / BALL_VOLUME[3]


def radial_derivative_outside(p: AnisotropyProfile, E: Ellipsoid, x,
                              resolution: int | None = None):
    """``x . grad (W * chi_E)(x)`` for ``x`` outside ``E``.

    ``x`` may be one point or an ``(N, d)`` array.  The angular integral is
    split where ``|alpha(x, y)| = 1``; in the eigenbasis of ``x x^T - M``
    that boundary is explicit, and each piece gets a Gauss-Legendre rule
    adapted to its endpoint behaviour.
    """
    x = np.asarray(x, dtype=float)
    d = p.dimension
    if x.shape[-1] != d or x.ndim > 2 or E.dimension != d:
        raise InvalidArgument("point dimension does not match the profile")
    X = np.atleast_2d(x)
    q = np.atleast_1d(E.quadratic_form(X))
    if np.any(q <= 1.0):
        i = int(np.flatnonzero(q <= 1.0)[0])
        raise DomainError(f"point {X[i].tolist()} lies inside the ellipsoid")
    if d == 2:
        n = resolution or 128
        out = _exterior_2d(p, E.matrix, X, n)
    else:
        n = resolution or 48
        chunk = max(1, 200_000 // (2 * n * n))
        out = np.concatenate([_exterior_3d(p, E.matrix, X[i:i + chunk], n)
                              for i in range(0, X.shape[0], chunk)])
    out = E.mass * out
    return float(out[0]) if x.ndim == 1 else out


def trace_term(M) -> float:
    """Normalized quadratic interaction ``|E|^-2 int int |x-y|^2 / 2 = tr(M) / (d + 2)``."""
    M = np.asarray(M, dtype=float)
    return float(np.trace(M)) / (M.shape[0] + 2)


def ellipsoid_energy(p: AnisotropyProfile, E: Ellipsoid, rule: QuadratureRule | None = None) -> EllipsoidEnergy:
    """Energy of the normalized indicator ``chi_E / |E|`` via ``f(M) / (d + 2)``.

    In 3D the offset vanishes and the value is absolute; in 2D the offset
    depends on the kernel's undetermined constant and the value is relative.
    """
    report = f(p, E.matrix, rule)
    d = p.dimension
    return EllipsoidEnergy(report.f_value / (d + 2), absolute=(d == 3))


def coulomb_kernel(d: int) -> Callable[[np.ndarray], np.ndarray]:
    """Isotropic kernel: ``-log|z|`` (d = 2) or ``1/|z|`` (d = 3)."""
    if d == 2:
        return lambda z: -np.log(np.linalg.norm(z, axis=1))
    if d == 3:
        return lambda z: 1.0 / np.linalg.norm(z, axis=1)
    raise InvalidArgument(f"dimension must be 2 or 3, got {d!r}")


def _uniform_in_ellipsoid(rng, E, count):
    """``count`` uniform points in ``E`` by bounding-box rejection."""
    d = E.dimension
    half = np.sqrt(np.diag(E.matrix))
    Minv = np.linalg.inv(E.matrix)
    accept_rate = BALL_VOLUME[d] / 2.0**d
    out = []
    have = 0
    tries = 0
    while have < count:
        batch = int((count - have) / accept_rate * 1.1) + 16
        pts = rng.uniform(-1.0, 1.0, size=(batch, d)) * half
        q = np.einsum("ni,ij,nj->n", pts, Minv, pts)
        pts = pts[q <= 1.0]
        if pts.shape[0] == 0:
            tries += 1
            if tries > 100:
                raise SolverError("rejection sampler accepted no points")
            continue
        out.append(pts[: count - have])
        have += out[-1].shape[0]
    return np.concatenate(out)


def mc_energy_oracle(
    kernel: Callable[[np.ndarray], np.ndarray],
    E: Ellipsoid,
    samples: int,
    seed: int,
    attraction: float = 1.0,
    chunk: int = 1 << 20,
) -> McEstimate:
    """Monte Carlo estimate of ``int int (W(x-y) + attraction |x-y|^2 / 2) dmu dmu``.

    ``mu`` is the uniform probability measure on ``E``.  Chunk ``k`` draws
    from its own stream spawned from ``seed``, so the estimate depends only
    on ``(seed, samples, chunk)``.
    """
    if samples < 2:
        raise InvalidArgument("need at least 2 samples")
    root = np.random.SeedSequence(int(seed))
    n_chunks = -(-int(samples) // chunk)
    streams = root.spawn(n_chunks)
    total_n, mean, m2 = 0, 0.0, 0.0
    for k in range(n_chunks):
        need = min(chunk, samples - k * chunk)
        rng = np.random.Generator(np.random.PCG64(streams[k]))
        vals = []
        have = 0
        while have < need:
            x = _uniform_in_ellipsoid(rng, E, need - have)
            y = _uniform_in_ellipsoid(rng, E, need - have)
            z = x - y
            r2 = np.einsum("ij,ij->i", z, z)
            z, r2 = z[r2 >= 1e-24], r2[r2 >= 1e-24]
            vals.append(kernel(z) + 0.5 * attraction * r2)
            have += z.shape[0]
        v = np.concatenate(vals)
        n_b, mean_b = v.size, float(v.mean())
        m2_b = float(np.sum((v - mean_b) ** 2))
        delta = mean_b - mean
        tot = total_n + n_b
        mean += delta * n_b / tot
        m2 += m2_b + delta**2 * total_n * n_b / tot
        total_n = tot
    if not math.isfinite(mean):
        raise NumericalDomainError("Monte Carlo integrand produced non-finite values")
    se = math.sqrt(m2 / (total_n - 1) / total_n)
    return McEstimate(mean, se, total_n, int(seed))


def projection_chord(E: Ellipsoid, y, t) -> np.ndarray:
    """Length of ``E`` along the line ``{t y + s y_perp}`` (2D), for each offset ``t``."""
    if E.dimension != 2:
        raise InvalidArgument("projections are implemented for 2D ellipsoids")
    y = np.asarray(y, dtype=float)
    y = y / np.linalg.norm(y)
    yp = np.array([-y[1], y[0]])
    Minv = np.linalg.inv(E.matrix)
    a = yp @ Minv @ yp
    b = y @ Minv @ yp
    c = y @ Minv @ y
    t = np.asarray(t, dtype=float)
    disc = (b * t) ** 2 - a * (c * t**2 - 1.0)
    return np.where(disc > 0, 2.0 * np.sqrt(np.maximum(disc, 0.0)) / a, 0.0)


def semicircle_density(E: Ellipsoid, y, t) -> np.ndarray:
    """``(2|E|/pi) r^-2 sqrt(r^2 - t^2)`` with ``r = sqrt(M y . y)``."""
    y = np.asarray(y, dtype=float)
    y = y / np.linalg.norm(y)
    r2 = float(y @ E.matrix @ y)
    t = np.asarray(t, dtype=float)
    return 2.0 * E.mass / np.pi / r2 * np.sqrt(np.maximum(r2 - t**2, 0.0))


def semicircle_log_potential(r: float, xi: float) -> float:
    """``-(2/pi) r^-2 int_{-r}^{r} log|xi - t| sqrt(r^2 - t^2) dt`` for ``|xi| < r``.

    Each side of ``xi`` is handled by QUADPACK's algebraic-logarithmic
    weights, which absorb both the log and the square-root endpoint.
    """
    if not (r > 0 and abs(xi) < r):
        raise InvalidArgument("need r > 0 and |xi| < r")
    left, _ = sp_integrate.quad(lambda t: np.sqrt(r - t), -r, xi,
                                weight="alg-logb", wvar=(0.5, 0.0), epsabs=1e-13, epsrel=1e-11)
    right, _ = sp_integrate.quad(lambda t: np.sqrt(r + t), xi, r,
                                 weight="alg-loga", wvar=(0.0, 0.5), epsabs=1e-13, epsrel=1e-11)
    return -2.0 / np.pi / r**2 * (left + right)
