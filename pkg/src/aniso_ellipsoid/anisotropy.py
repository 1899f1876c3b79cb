"""Anisotropy profiles: the restriction of the kernel's Fourier symbol to the sphere.

A profile ``psi`` is an even, nonnegative function on S^{d-1}; the kernel's
Fourier transform is ``psi(xi / |xi|) / |xi|**2``.  In two dimensions every
admissible profile integrates to ``2*pi`` over the circle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree
from scipy.special import eval_legendre, sph_harm_y

from .errors import InvalidArgument, InvalidProfile
from .sphere_quad import QuadratureRule, circle_rule, default_rule, sphere_rule

GAMMA = {2: 1.0, 3: math.sqrt(math.pi / 2.0)}

STRICT_POSITIVITY_THRESHOLD = 1e-10
EVENNESS_TOL = 1e-12
NEGATIVITY_TOL = 1e-12
NORMALIZATION_TOL = 1e-8
TABULATED_NORMALIZATION_TOL = 1e-6


def _validation_rule(dimension):
    return circle_rule(4096) if dimension == 2 else sphere_rule(64)


@dataclass(frozen=True, eq=False)
class AnisotropyProfile:
    """A validated profile.

    Build instances through :func:`make_profile` or the family
    constructors; the constructor itself does not validate.
    """

    dimension: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    psi_min: float
    family: str = "custom"
    coefficients: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def strictly_positive(self) -> bool:
        return self.psi_min > STRICT_POSITIVITY_THRESHOLD

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return float(self.evaluator(y[None, :])[0])
        return np.asarray(self.evaluator(y), dtype=float)

    def values(self, rule: QuadratureRule) -> np.ndarray:
        """Profile values at the nodes of ``rule`` (cached per rule)."""
        if rule.dimension != self.dimension:
            raise InvalidArgument("rule and profile dimensions differ")
        key = rule.resolution
        vals = self._cache.get(key)
        if vals is None:
            vals = np.asarray(self.evaluator(rule.nodes), dtype=float)
            vals.setflags(write=False)
            self._cache[key] = vals
        return vals

    def rotated(self, rotation) -> "AnisotropyProfile":
        """Profile of the kernel rotated by ``rotation``: y -> psi(R^T y)."""
        R = np.asarray(rotation, dtype=float)
        base = self.evaluator

        def evaluator(y):
            return base(np.asarray(y) @ R)

        return make_profile(
            self.dimension,
            evaluator,
            family=f"rotated({self.family})",
            coefficients=self.coefficients,
            check_normalization=False,
        )

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "family": self.family,
            "coefficients": _jsonable(self.coefficients),
            "psi_min": self.psi_min,
            "strictly_positive": self.strictly_positive,
        }


def _jsonable(obj):
    if isinstance(obj, (list, tuple)):
        return [_jsonable(o) for o in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def make_profile(
    dimension: int,
    evaluator: Callable[[np.ndarray], np.ndarray],
    family: str = "custom",
    coefficients=(),
    check_normalization: bool = True,
    normalization_tol: float = NORMALIZATION_TOL,
) -> AnisotropyProfile:
    """Validate ``evaluator`` and wrap it in an :class:`AnisotropyProfile`.

    ``evaluator`` maps an ``(N, d)`` array of unit vectors to ``N`` values.
    Raises :class:`InvalidProfile` if the function is not even, takes a
    negative value on the validation grid, or (d = 2) does not integrate to
    ``2*pi``.
    """
    if dimension not in (2, 3):
        raise InvalidArgument(f"dimension must be 2 or 3, got {dimension!r}")
    grid = _validation_rule(dimension)
    vals = np.asarray(evaluator(grid.nodes), dtype=float)
    if vals.shape != grid.weights.shape or not np.all(np.isfinite(vals)):
        raise InvalidProfile("profile evaluator returned non-finite or misshaped values")
    flipped = np.asarray(evaluator(-grid.nodes), dtype=float)
    asym = np.max(np.abs(vals - flipped))
    if asym > EVENNESS_TOL * max(1.0, np.max(np.abs(vals))):
        raise InvalidProfile(f"profile is not even (max |psi(y)-psi(-y)| = {asym:.3e})",
                             asymmetry=float(asym))
    i_min = int(np.argmin(vals))
    psi_min = float(vals[i_min])
    if psi_min < -NEGATIVITY_TOL:
        node = grid.nodes[i_min]
        diag = {"psi_min": psi_min, "node": node.tolist()}
        where = f"node {np.round(node, 12).tolist()}"
        if dimension == 2:
            angle = float(np.arctan2(node[1], node[0]) % (2 * np.pi))
            diag["angle"] = angle
            where = f"angle {angle:.12g}"
        raise InvalidProfile(f"profile is negative: min {psi_min:.6g} at {where}", **diag)
    psi_min = max(psi_min, 0.0)
    if dimension == 2 and check_normalization:
        total = float(np.dot(grid.weights, vals))
        if abs(total - 2 * np.pi) > normalization_tol:
            raise InvalidProfile(
                f"2D profile must integrate to 2*pi, got {total!r}", total_mass=total
            )
    return AnisotropyProfile(dimension, evaluator, psi_min, family, tuple(coefficients))


def isotropic_profile(d: int) -> AnisotropyProfile:
    """Constant profile of the isotropic Coulomb kernel (-log|x| or 1/|x|)."""
    if d not in (2, 3):
        raise InvalidArgument(f"dimension must be 2 or 3, got {d!r}")
    c = 1.0 if d == 2 else math.sqrt(2.0 / math.pi)

    def evaluator(y):
        return np.full(np.shape(y)[0], c)

    return make_profile(d, evaluator, family="isotropic", coefficients=(c,))


def cosine_profile(b: Sequence[float]) -> AnisotropyProfile:
    """2D profile ``1 + sum_k b_k cos(2 k theta)``."""
    b = np.asarray(b, dtype=float).ravel()
    if not np.all(np.isfinite(b)):
        raise InvalidArgument("cosine coefficients must be finite")
    ks = 2.0 * np.arange(1, b.size + 1)

    def evaluator(y):
        theta = np.arctan2(y[:, 1], y[:, 0])
        return 1.0 + np.cos(np.outer(theta, ks)) @ b

    return make_profile(2, evaluator, family="cosine", coefficients=tuple(b.tolist()))


def zonal_profile(b: Sequence[float], scale: float = math.sqrt(2.0 / math.pi),
                  axis: Sequence[float] = (0.0, 0.0, 1.0)) -> AnisotropyProfile:
    """3D axisymmetric profile ``scale * (1 + sum_k b_k P_{2k}(y . axis))``."""
    b = np.asarray(b, dtype=float).ravel()
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if axis.shape != (3,) or norm == 0.0:
        raise InvalidArgument("axis must be a nonzero 3-vector")
    axis = axis / norm
    if scale <= 0:
        raise InvalidArgument("scale must be positive")
    degrees = 2 * np.arange(1, b.size + 1)

    def evaluator(y):
        c = np.clip(y @ axis, -1.0, 1.0)
        out = np.ones_like(c)
        for bk, n in zip(b, degrees):
            out = out + bk * eval_legendre(n, c)
        return scale * out

    return make_profile(3, evaluator, family="zonal",
                        coefficients=(float(scale), tuple(b.tolist()), tuple(axis.tolist())))


def _unit_rows(points, d):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != d:
        raise InvalidArgument(f"expected sample directions of shape (N, {d})")
    norms = np.linalg.norm(pts, axis=1)
    bad = np.abs(norms - 1.0) > 1e-8
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InvalidProfile(f"sample direction {pts[i].tolist()} is not a unit vector",
                             row=i, norm=float(norms[i]))
    return pts / norms[:, None]


def _check_antipodal(pts, values, tol=1e-10):
    """Every sample whose antipode is also sampled must agree with it."""
    tree = cKDTree(pts)
    dist, idx = tree.query(-pts)
    paired = dist < 1e-8
    if not paired.any():
        return
    gaps = np.abs(values[paired] - values[idx[paired]])
    worst = int(np.argmax(gaps))
    if gaps[worst] > tol:
        i = int(np.flatnonzero(paired)[worst])
        raise InvalidProfile(
            f"samples are not even: psi({pts[i].tolist()}) differs from its antipode "
            f"by {gaps[worst]:.3e}",
            row=i, asymmetry=float(gaps[worst]))


def _real_even_harmonics(degree):
    return [(n, m, part) for n in range(0, degree + 1, 2)
            for m in range(0, n + 1) for part in (("re",) if m == 0 else ("re", "im"))]


def _harmonic_design(y, basis):
    polar = np.arccos(np.clip(y[:, 2], -1.0, 1.0))
    azim = np.arctan2(y[:, 1], y[:, 0]) % (2 * np.pi)
    cols = []
    for n, m, part in basis:
        Y = sph_harm_y(n, m, polar, azim)
        cols.append(Y.real if part == "re" else Y.imag)
    return np.column_stack(cols)


def tabulated_profile(d: int, points, values, degree: int = 8) -> AnisotropyProfile:
    """Profile interpolated from samples ``values[i] = psi(points[i])``.

    In 2D the samples are folded onto [0, pi) and joined by a periodic
    cubic spline; in 3D an even real spherical-harmonic expansion of degree
    ``degree`` is fitted by least squares.
    """
    values = np.asarray(values, dtype=float).ravel()
    pts = _unit_rows(points, d)
    if pts.shape[0] != values.size:
        raise InvalidArgument("points and values have different lengths")
    if not np.all(np.isfinite(values)):
        raise InvalidProfile("sample values must be finite")
    if np.any(values < 0):
        i = int(np.argmin(values))
        raise InvalidProfile(f"negative sample value {values[i]} at {pts[i].tolist()}", row=i)
    _check_antipodal(pts, values)

    if d == 2:
        theta = np.arctan2(pts[:, 1], pts[:, 0]) % np.pi
        theta[np.isclose(theta, np.pi, atol=1e-12, rtol=0)] = 0.0
        order = np.argsort(theta, kind="stable")
        theta, vals = theta[order], values[order]
        keep = np.concatenate([[True], np.diff(theta) > 1e-9])
        theta, vals = theta[keep], vals[keep]
        if theta.size < 4:
            raise InvalidProfile("need at least 4 distinct sample directions mod pi")
        spline = CubicSpline(np.append(theta, theta[0] + np.pi),
                             np.append(vals, vals[0]), bc_type="periodic")

        def evaluator(y):
            return spline(np.arctan2(y[:, 1], y[:, 0]) % np.pi)

        return make_profile(2, evaluator, family="tabulated",
                            coefficients=(int(theta.size),),
                            normalization_tol=TABULATED_NORMALIZATION_TOL)

    if d != 3:
        raise InvalidArgument(f"dimension must be 2 or 3, got {d!r}")
    basis = _real_even_harmonics(degree)
    while len(basis) > pts.shape[0] and degree > 0:
        degree -= 2
        basis = _real_even_harmonics(degree)
    A = _harmonic_design(pts, basis)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    residual = float(np.max(np.abs(A @ coef - values)))

    def evaluator(y):
        return _harmonic_design(np.asarray(y, dtype=float), basis) @ coef

    return make_profile(3, evaluator, family="tabulated",
                        coefficients=(int(pts.shape[0]), int(degree), residual))


def read_samples(path, d: int):
    """Read a whitespace-separated sample file.

    Rows are ``y1 y2 [y3] value``; 2D files may instead use ``theta value``
    with the angle in radians.  Lines starting with ``#`` are ignored.
    """
    data = np.loadtxt(path, comments="#", ndmin=2)
    if d == 2 and data.shape[1] == 2:
        theta = data[:, 0]
        return np.column_stack([np.cos(theta), np.sin(theta)]), data[:, 1]
    if data.shape[1] != d + 1:
        raise InvalidProfile(f"expected {d + 1} columns in {path}, found {data.shape[1]}")
    return data[:, :d], data[:, d]


def total_mass(p: AnisotropyProfile, rule: QuadratureRule | None = None) -> float:
    """Integral of the profile over S^{d-1}."""
    rule = rule or default_rule(p.dimension)
    return float(np.dot(rule.weights, p.values(rule)))


def second_moment_matrix(p: AnisotropyProfile, rule: QuadratureRule | None = None) -> np.ndarray:
    """Matrix of ``int psi(y) y_i y_j``; its trace is the total mass."""
    rule = rule or default_rule(p.dimension)
    wv = rule.weights * p.values(rule)
    S = (rule.nodes * wv[:, None]).T @ rule.nodes
    return 0.5 * (S + S.T)


def ball_condition(p: AnisotropyProfile, tol: float = 1e-10) -> bool:
    """True when the weighted second moments are isotropic (balls can be optimal)."""
    S = second_moment_matrix(p)
    iso = np.trace(S) / p.dimension * np.eye(p.dimension)
    return bool(np.linalg.norm(S - iso) <= tol)


def critical_mass_upper_bound(p: AnisotropyProfile) -> float:
    """``(gamma_d / d) * total_mass``; an upper bound on the critical mass."""
    return GAMMA[p.dimension] / p.dimension * total_mass(p)


def ball_critical_mass(p: AnisotropyProfile, tol: float = 1e-10) -> float:
    """Mass threshold above which balls minimise, for profiles passing the ball condition."""
    if not ball_condition(p, tol):
        warnings.warn("profile fails the ball condition; the value is only an upper "
                      "bound on the critical mass", RuntimeWarning, stacklevel=2)
    return critical_mass_upper_bound(p)


# Fourier coefficients of log|cos u| on [0, 2pi): L_0 = -2 pi log 2,
# L_{+-2n} = -(-1)^n pi / n, zero for odd frequencies.
def _log_cos_moments(freqs):
    freqs = np.asarray(freqs)
    out = np.zeros(freqs.shape)
    out[freqs == 0] = -2.0 * np.pi * math.log(2.0)
    even = (freqs != 0) & (freqs % 2 == 0)
    n = np.abs(freqs[even]) // 2
    out[even] = -((-1.0) ** n) * np.pi / n
    return out


def _circle_fourier(p: AnisotropyProfile, n: int):
    key = ("fourier", n)
    cached = p._cache.get(key)
    if cached is None:
        rule = circle_rule(n)
        c = np.fft.fft(p.values(rule)) / n
        freqs = np.rint(np.fft.fftfreq(n, 1.0 / n)).astype(int)
        if n % 2 == 0:
            # the Nyquist term is aliased and negligible for smooth profiles
            c[n // 2] = 0.0
        weights = c * _log_cos_moments(freqs)
        keep = np.abs(weights) > 1e-16 * max(1.0, np.max(np.abs(weights)))
        cached = (c[0].real, freqs[keep], weights[keep])
        p._cache[key] = cached
    return cached


def kernel_2d(p: AnisotropyProfile, n: int = 512):
    """Vectorized reconstructed kernel ``-(1/2pi) int psi(y) log|x . y|``.

    The angular integral is done by product integration: the profile's
    discrete Fourier coefficients against the exact Fourier moments of
    ``log|cos|``, which handles the logarithmic singularities exactly.
    """
    if p.dimension != 2:
        raise InvalidArgument("kernel reconstruction is defined for d = 2 only")
    c0, freqs, weights = _circle_fourier(p, n)

    def W(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.hypot(x[:, 0], x[:, 1])
        phi = np.arctan2(x[:, 1], x[:, 0])
        ang = (np.exp(1j * np.outer(phi, freqs)) @ weights).real
        return -c0 * np.log(r) - ang / (2.0 * np.pi)

    return W


def reconstruct_kernel_2d(p: AnisotropyProfile, x, n: int = 512) -> float:
    """Kernel value at ``x`` up to the undetermined additive constant."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise InvalidArgument("x must be a 2-vector")
    if np.linalg.norm(x) < 1e-12:
        raise InvalidArgument("kernel reconstruction needs |x| >= 1e-12")
    return float(kernel_2d(p, n)(x)[0])
