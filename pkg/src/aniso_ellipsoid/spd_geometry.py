"""Symmetric positive-definite matrices and the ellipsoids they encode.

An ellipsoid centred at the origin is ``E = M^{1/2} B`` with
``M = R diag(a**2) R^T``; equivalently ``E = {x : M^{-1} x . x <= 1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

BALL_VOLUME = {2: math.pi, 3: 4.0 * math.pi / 3.0}

TIE_RTOL = 1e-9


def check_spd(M) -> np.ndarray:
    """Return ``M`` as a symmetric float array, or raise if it is not SPD."""
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] not in (2, 3):
        raise InvalidArgument(f"expected a 2x2 or 3x3 matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidArgument("matrix has non-finite entries")
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise InvalidArgument("matrix is not symmetric")
    M = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(M)
    if eig[0] <= 1e-14 * abs(eig[-1]) or eig[0] <= 0.0:
        raise InvalidArgument(f"matrix is not positive definite (eigenvalues {eig})")
    return M


def is_spd(M) -> bool:
    try:
        check_spd(M)
    except InvalidArgument:
        return False
    return True


def determinant(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.shape == (2, 2):
        return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    return float(np.dot(M[0], np.cross(M[1], M[2])))


def trace(M) -> float:
    return float(np.trace(M))


def adjugate(M) -> np.ndarray:
    """Transpose of the cofactor matrix, so ``M @ adj(M) = det(M) I``."""
    M = np.asarray(M, dtype=float)
    if M.shape == (2, 2):
        return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
    if M.shape == (3, 3):
        r0, r1, r2 = M
        return np.column_stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)])
    raise InvalidArgument(f"adjugate supports 2x2 and 3x3 matrices, got {M.shape}")


def matrix_sqrt(M) -> np.ndarray:
    w, V = np.linalg.eigh(check_spd(M))
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def mass_of(M) -> float:
    """Volume of the ellipsoid ``M^{1/2} B``: ``|B| sqrt(det M)``."""
    M = np.asarray(M, dtype=float)
    return BALL_VOLUME[M.shape[0]] * math.sqrt(determinant(M))


def _canonical_cluster_basis(V):
    """Deterministic orthonormal basis of span(V), built from the coordinate axes."""
    d, k = V.shape
    P = V @ V.T
    chosen = []
    for _ in range(k):
        best, best_norm, best_j = None, -1.0, -1
        for j in range(d):
            v = P[:, j].copy()
            for u in chosen:
                v -= np.dot(u, v) * u
            nv = np.linalg.norm(v)
            if nv > best_norm + 1e-12:
                best, best_norm, best_j = v, nv, j
        chosen.append(best / best_norm)
    return np.column_stack(chosen)


def _fix_sign(v):
    mags = np.abs(v)
    i = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    return -v if v[i] < 0 else v


def to_axes(M):
    """Canonical ``(R, a)`` with ``M = R diag(a**2) R^T``.

    Semi-axes are sorted in descending order.  Each column of ``R`` has its
    largest-magnitude entry positive, except that the last column is flipped
    when needed to make ``det R = +1``.  Repeated axes get the basis of their
    eigenspace closest to the coordinate axes.
    """
    M = check_spd(M)
    d = M.shape[0]
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition failed: {exc}") from exc
    w, V = w[::-1], V[:, ::-1]
    cols = []
    i = 0
    while i < d:
        j = i + 1
        while j < d and abs(w[j] - w[i]) <= TIE_RTOL * abs(w[0]):
            j += 1
        block = V[:, i:j]
        if j - i > 1:
            block = _canonical_cluster_basis(block)
        cols.extend(block.T)
        i = j
    R = np.column_stack([_fix_sign(c) for c in cols])
    if np.linalg.det(R) < 0:
        R[:, -1] = -R[:, -1]
    return R, np.sqrt(w)


def _check_rotation(R, d):
    R = np.asarray(R, dtype=float)
    if R.shape != (d, d):
        raise InvalidArgument(f"rotation must be {d}x{d}")
    if np.max(np.abs(R.T @ R - np.eye(d))) > 1e-12 or abs(np.linalg.det(R) - 1.0) > 1e-12:
        raise InvalidArgument("R must be orthogonal with determinant +1")
    return R


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Origin-centred ellipsoid ``R D(a) B``."""

    matrix: np.ndarray
    rotation: np.ndarray
    semi_axes: np.ndarray
    mass: float

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, M) -> "Ellipsoid":
        M = check_spd(M)
        R, a = to_axes(M)
        return cls(M, R, a, BALL_VOLUME[M.shape[0]] * float(np.prod(a)))

    def quadratic_form(self, x) -> np.ndarray:
        """``M^{-1} x . x`` row-wise; <= 1 exactly on the closed ellipsoid."""
        x = np.asarray(x, dtype=float)
        y = np.linalg.solve(self.matrix, np.atleast_2d(x).T).T
        q = np.einsum("ij,ij->i", np.atleast_2d(x), y)
        return q if x.ndim > 1 else float(q[0])

    def contains(self, x, tol: float = 0.0):
        return self.quadratic_form(x) <= 1.0 + tol

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "rotation": self.rotation.tolist(),
            "semi_axes": self.semi_axes.tolist(),
            "mass": self.mass,
        }


def from_axes(R, a) -> Ellipsoid:
    """Ellipsoid with rotation ``R`` and semi-axes ``a``."""
    a = np.asarray(a, dtype=float).ravel()
    if a.size not in (2, 3):
        raise InvalidArgument("need 2 or 3 semi-axes")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise InvalidArgument("semi-axes must be positive")
    R = _check_rotation(R, a.size)
    M = (R * a**2) @ R.T
    M = 0.5 * (M + M.T)
    return Ellipsoid(M, R, a.copy(), BALL_VOLUME[a.size] * float(np.prod(a)))


def ball(d: int, mass: float) -> Ellipsoid:
    """Ball of the given volume."""
    radius = (mass / BALL_VOLUME[d]) ** (1.0 / d)
    return from_axes(np.eye(d), np.full(d, radius))


def rotation_2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed rotation in SO(d)."""
    Q, Rm = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(Rm))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_spd(rng: np.random.Generator, d: int, low: float = 0.3, high: float = 3.0) -> np.ndarray:
    """SPD matrix with eigenvalues log-uniform in [low, high] and random axes."""
    R = random_rotation(rng, d)
    lam = np.exp(rng.uniform(math.log(low), math.log(high), size=d))
    M = (R * lam) @ R.T
    return 0.5 * (M + M.T)
