"""Deterministic quadrature rules on the unit circle and the unit sphere."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgument, NumericalDomainError

DEFAULT_CIRCLE_N = 512
DEFAULT_SPHERE_N = 32

SURFACE_AREA = {2: 2.0 * np.pi, 3: 4.0 * np.pi}

Field = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights on S^{d-1}.

    ``resolution`` is ``n`` for the circle rule and ``n_polar`` for the
    sphere rule; ``nodes`` has shape ``(N, d)``.
    """

    dimension: int
    nodes: np.ndarray
    weights: np.ndarray
    resolution: int

    def __len__(self):
        return self.weights.shape[0]

    @property
    def angles(self):
        """Polar angles of the nodes (circle rules only)."""
        if self.dimension != 2:
            raise AttributeError("angles are defined for circle rules only")
        return np.arctan2(self.nodes[:, 1], self.nodes[:, 0])


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def circle_rule(n: int) -> QuadratureRule:
    """Uniform rule with ``n`` equally spaced angles starting at 0."""
    if int(n) != n or n < 4:
        raise InvalidArgument(f"circle_rule needs an integer n >= 4, got {n!r}")
    n = int(n)
    theta = 2.0 * np.pi * np.arange(n) / n
    nodes = np.column_stack([np.cos(theta), np.sin(theta)])
    weights = np.full(n, 2.0 * np.pi / n)
    return QuadratureRule(2, _frozen(nodes), _frozen(weights), n)


@lru_cache(maxsize=64)
def sphere_rule(n_polar: int) -> QuadratureRule:
    """Gauss-Legendre in cos(phi) times a uniform azimuthal rule of 2*n_polar points."""
    if int(n_polar) != n_polar or n_polar < 4:
        raise InvalidArgument(f"sphere_rule needs an integer n_polar >= 4, got {n_polar!r}")
    n_polar = int(n_polar)
    mu, w_mu = np.polynomial.legendre.leggauss(n_polar)
    n_az = 2 * n_polar
    az = 2.0 * np.pi * np.arange(n_az) / n_az
    sin_phi = np.sqrt(1.0 - mu**2)
    x = np.outer(sin_phi, np.cos(az)).ravel()
    y = np.outer(sin_phi, np.sin(az)).ravel()
    z = np.repeat(mu, n_az)
    nodes = np.column_stack([x, y, z])
    # renormalize so |node| = 1 to rounding
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    weights = np.repeat(w_mu, n_az) * (2.0 * np.pi / n_az)
    return QuadratureRule(3, _frozen(nodes), _frozen(weights), n_polar)


def default_rule(dimension: int, resolution: int | None = None) -> QuadratureRule:
    if dimension == 2:
        return circle_rule(resolution or DEFAULT_CIRCLE_N)
    if dimension == 3:
        return sphere_rule(resolution or DEFAULT_SPHERE_N)
    raise InvalidArgument(f"dimension must be 2 or 3, got {dimension!r}")


def refined(rule: QuadratureRule, factor: int = 2) -> QuadratureRule:
    """The same family of rule at ``factor`` times the resolution."""
    return default_rule(rule.dimension, rule.resolution * factor)


def _evaluate(rule: QuadratureRule, field: Field) -> np.ndarray:
    values = field(rule.nodes) if callable(field) else field
    values = np.asarray(values, dtype=float)
    if values.shape != rule.weights.shape:
        raise InvalidArgument(
            f"field returned shape {values.shape}, expected {rule.weights.shape}"
        )
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        node = tuple(float(c) for c in rule.nodes[i])
        raise NumericalDomainError(f"non-finite field value at node {node}", node=node)
    return values


def integrate(rule: QuadratureRule, field: Field) -> float:
    """Sum of ``weight_i * field(node_i)``.

    ``field`` is either a vectorized callable taking the ``(N, d)`` node
    array, or an array of precomputed values at the nodes.
    """
    return float(np.dot(rule.weights, _evaluate(rule, field)))


def integrate_converged(
    rule: QuadratureRule,
    field: Callable[[np.ndarray], np.ndarray],
    rtol: float = 1e-10,
    max_doublings: int = 4,
):
    """Integrate, doubling the resolution until two successive results agree.

    Returns ``(value, rule_used, converged)``.
    """
    value = integrate(rule, field)
    for _ in range(max_doublings):
        finer = refined(rule)
        new = integrate(finer, field)
        if abs(new - value) <= rtol * max(1.0, abs(new)):
            return new, finer, True
        rule, value = finer, new
    return value, rule, False
