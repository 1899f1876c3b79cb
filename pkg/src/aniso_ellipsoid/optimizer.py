"""Minimisation of the auxiliary energy f over SPD matrices.

* :func:`minimize_constrained` minimises f on ``{det M >= m^2/|B|^2}``.
* :func:`minimize_unconstrained` looks for the critical point of f; its
  volume is the critical mass.
* :func:`classify` and :func:`solve` turn these into the regime dichotomy
  for the set problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import energy
from .anisotropy import AnisotropyProfile, critical_mass_upper_bound
from .errors import InvalidArgument, SolverError
from .sphere_quad import QuadratureRule, default_rule
from .spd_geometry import BALL_VOLUME, Ellipsoid, adjugate, check_spd, determinant

DEGENERACY_CAVEAT = (
    "finite precision can only flag a degenerate minimiser: the smallest "
    "eigenvalue of the iterates crossed the threshold while f kept decreasing"
)

NON_DEGENERATE_THRESHOLD = "non_degenerate_threshold"
DEGENERATE_ALL_MASSES = "degenerate_all_masses"
DEGENERATE_LOWER_DIMENSIONAL = "degenerate_lower_dimensional"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 5000
    degeneracy_eps: float = 1e-7
    resolution: int | None = None
    armijo: float = 1e-4
    initial: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    M: np.ndarray
    lambda_tilde: float
    kkt_residual: float
    constraint_gap: float
    iterations: int
    converged: bool
    f_value: float
    stationarity: float
    message: str = ""

    @property
    def ellipsoid(self) -> Ellipsoid:
        return Ellipsoid.from_matrix(self.M)

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(),
            "lambda_tilde": self.lambda_tilde,
            "kkt_residual": self.kkt_residual,
            "constraint_gap": self.constraint_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "f_value": self.f_value,
            "stationarity": self.stationarity,
            "message": self.message,
        }


@dataclass(frozen=True, eq=False)
class DegenerateEscape:
    """Unconstrained descent drove the smallest eigenvalue below the threshold."""

    M: np.ndarray
    f_value: float
    min_eigenvalue: float
    iterations: int
    f_history: tuple
    caveat: str = DEGENERACY_CAVEAT

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(),
            "f_value": self.f_value,
            "min_eigenvalue": self.min_eigenvalue,
            "iterations": self.iterations,
            "caveat": self.caveat,
        }


@dataclass(frozen=True, eq=False)
class Regime:
    kind: str
    m_star: float | None = None
    critical: OptimizationResult | None = None
    report: object = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "m_star": self.m_star}
        if self.critical is not None:
            out["critical_ellipsoid"] = self.critical.ellipsoid.to_dict()
        if self.report is not None:
            out["report"] = self.report.to_dict() if hasattr(self.report, "to_dict") else self.report
        return out


# solve outcomes


@dataclass(frozen=True, eq=False)
class OptimalEllipsoid:
    ellipsoid: Ellipsoid
    result: OptimizationResult
    certificates: dict = field(default_factory=dict)
    kind: str = "optimal_ellipsoid"


@dataclass(frozen=True, eq=False)
class SubCritical:
    """Below the threshold: the minimiser is the density ``(m/m*) chi_{E*}``, not a set."""

    m: float
    m_star: float
    critical_ellipsoid: Ellipsoid
    kind: str = "sub_critical"

    @property
    def density(self) -> str:
        return f"(m/m*)*chi_E* with m/m* = {self.m / self.m_star!r}"


@dataclass(frozen=True, eq=False)
class DegenerateAllMasses:
    ellipsoid: Ellipsoid
    result: OptimizationResult
    report: DegenerateEscape
    certificates: dict = field(default_factory=dict)
    kind: str = DEGENERATE_ALL_MASSES


@dataclass(frozen=True, eq=False)
class DegenerateLowerDimensional:
    report: object
    kind: str = DEGENERATE_LOWER_DIMENSIONAL


def _rule(p, opts):
    return default_rule(p.dimension, opts.resolution)


def kkt_residual(p: AnisotropyProfile, M, m: float | None = None,
                 rule: QuadratureRule | None = None):
    """``(residual, lambda_tilde)`` for ``grad_f(M) = lambda_tilde * adj(M)``.

    ``lambda_tilde`` is the least-squares fit over all matrix entries and the
    residual is the max-norm of what is left.  ``m`` is accepted for
    symmetry with the other certificates; the fit does not depend on it.
    """
    M = check_spd(M)
    G = energy.grad_f(p, M, rule)
    A = adjugate(M)
    lam = float(np.sum(G * A) / np.sum(A * A))
    return float(np.max(np.abs(G - lam * A))), lam


def _result(p, M, m, rule, iterations, converged, stationarity, message=""):
    res, lam = kkt_residual(p, M, m, rule)
    gap = determinant(M) - (m / BALL_VOLUME[p.dimension]) ** 2 if m is not None else math.nan
    fv = energy.f(p, M, rule).f_value
    return OptimizationResult(M, lam, res, gap, iterations, converged, fv, stationarity, message)


def _sym_exp(S):
    s, V = np.linalg.eigh(S)
    if s[-1] > 700.0:
        return None, s, V
    M = (V * np.exp(s)) @ V.T
    return 0.5 * (M + M.T), s, V


def _log_grad(G, s, V):
    """Gradient of S -> f(exp S) from the gradient in M (Daleckii-Krein)."""
    es = np.exp(s)
    ds = s[:, None] - s[None, :]
    de = es[:, None] - es[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(np.abs(ds) > 1e-12, de / np.where(ds == 0, 1.0, ds),
                         0.5 * (es[:, None] + es[None, :]))
    H = gamma * (V.T @ G @ V)
    out = V @ H @ V.T
    return 0.5 * (out + out.T)


def minimize_constrained(p: AnisotropyProfile, m: float,
                         opts: SolverOptions | None = None) -> OptimizationResult:
    """Minimise f over ``{M SPD : det M >= m^2/|B|^2}``.

    Works in ``S = log M``, where the feasible set is the half-space
    ``tr S >= log(m^2/|B|^2)``; projected gradient descent with Armijo
    backtracking.  Stops when the projected unit-step displacement has
    Frobenius norm below ``opts.tol``.  Non-convergence returns a result with
    ``converged=False``.
    """
    if not (isinstance(m, (int, float, np.floating)) and math.isfinite(m) and m > 0):
        raise InvalidArgument(f"mass must be a positive finite number, got {m!r}")
    opts = opts or SolverOptions()
    d = p.dimension
    rule = _rule(p, opts)
    log_c = 2.0 * math.log(m / BALL_VOLUME[d])
    eye = np.eye(d)

    def project(S):
        short = log_c - np.trace(S)
        return S + max(short, 0.0) / d * eye if short > 0 else S

    def value(S):
        M, s, V = _sym_exp(S)
        if M is None or s[0] < -700.0:
            return math.inf, None, s, V
        rep = energy.f(p, M, rule)
        return rep.f_value, rep.gradient, s, V

    if opts.initial is not None:
        w, V0 = np.linalg.eigh(check_spd(opts.initial))
        S = project((V0 * np.log(w)) @ V0.T)
    else:
        S = (log_c / d) * eye
    fS, G, s, V = value(S)

    def projected_step(S, G, s, V):
        grad = _log_grad(G, s, V)
        return grad, float(np.linalg.norm(project(S - grad) - S))

    grad, stationarity = projected_step(S, G, s, V)
    for it in range(1, opts.max_iter + 1):
        if stationarity < opts.tol:
            return _result(p, _sym_exp(S)[0], m, rule, it - 1, True, stationarity)
        # below this predicted decrease, f differences are rounding noise and
        # the step is judged by the projected gradient instead
        noise = 64.0 * np.finfo(float).eps * max(1.0, abs(fS))
        alpha = 1.0
        accepted = None
        while alpha > 1e-20:
            S_new = project(S - alpha * grad)
            f_new, G_new, s_new, V_new = value(S_new)
            decrease = float(np.sum(grad * (S - S_new)))
            if decrease >= noise:
                if f_new <= fS - opts.armijo * decrease:
                    accepted = (f_new, G_new, s_new, V_new)
            elif G_new is not None:
                new_grad, new_stat = projected_step(S_new, G_new, s_new, V_new)
                if new_stat <= (1.0 - opts.armijo) * stationarity:
                    accepted = (f_new, G_new, s_new, V_new)
            if accepted is not None:
                break
            alpha *= 0.5
        if accepted is None:
            res = _result(p, _sym_exp(S)[0], m, rule, it, False, stationarity,
                          "line search stalled")
            if res.kkt_residual < 1e3 * opts.tol:
                return replace(res, converged=True, message="stalled at roundoff level")
            return res
        S = S_new
        fS, G, s, V = accepted
        grad, stationarity = projected_step(S, G, s, V)
    return _result(p, _sym_exp(S)[0], m, rule, opts.max_iter, False, stationarity,
                   "maximum iterations reached")


def _sym_basis(d):
    basis = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return np.array(basis)


def minimize_unconstrained(p: AnisotropyProfile, opts: SolverOptions | None = None):
    """Critical point of f, or a :class:`DegenerateEscape` report.

    Damped Newton iteration in the matrix entries (f is convex), with
    backtracking that keeps iterates SPD.  Starts from the ball whose mass is
    the critical-mass upper bound.  Returns an :class:`OptimizationResult`
    (``constraint_gap`` is NaN) when the max-norm of the gradient falls below
    ``opts.tol``.
    """
    opts = opts or SolverOptions()
    d = p.dimension
    rule = _rule(p, opts)
    basis = _sym_basis(d)
    if opts.initial is not None:
        M = check_spd(opts.initial)
    else:
        m_bound = critical_mass_upper_bound(p)
        M = (m_bound / BALL_VOLUME[d]) ** (2.0 / d) * np.eye(d)
    rep = energy.f(p, M, rule)
    history = [rep.f_value]
    gnorm = math.inf
    for it in range(1, opts.max_iter + 1):
        G = rep.gradient
        gnorm = float(np.max(np.abs(G)))
        if gnorm < opts.tol:
            return _result(p, M, None, rule, it - 1, True, gnorm)
        g_vec = np.einsum("kij,ij->k", basis, G)
        H4 = energy.hess_f(p, M, rule)
        H = np.einsum("kij,ijab,lab->kl", basis, H4, basis)
        # Levenberg shift keeps the step defined when f flattens out
        shift = 1e-14 * max(1.0, np.trace(H))
        try:
            step = -np.linalg.solve(H + shift * np.eye(H.shape[0]), g_vec)
        except np.linalg.LinAlgError:
            step = -g_vec
        dM = np.einsum("k,kij->ij", step, basis)
        slope = float(g_vec @ step)
        if slope >= 0:
            dM, slope = -G, -float(np.sum(G * G))
        alpha = 1.0
        new = None
        while alpha > 1e-30:
            trial = M + alpha * dM
            w = np.linalg.eigvalsh(trial)
            if w[0] > 0 and w[0] > 1e-15 * w[-1]:
                trial_rep = energy.f(p, trial, rule)
                if trial_rep.f_value <= rep.f_value + opts.armijo * alpha * slope:
                    new = (trial, trial_rep, w)
                    break
            alpha *= 0.5
        if new is None:
            res = _result(p, M, None, rule, it, False, gnorm, "line search stalled")
            if gnorm < 1e3 * opts.tol:
                return replace(res, converged=True, message="stalled at roundoff level")
            return res
        M, rep, w = new
        history.append(rep.f_value)
        if w[0] < opts.degeneracy_eps and history[-1] < history[-2]:
            return DegenerateEscape(M, rep.f_value, float(w[0]), it, tuple(history[-10:]))
    return _result(p, M, None, rule, opts.max_iter, False, gnorm, "maximum iterations reached")


def critical_mass(p: AnisotropyProfile, opts: SolverOptions | None = None) -> float | None:
    """``|B| sqrt(det M*)`` at the critical point of f; None if descent escapes to a degenerate matrix."""
    out = minimize_unconstrained(p, opts)
    if isinstance(out, DegenerateEscape):
        return None
    if not out.converged:
        raise SolverError(f"critical point search did not converge: {out.message}", out)
    return BALL_VOLUME[p.dimension] * math.sqrt(determinant(out.M))


def classify(p: AnisotropyProfile, opts: SolverOptions | None = None) -> Regime:
    """Regime of the set problem for profile ``p``.

    * ``non_degenerate_threshold``: f has an SPD critical point; minimisers
      are ellipsoids exactly for masses at or above its volume.
    * ``degenerate_all_masses``: descent escapes towards a singular matrix;
      ellipsoids minimise at every mass.
    * ``degenerate_lower_dimensional``: a vanishing profile for which the
      search neither converged nor escaped; the report is attached.
    """
    out = minimize_unconstrained(p, opts)
    if isinstance(out, DegenerateEscape):
        return Regime(DEGENERATE_ALL_MASSES, None, None, out)
    if out.converged:
        m_star = BALL_VOLUME[p.dimension] * math.sqrt(determinant(out.M))
        return Regime(NON_DEGENERATE_THRESHOLD, m_star, out)
    if p.strictly_positive:
        raise SolverError(f"critical point search did not converge: {out.message}", out)
    return Regime(DEGENERATE_LOWER_DIMENSIONAL, None, None, out)


def solve(p: AnisotropyProfile, m: float, opts: SolverOptions | None = None,
          regime: Regime | None = None, certify: bool = True,
          exterior_samples: int = 10_000, seed: int = 0, tol: float = 1e-8):
    """Minimiser of the set problem at mass ``m``.

    Returns :class:`OptimalEllipsoid`, :class:`SubCritical`,
    :class:`DegenerateAllMasses` or :class:`DegenerateLowerDimensional`.
    Raises :class:`SolverError` if the constrained solve does not converge.
    """
    if not (math.isfinite(m) and m > 0):
        raise InvalidArgument(f"mass must be positive, got {m!r}")
    opts = opts or SolverOptions()
    regime = regime or classify(p, opts)
    if regime.kind == DEGENERATE_LOWER_DIMENSIONAL:
        return DegenerateLowerDimensional(regime.report)
    if regime.kind == NON_DEGENERATE_THRESHOLD and m < regime.m_star:
        return SubCritical(float(m), regime.m_star, regime.critical.ellipsoid)
    res = minimize_constrained(p, m, opts)
    if not res.converged:
        raise SolverError(f"constrained solve did not converge at m={m!r}: {res.message}", res)
    if regime.kind == DEGENERATE_ALL_MASSES:
        if np.linalg.eigvalsh(res.M)[0] < opts.degeneracy_eps:
            return DegenerateLowerDimensional({"m": m, "result": res.to_dict(),
                                               "caveat": DEGENERACY_CAVEAT})
    E = snap_to_mass(res.M, m, p.dimension)
    certs = {}
    if certify:
        from . import verify

        certs = verify.certify(p, E, m, tol, rule=_rule(p, opts),
                               n_samples=exterior_samples, seed=seed).to_dict()
    if regime.kind == DEGENERATE_ALL_MASSES:
        return DegenerateAllMasses(E, res, regime.report, certs)
    return OptimalEllipsoid(E, res, certs)


def snap_to_mass(M, m: float, d: int) -> Ellipsoid:
    """Ellipsoid from ``M``, rescaled onto ``det M = m^2/|B|^2`` when it is within 1e-9 relative."""
    target = (m / BALL_VOLUME[d]) ** 2
    ratio = target / determinant(M)
    if abs(ratio - 1.0) < 1e-9:
        M = M * ratio ** (1.0 / d)
    return Ellipsoid.from_matrix(M)
