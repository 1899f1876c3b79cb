import math

import numpy as np
import pytest

from aniso_ellipsoid import anisotropy as an
from aniso_ellipsoid import energy as en
from aniso_ellipsoid import optimizer as opt
from aniso_ellipsoid import spd_geometry as sg
from aniso_ellipsoid.errors import InvalidArgument


def _det_target(m, d):
    return (m / sg.BALL_VOLUME[d]) ** 2


# constrained solve ------------------------------------------------------------


def test_constrained_isotropic_2pi(iso2):
    res = opt.minimize_constrained(iso2, 2 * math.pi)
    assert res.converged
    np.testing.assert_allclose(res.M, 2 * np.eye(2), atol=1e-9)
    assert abs(res.lambda_tilde - 0.25) < 1e-9
    assert res.kkt_residual < 1e-8
    assert res.constraint_gap >= -1e-12


@pytest.mark.parametrize("m", [2.0, 5.0, 12.0])
def test_constrained_ball_3d(m, iso3):
    res = opt.minimize_constrained(iso3, m)
    R2 = (m / sg.BALL_VOLUME[3]) ** (2 / 3)
    if m >= 4 * math.pi / 3:
        np.testing.assert_allclose(res.M, R2 * np.eye(3), atol=1e-8)
    assert res.kkt_residual < 1e-8


@pytest.mark.parametrize("profile, m", [
    (an.cosine_profile([0.5]), 4.0),
    (an.cosine_profile([0.5, -0.2]), 10.0),
    (an.zonal_profile([0.3]), 6.0),
])
def test_constrained_kkt_and_complementarity(profile, m):
    res = opt.minimize_constrained(profile, m)
    d = profile.dimension
    assert res.converged
    assert res.kkt_residual < 1e-8
    assert res.lambda_tilde >= -1e-10
    assert sg.determinant(res.M) >= _det_target(m, d) * (1 - 1e-9)
    assert abs(res.lambda_tilde * res.constraint_gap) < 1e-8
    assert min(np.linalg.eigvalsh(res.M)) > 0


def test_inactive_constraint_below_threshold(cos05):
    # below m* the constraint is slack and the solver finds the critical point
    res = opt.minimize_constrained(cos05, 1.0)
    crit = opt.minimize_unconstrained(cos05)
    assert abs(res.lambda_tilde) < 1e-8
    np.testing.assert_allclose(res.M, crit.M, atol=1e-7)


def test_uniqueness_from_random_starts(rng):
    p = an.cosine_profile([0.5, -0.2])
    m = 10.0
    sols = []
    for _ in range(5):
        o = opt.SolverOptions(initial=sg.random_spd(rng, 2))
        res = opt.minimize_constrained(p, m, o)
        assert res.converged
        sols.append(res.M)
    spread = max(np.max(np.abs(a - sols[0])) for a in sols)
    assert spread < 1e-8


def test_optimum_beats_random_feasible_matrices(rng, zonal3):
    m = 6.0
    best = opt.minimize_constrained(zonal3, m).f_value
    for _ in range(20):
        A = sg.random_spd(rng, 3)
        A *= (_det_target(m, 3) / np.linalg.det(A)) ** (1 / 3)
        assert en.f(zonal3, A).f_value >= best - 1e-12


def test_nonconvergence_is_reported(cos05):
    res = opt.minimize_constrained(cos05, 8.0, opt.SolverOptions(max_iter=1, initial=np.diag([9.0, 0.1])))
    assert not res.converged
    assert res.message


@pytest.mark.parametrize("m", [0.0, -1.0, math.inf, math.nan])
def test_invalid_mass(m, iso2):
    with pytest.raises(InvalidArgument):
        opt.minimize_constrained(iso2, m)
    with pytest.raises(InvalidArgument):
        opt.solve(iso2, m)


def test_kkt_residual_examples(iso2, iso3):
    res, lam = opt.kkt_residual(iso2, 2 * np.eye(2))
    assert res < 1e-13 and abs(lam - 0.25) < 1e-13
    res, lam = opt.kkt_residual(iso3, np.eye(3))
    assert res < 1e-13 and abs(lam) < 1e-13
    res, _ = opt.kkt_residual(iso2, np.diag([3.0, 1.0]))
    assert res > 1e-3


def test_snap_to_mass_only_when_close():
    M = np.diag([2.0, 2.0 * (1 + 1e-11)])
    assert abs(opt.snap_to_mass(M, 2 * math.pi, 2).mass - 2 * math.pi) < 1e-14
    far = opt.snap_to_mass(np.diag([2.0, 3.0]), 2 * math.pi, 2)
    np.testing.assert_allclose(far.matrix, np.diag([2.0, 3.0]))


# critical mass and regimes ------------------------------------------------------


@pytest.mark.parametrize("profile, expected", [
    (an.isotropic_profile(2), math.pi),
    (an.isotropic_profile(3), 4 * math.pi / 3),
    (an.cosine_profile([0.5]), math.pi * math.sqrt(0.75)),
    (an.cosine_profile([0.9]), math.pi * math.sqrt(1 - 0.81)),
])
def test_critical_mass_closed_forms(profile, expected):
    assert abs(opt.critical_mass(profile) - expected) < 1e-8


@pytest.mark.parametrize("profile", [
    an.cosine_profile([0.5]),
    an.cosine_profile([0.5, -0.2]),
    an.cosine_profile([0.0, 0.5]),
    an.zonal_profile([0.3]),
    an.zonal_profile([0.3, 0.1]),
])
def test_critical_mass_respects_bound(profile):
    m_star = opt.critical_mass(profile)
    assert m_star <= an.critical_mass_upper_bound(profile) * (1 + 1e-9)
    if an.ball_condition(profile):
        assert abs(m_star - an.critical_mass_upper_bound(profile)) < 1e-8


def test_zonal_critical_mass_below_bound(zonal3):
    m_star = opt.critical_mass(zonal3)
    assert m_star < an.critical_mass_upper_bound(zonal3) - 1e-3


def test_critical_point_has_zero_gradient(cos05):
    res = opt.minimize_unconstrained(cos05)
    assert res.converged
    assert np.max(np.abs(en.grad_f(cos05, res.M))) < 1e-10
    assert math.isnan(res.constraint_gap)


def test_classify_non_degenerate(cos05):
    regime = opt.classify(cos05)
    assert regime.kind == opt.NON_DEGENERATE_THRESHOLD
    assert abs(regime.m_star - math.pi * math.sqrt(0.75)) < 1e-8
    assert regime.to_dict()["kind"] == regime.kind


def test_vanishing_profile_escapes():
    p = an.cosine_profile([1.0])
    out = opt.minimize_unconstrained(p)
    assert isinstance(out, opt.DegenerateEscape)
    assert out.min_eigenvalue < 1e-7
    assert list(out.f_history) == sorted(out.f_history, reverse=True)
    regime = opt.classify(p)
    assert regime.kind == opt.DEGENERATE_ALL_MASSES
    assert opt.critical_mass(p) is None
    assert out.to_dict()["caveat"] == opt.DEGENERACY_CAVEAT


def test_unresolved_vanishing_profile_is_lower_dimensional():
    p = an.cosine_profile([1.0])
    regime = opt.classify(p, opt.SolverOptions(max_iter=1))
    assert regime.kind == opt.DEGENERATE_LOWER_DIMENSIONAL
    out = opt.solve(p, 3.0, regime=regime)
    assert isinstance(out, opt.DegenerateLowerDimensional)


# solve ------------------------------------------------------------------------------


def test_solve_optimal_2pi(iso2):
    out = opt.solve(iso2, 2 * math.pi, exterior_samples=500)
    assert isinstance(out, opt.OptimalEllipsoid)
    np.testing.assert_allclose(out.ellipsoid.semi_axes, [math.sqrt(2)] * 2, atol=1e-9)
    assert out.certificates["passed"]
    assert abs(out.ellipsoid.mass - 2 * math.pi) < 1e-12


def test_solve_sub_critical(iso2):
    out = opt.solve(iso2, 1.0)
    assert isinstance(out, opt.SubCritical)
    assert abs(out.m_star - math.pi) < 1e-8
    np.testing.assert_allclose(out.critical_ellipsoid.matrix, np.eye(2), atol=1e-8)
    assert out.density


def test_solve_anisotropic_certified(cos05):
    out = opt.solve(cos05, 5.0, exterior_samples=500)
    assert isinstance(out, opt.OptimalEllipsoid)
    c = out.certificates
    assert c["interior_residual"] < 1e-8 and c["lambda"] > 0 and c["exterior_min"] >= -1e-8


def test_solve_reuses_regime(cos05):
    regime = opt.classify(cos05)
    a = opt.solve(cos05, 4.0, regime=regime, certify=False)
    b = opt.solve(cos05, 4.0, certify=False)
    np.testing.assert_array_equal(a.ellipsoid.matrix, b.ellipsoid.matrix)
    assert a.certificates == {}


def test_solve_degenerate_all_masses():
    p = an.cosine_profile([1.0])
    out = opt.solve(p, 3.0, exterior_samples=300)
    assert out.kind in (opt.DEGENERATE_ALL_MASSES, opt.DEGENERATE_LOWER_DIMENSIONAL)
    if out.kind == opt.DEGENERATE_ALL_MASSES:
        assert out.report.caveat == opt.DEGENERACY_CAVEAT
