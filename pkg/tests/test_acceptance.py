"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and printed at the end of the pytest
run by the terminal-summary hook in ``conftest.py``.
"""

import json
import math
import sys
import time

import numpy as np
import pytest

from aniso_ellipsoid import anisotropy as an
from aniso_ellipsoid import cli
from aniso_ellipsoid import energy as en
from aniso_ellipsoid import optimizer as opt
from aniso_ellipsoid import spd_geometry as sg
from aniso_ellipsoid import verify as vf
from aniso_ellipsoid.sphere_quad import sphere_rule

RESULTS = []

# isotropic 2D disks of radius 1 and 2: (3/4) - (9/4 - log 2)
DISK_PAIR_DIFF = (-6 + 4 * math.log(2)) / 4


def report(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    RESULTS.append((number, line))
    print(line)
    assert ok, line


def cubic_profile():
    # cubic symmetry makes the weighted second moments isotropic
    rule = sphere_rule(24)
    y = rule.nodes
    vals = 1 + 0.5 * (np.sum(y**4, axis=1) - 0.6)
    return an.tabulated_profile(3, y, vals, degree=4)


def test_criterion_01_isotropic_critical_mass():
    worst_err, worst_time = 0.0, 0.0
    for d, expected in ((2, math.pi), (3, 4 * math.pi / 3)):
        t0 = time.perf_counter()
        m_star = opt.critical_mass(an.isotropic_profile(d))
        worst_time = max(worst_time, time.perf_counter() - t0)
        worst_err = max(worst_err, abs(m_star - expected))
    report(1, "isotropic critical mass", worst_err < 1e-6 and worst_time < 1.0,
           f"max error {worst_err:.1e}, max runtime {worst_time:.2f}s")


def test_criterion_02_isotropic_supercritical_solve():
    t0 = time.perf_counter()
    checks = []
    for d, m in ((2, 2 * math.pi), (2, 4 * math.pi), (3, 8 * math.pi / 3)):
        p = an.isotropic_profile(d)
        out = opt.solve(p, m)
        E, res, c = out.ellipsoid, out.result, out.certificates
        R2 = (m / sg.BALL_VOLUME[d]) ** (2 / d)
        if d == 2:
            t = m / math.pi
            lam_expected = (1 - 1 / t) / t
        else:
            # gradient (1 - R^-3) I against adjugate R^4 I
            lam_expected = (1 - R2**-1.5) / R2**2
        checks.append(all([
            isinstance(out, opt.OptimalEllipsoid),
            np.max(np.abs(E.matrix - R2 * np.eye(d))) < 1e-8,
            abs(E.mass - m) < 1e-9 * m,
            res.kkt_residual < 1e-8,
            res.lambda_tilde >= 0,
            abs(res.lambda_tilde - lam_expected) < 1e-8,
            c["interior_residual"] < 1e-8,
            c["exterior_min"] >= -1e-8,
        ]))
    elapsed = time.perf_counter() - t0
    report(2, "isotropic supercritical solve", all(checks) and elapsed < 5.0,
           f"{sum(checks)}/3 cases, runtime {elapsed:.2f}s")


def test_criterion_03_sub_critical_dispatch():
    out = opt.solve(an.isotropic_profile(2), math.pi / 2)
    ok = (isinstance(out, opt.SubCritical) and abs(out.m_star - math.pi) < 1e-6
          and np.max(np.abs(out.critical_ellipsoid.matrix - np.eye(2))) < 1e-6)
    report(3, "sub-critical dispatch", ok, f"m* = {getattr(out, 'm_star', None)!r}")


def test_criterion_04_scaling_identities():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = 0.0
    for p in (an.cosine_profile([0.5]), an.zonal_profile([0.3])):
        d = p.dimension
        for _ in range(100):
            M = sg.random_spd(rng, d)
            fM, tr = en.f(p, M).f_value, np.trace(M)
            for lam in (0.5, 2.0):
                fL = en.f(p, lam * M).f_value
                if d == 2:
                    expected = fM + (lam - 1) * tr - 2 * math.log(lam)
                else:
                    expected = fM / math.sqrt(lam) + (lam**1.5 - 1) * tr / math.sqrt(lam)
                worst = max(worst, abs(fL - expected))
    elapsed = time.perf_counter() - t0
    report(4, "scaling identities of f", worst < 1e-10 and elapsed < 2.0,
           f"max deviation {worst:.1e}, runtime {elapsed:.2f}s")


def test_criterion_05_gradient_check():
    rng = np.random.default_rng(5)
    pools = {2: [an.isotropic_profile(2), an.cosine_profile([0.5]), an.cosine_profile([0.5, -0.2]),
                 an.cosine_profile([0.0, 0.5])],
             3: [an.isotropic_profile(3), an.zonal_profile([0.3]), an.zonal_profile([0.3, 0.1]),
                 an.zonal_profile([-0.2], axis=[1.0, 1.0, 0.0])]}
    t0 = time.perf_counter()
    worst = 0.0
    for d, pool in pools.items():
        for k in range(100):
            p = pool[k % len(pool)]
            M = sg.random_spd(rng, d)
            G = en.grad_f(p, M)
            h = 1e-6 * np.linalg.norm(M)
            fd = np.eye(d)
            for i in range(d):
                for j in range(i, d):
                    D = np.zeros((d, d))
                    D[i, j] = D[j, i] = h
                    deriv = (en.g(p, M + D) - en.g(p, M - D)) / (2 * h)
                    # a symmetric perturbation picks up G_ij + G_ji
                    fd[i, j] = fd[j, i] = fd[i, j] + (deriv if i == j else 0.5 * deriv)
            worst = max(worst, np.linalg.norm(G - fd) / np.linalg.norm(G))
    elapsed = time.perf_counter() - t0
    report(5, "gradient vs central differences", worst < 1e-6 and elapsed < 10.0,
           f"max relative error {worst:.1e}, runtime {elapsed:.2f}s")


def test_criterion_06_monte_carlo_oracle():
    t0 = time.perf_counter()
    n = 10**7
    lines = []
    # (i) isotropic disks R = 1, 2
    p2 = an.isotropic_profile(2)
    W2 = en.coulomb_kernel(2)
    E1, E2 = sg.ball(2, math.pi), sg.ball(2, 4 * math.pi)
    q = en.ellipsoid_energy(p2, E1).value - en.ellipsoid_energy(p2, E2).value
    a, b = en.mc_energy_oracle(W2, E1, n, seed=61), en.mc_energy_oracle(W2, E2, n, seed=62)
    se = math.hypot(a.standard_error, b.standard_error)
    z1 = (a.mean - b.mean - q) / se
    ok1 = abs(z1) < 3 and abs(q - DISK_PAIR_DIFF) < 1e-12
    lines.append(f"disks z={z1:+.2f}")
    # (ii) isotropic unit ball, absolute
    p3 = an.isotropic_profile(3)
    B = sg.ball(3, 4 * math.pi / 3)
    e3 = en.ellipsoid_energy(p3, B)
    c = en.mc_energy_oracle(en.coulomb_kernel(3), B, n, seed=63)
    z2 = (c.mean - e3.value) / c.standard_error
    ok2 = abs(z2) < 3 and e3.absolute and abs(e3.value - 1.8) < 1e-12
    lines.append(f"ball z={z2:+.2f}")
    # (iii) anisotropic 2D pair through the reconstructed kernel
    pc = an.cosine_profile([0.5])
    Wc = an.kernel_2d(pc)
    assert abs(Wc(np.array([[0.3, 0.7]]))[0] - an.reconstruct_kernel_2d(pc, [0.3, 0.7])) < 1e-14
    R = sg.rotation_2d(0.4)
    F1 = sg.Ellipsoid.from_matrix(np.diag([1.5, 0.6]))
    F2 = sg.Ellipsoid.from_matrix(R @ np.diag([0.8, 2.0]) @ R.T)
    qa = en.ellipsoid_energy(pc, F1).value - en.ellipsoid_energy(pc, F2).value
    u, v = en.mc_energy_oracle(Wc, F1, n, seed=64), en.mc_energy_oracle(Wc, F2, n, seed=65)
    z3 = (u.mean - v.mean - qa) / math.hypot(u.standard_error, v.standard_error)
    ok3 = abs(z3) < 3
    lines.append(f"anisotropic z={z3:+.2f}")
    elapsed = time.perf_counter() - t0
    report(6, "energy vs Monte Carlo oracle", ok1 and ok2 and ok3 and elapsed < 60.0,
           ", ".join(lines) + f", runtime {elapsed:.1f}s")


def test_criterion_07_newton_potentials():
    rng = np.random.default_rng(7)
    worst = 0.0
    p3, p2 = an.isotropic_profile(3), an.isotropic_profile(2)
    for _ in range(100):
        R = rng.uniform(0.5, 2.0)
        E = sg.ball(3, 4 * math.pi / 3 * R**3)
        x = rng.standard_normal(3)
        x *= R * rng.uniform() ** (1 / 3) / np.linalg.norm(x)
        worst = max(worst, abs(en.potential_inside(p3, E, x) - (2 * math.pi * R**2 - 2 * math.pi / 3 * x @ x)))
    for d, p in ((2, p2), (3, p3)):
        m = rng.uniform(0.5, 20.0)
        E = sg.ball(d, m)
        R = E.semi_axes[0]
        X = rng.standard_normal((100, d))
        X *= (R * rng.uniform(1.0 + 1e-6, 10.0, 100) / np.linalg.norm(X, axis=1))[:, None]
        got = en.radial_derivative_outside(p, E, X)
        expected = -m if d == 2 else -m / np.linalg.norm(X, axis=1)
        worst = max(worst, float(np.max(np.abs(got - expected))))
    report(7, "Newton-theorem potentials", worst < 1e-8, f"max error {worst:.1e}")


def test_criterion_08_ball_condition_dichotomy():
    pc = an.cosine_profile([0.5])
    m_star = opt.critical_mass(pc)
    E = opt.solve(pc, 1.5 * m_star, certify=False).ellipsoid
    ratio = max(E.semi_axes) / min(E.semi_axes)
    ok_aniso = (not an.ball_condition(pc)) and ratio - 1 > 1e-3
    worst = 0.0
    for p, mults in ((an.isotropic_profile(2), (1, 3)), (an.cosine_profile([0.0, 0.5]), (1, 2, 4)),
                     (an.isotropic_profile(3), (1, 3)), (cubic_profile(), (1, 3))):
        assert an.ball_condition(p)
        m0 = an.ball_critical_mass(p)
        for k in mults:
            axes = opt.solve(p, k * m0, certify=False).ellipsoid.semi_axes
            worst = max(worst, float(np.max(axes) / np.min(axes) - 1))
    report(8, "ball-condition dichotomy", ok_aniso and worst < 1e-7,
           f"anisotropic axis ratio {ratio:.4f}, worst ball deviation {worst:.1e}")


def test_criterion_09_critical_mass_bound():
    profiles = {"isotropic 2D": an.isotropic_profile(2), "isotropic 3D": an.isotropic_profile(3),
                "cosine [0.5]": an.cosine_profile([0.5]), "cosine [0, 0.5]": an.cosine_profile([0.0, 0.5]),
                "cosine [0.9]": an.cosine_profile([0.9]), "zonal [0.3]": an.zonal_profile([0.3]),
                "cubic tabulated": cubic_profile()}
    margins = {}
    for name, p in profiles.items():
        margins[name] = an.critical_mass_upper_bound(p) + 1e-8 - opt.critical_mass(p)
    worst = min(margins, key=margins.get)
    report(9, "critical mass below the bound", all(v >= 0 for v in margins.values()),
           f"smallest margin {margins[worst]:.1e} ({worst})")


def test_criterion_10_monotonicity():
    flags = []
    for p in (an.isotropic_profile(2), an.isotropic_profile(3), an.cosine_profile([0.5])):
        m_star = opt.critical_mass(p)
        table = vf.monotonicity_sweep(p, [m_star * k for k in (1, 2, 4, 8, 16, 32)])
        flags.append(table.nonincreasing)
    report(10, "trace ratio nonincreasing", all(flags), f"{sum(flags)}/3 profiles")


def test_criterion_11_roundness():
    pc = an.cosine_profile([0.5])
    m_star = opt.critical_mass(pc)
    table = vf.roundness_sweep(pc, [m_star * k for k in (2, 8, 32)])
    ok = table.slope is not None and abs(table.slope + 1) <= 0.2 and table.max_product_error < 1e-10
    report(11, "roundness decay", ok,
           f"slope {table.slope:.3f}, product error {table.max_product_error:.1e}")


def test_criterion_12_semicircle():
    rng = np.random.default_rng(12)
    worst_proj = 0.0
    for _ in range(10):
        E = sg.from_axes(sg.rotation_2d(rng.uniform(0, 2 * np.pi)), rng.uniform(0.3, 2.0, 2))
        y = rng.standard_normal(2)
        y /= np.linalg.norm(y)
        r = math.sqrt(y @ E.matrix @ y)
        t = rng.uniform(-1.2 * r, 1.2 * r, 1000)
        worst_proj = max(worst_proj, float(np.max(np.abs(
            en.projection_chord(E, y, t) - en.semicircle_density(E, y, t)))))
    worst_log = 0.0
    for r in (0.5, 1.0, 2.0):
        for xi in np.linspace(-0.99 * r, 0.99 * r, 25):
            expected = -(xi**2) / r**2 - math.log(r / 2) + 0.5
            worst_log = max(worst_log, abs(en.semicircle_log_potential(r, xi) - expected))
    report(12, "semicircle identities", worst_proj < 1e-6 and worst_log < 1e-7,
           f"projection {worst_proj:.1e}, log-potential {worst_log:.1e}")


ACCEPTANCE_CONFIGS = {
    "solve2d": {"command": "solve", "dimension": 2, "profile": {"family": "isotropic"},
                "mass": 2 * math.pi},
    "solve3d": {"command": "solve", "dimension": 3, "profile": {"family": "isotropic"},
                "mass": 8 * math.pi / 3, "exterior_samples": 2000},
    "critical": {"command": "critical-mass", "dimension": 3,
                 "profile": {"family": "zonal", "coefficients": [0.3]}},
    "sweep": {"command": "sweep", "dimension": 2,
              "profile": {"family": "cosine", "coefficients": [0.5]},
              "mass_multiples": [1, 2, 4, 8, 16, 32]},
    "oracle": {"command": "oracle", "dimension": 2, "profile": {"family": "cosine", "coefficients": [0.5]},
               "oracle": {"matrices": [[[1.5, 0], [0, 0.6]], [[1, 0.3], [0.3, 1]]], "samples": 50_000},
               "seed": 9},
}


def test_criterion_13_determinism(tmp_path):
    identical = []
    for name, config in ACCEPTANCE_CONFIGS.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(config))
        outputs = []
        for run in ("first", "second"):
            out = tmp_path / name / run
            assert cli.run(["--config", str(path), "--out", str(out)]) == 0
            outputs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
        identical.append(outputs[0] == outputs[1] and "summary.json" in outputs[0]
                         and (name != "sweep" or "sweep.csv" in outputs[0]))
    report(13, "byte-identical reruns", all(identical), f"{sum(identical)}/{len(identical)} configs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
