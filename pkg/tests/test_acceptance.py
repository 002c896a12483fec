"""Acceptance checks, one test per criterion, each at its stated tolerance and time budget."""
import math
import time

import numpy as np

from hyperfaces import cli, oracle as O, simulator as S, zonoid as Z


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def random_atom_dists(count, d, seed, sizes=(3, 8)):
    out = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        out.append(Z.random_atoms(d, int(rng.integers(sizes[0], sizes[1] + 1)), rng))
    return out


def test_mean_vertex_number(acceptance):
    t0 = time.perf_counter()
    worst, cases, ok = 0.0, 0, True
    for d in (2, 3):
        for i in range(5):
            rng = np.random.default_rng(1000 * d + i)
            dist = Z.random_atoms(d, int(rng.integers(3, 9)), rng)
            targets = [S.Target("first_moment", k, 0) for k in range(1, d + 1)]
            cfg = S.SimulationConfig(dist, targets, 10_000, seed=1000 * d + i)
            for est in S.run_experiment(cfg):
                cases += 1
                dev = abs(est.mean - 2.0**est.target.k)
                if est.std_error == 0.0:
                    ok &= dev <= 1e-9
                else:
                    z = dev / est.std_error
                    worst = max(worst, z)
                    ok &= z <= 4.0
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    acceptance(1, ok, f"{cases} (dist, k) cases, max |z| = {worst:.2f}, {elapsed:.0f} s (budget 300 s)")
    assert ok


def test_isotropic_planar_variance(acceptance):
    t0 = time.perf_counter()
    exact = math.pi**2 / 2 - 4
    oracle_var = O.second_moment(Z.Isotropic(2), 2, 0, 0) - 16.0
    ok = rel(oracle_var, exact) <= 1e-9 and rel(O.variance_bounds(Z.Isotropic(2), 2).variance, exact) <= 1e-9
    dist = Z.isotropic_discretized(2, 180)
    discrete_var = O.second_moment_general(dist, 2, 0, 0) - 16.0
    cfg = S.SimulationConfig(dist, [S.Target("kface", 2, 0, 0)], 10_000, seed=2024)
    est = S.run_experiment(cfg)[0]
    mc_var = est.mean - 16.0
    z = (mc_var - discrete_var) / est.std_error
    z_exact = (mc_var - exact) / est.std_error
    elapsed = time.perf_counter() - t0
    ok &= abs(z) <= 4 and abs(z_exact) <= 4 and elapsed < 120
    acceptance(
        2, ok,
        f"oracle Var f0 = {oracle_var:.9f} (pi^2/2 - 4 = {exact:.9f}), "
        f"MC {mc_var:.4f} +- {est.std_error:.4f} (z = {z:.2f}), {elapsed:.0f} s",
    )
    assert ok


def test_general_formula_against_closed_forms(acceptance):
    t0 = time.perf_counter()
    cub_err = 0.0
    matched = []
    for d in (2, 3):
        dist = Z.cuboid(d, 1.3)
        for r in range(d + 1):
            for s in range(d + 1):
                ref = O.cuboid_closed_form(1.3, d, r, s, "derived")
                cub_err = max(cub_err, rel(O.second_moment_general(dist, d, r, s), ref))
        checks = {c["name"]: c for c in cli.validation_suite(dist, [d], miles_realizations=0)}
        matched.append(checks["cuboid_prefactor"]["matched"])
    err2 = err3 = 0.0
    d2, d3 = Z.isotropic_discretized(2, 180), Z.isotropic_discretized(3, 200)
    for dist, d in ((d2, 2), (d3, 3)):
        for k in range(1, d + 1):
            for r in range(k + 1):
                for s in range(k + 1):
                    e = rel(O.second_moment_general(dist, k, r, s), O.isotropic_closed_form(1.0, d, k, r, s))
                    if d == 2:
                        err2 = max(err2, e)
                    else:
                        err3 = max(err3, e)
    elapsed = time.perf_counter() - t0
    ok = cub_err <= 1e-9 and all(m == ["derived"] for m in matched) and err2 <= 0.01 and err3 <= 0.03
    ok &= elapsed < 180
    acceptance(
        3, ok,
        f"cuboid max rel err {cub_err:.1e}, matched variant {matched[0]}; "
        f"n=180 (d=2) {err2:.1e}, n=200 (d=3) {err3:.1e}, {elapsed:.0f} s",
    )
    assert ok


def test_miles_identity(acceptance):
    t0 = time.perf_counter()
    worst, checks = 0.0, 0
    for i in range(500):
        d = 2 + i % 2
        rng = np.random.default_rng(50_000 + i)
        dist = Z.random_atoms(d, int(rng.integers(3, 9)), rng)
        sample, cell = S.zero_cell_with_retry(dist, rng)
        for k in range(1, d + 1):
            for s in range(k + 1):
                U = rng.standard_normal((d - s, d))
                U /= np.linalg.norm(U, axis=1, keepdims=True)
                for r in range(k + 1):
                    lhs, rhs = S.check_miles_identity(sample, U, k, r, cell=cell)
                    worst = max(worst, rel(lhs, rhs))
                    checks += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-7 and elapsed < 120
    acceptance(4, ok, f"500 realizations, {checks} (k, s, r) checks, max rel diff {worst:.1e}, {elapsed:.0f} s")
    assert ok


def test_discrete_intrinsic_volume_identity(acceptance):
    worst = 0.0
    dists = random_atom_dists(10, 2, 7000) + random_atom_dists(10, 3, 8000)
    for i, dist in enumerate(dists):
        dist = dist.scaled(0.5 + 0.25 * i)
        for s in range(dist.d):
            m = dist.d - s
            lhs = dist.intensity**m * Z.nabla_moment(dist, m, ordered=True)
            rhs = math.factorial(m) * Z.intrinsic_volume(dist.zonotope, m)
            worst = max(worst, rel(lhs, rhs))
    ok = worst <= 1e-12
    acceptance(5, ok, f"20 distributions, all s < d, max rel err {worst:.1e}")
    assert ok


def test_bounds_suite(acceptance):
    t0 = time.perf_counter()
    var_excess = vp_excess = phi_excess = eig_excess = 0.0
    dists = random_atom_dists(25, 2, 9000) + random_atom_dists(25, 3, 9500)
    for dist in dists:
        d = dist.d
        for k in range(1, d + 1):
            rep = O.variance_bounds(dist, k)
            var_excess = max(var_excess, -rep.variance - 1e-8, rep.variance - rep.upper - 1e-8)
            cov = O.build_moment_table(dist, k, check=False).covariances
            eig = np.linalg.eigvalsh(0.5 * (cov + cov.T)).min()
            eig_excess = max(eig_excess, -eig - 1e-8 * np.trace(cov))
        for j in range(1, d + 1):
            vp = O.projected_volume_products(dist, j)
            lo, hi = 4.0**j / math.factorial(j), Z.kappa(j) ** 2
            vp_excess = max(vp_excess, float(np.max(lo - vp)) / lo - 1e-9, float(np.max(vp - hi)) / hi - 1e-9)
        phi, c, C = O.stability_functional(dist)
        phi_excess = max(phi_excess, c - phi - 1e-8, phi - C - 1e-8)
    elapsed = time.perf_counter() - t0
    ok = max(var_excess, vp_excess, phi_excess, eig_excess) <= 0 and elapsed < 180
    acceptance(
        6, ok,
        f"50 distributions; worst excess: variance {var_excess:.1e}, vp {vp_excess:.1e}, "
        f"phi {phi_excess:.1e}, eigenvalue {eig_excess:.1e}, {elapsed:.0f} s",
    )
    assert ok


def test_symmetry_and_scaling(acceptance):
    sym = scale = rot = 0.0
    dists = random_atom_dists(3, 2, 11_000) + random_atom_dists(3, 3, 12_000) + [Z.isotropic_discretized(2, 30)]
    for i, dist in enumerate(dists):
        d = dist.d
        q, r_ = np.linalg.qr(np.random.default_rng(i).standard_normal((d, d)))
        rotated = dist.rotated(q * np.sign(np.diag(r_)))
        for k in range(1, d + 1):
            for r in range(k + 1):
                for s in range(k + 1):
                    val = O.second_moment_general(dist, k, r, s)
                    sym = max(sym, rel(O.second_moment_general(dist, k, s, r), val))
                    rot = max(rot, rel(O.second_moment_general(rotated, k, r, s), val))
                    for lam in (0.5, 2.0, 7.0):
                        scale = max(scale, rel(O.second_moment_general(dist.scaled(lam), k, r, s), lam ** -(r + s) * val))
    ok = sym <= 1e-8 and scale <= 1e-9 and rot <= 1e-9
    acceptance(7, ok, f"symmetry {sym:.1e}, scaling {scale:.1e}, rotation {rot:.1e}")
    assert ok


def test_volume_variance_ratio(acceptance):
    worst = 0.0
    for dist in random_atom_dists(5, 2, 13_000) + random_atom_dists(5, 3, 14_000):
        d = dist.d
        t = O.build_moment_table(dist, d)
        m = t.first_moments[d]
        worst = max(worst, rel(O.volume_variance_ratio(dist), (t.second_moments[d, d] - m * m) / (m * m)))
    cub = max(rel(O.volume_variance_ratio(Z.cuboid(d)), 2.0**d - 1) for d in (2, 3, 4))
    ok = worst <= 1e-9 and cub <= 1e-9
    acceptance(8, ok, f"assembled vs identity {worst:.1e}, cuboid vs 2^d - 1 {cub:.1e}")
    assert ok


def test_gamma_and_kappa_forms(acceptance):
    worst = 0.0
    for d in range(2, 5):
        for k in range(1, d + 1):
            for r in range(k + 1):
                for s in range(k + 1):
                    for gh in (0.7, 1.0, 3.0):
                        worst = max(worst, rel(O.isotropic_gamma_form(gh, d, k, r, s), O.isotropic_closed_form(gh, d, k, r, s)))
    ok = worst <= 1e-12
    acceptance(9, ok, f"d <= 4, all (k, r, s), max rel diff {worst:.1e}")
    assert ok
