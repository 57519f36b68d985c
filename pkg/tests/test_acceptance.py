"""End-to-end acceptance audit.

Nine criteria, one test each, run in order.  Every test finishes by printing
a single line

    [criterion N] PASS  <key measurement>

so a verbose run reads as a checklist.  Stated runtime budgets are asserted
alongside the numerical tolerances.
"""

import math
import time

import numpy as np
import pytest

from osgood_lab.acm import condition2_bound, make_cells, series_condition
from osgood_lab.euler import (
    StabilityParams,
    advance,
    biot_savart,
    enstrophy,
    kinetic_energy,
    make_initial_vorticity,
    make_state,
    stability_experiment,
    translate_field,
)
from osgood_lab.fields import (
    A_of_u,
    GridField,
    besov_functional,
    lusin_Ds,
    random_band_limited,
    spectral_norm,
)
from osgood_lab.flow import (
    VelocityField,
    back_to_label,
    integrate_flow,
    osgood_1d_exact,
    separation_audit,
    standard_field,
    transport_solve,
)
from osgood_lab.growth import GrowthFunction
from osgood_lab.interp import choose_epsilon, interpolation_sides
from osgood_lab.modulus import (
    Modulus,
    PropagationContext,
    PropagationRangeError,
    R_inverse,
    R_of,
    propagated_modulus,
    propagated_modulus_extended,
)

LOG1 = GrowthFunction.iterated_log(1)

CATALOG = [
    Modulus.lipschitz(),
    Modulus.log_lipschitz(),
    Modulus.log_n_lipschitz(2),
    Modulus.log_n_lipschitz(3),
    Modulus.power(0.5),
]


def fresh_rng():
    return np.random.Generator(np.random.Philox(20260819))


def two_blobs(n_grid, amplitude):
    a = make_initial_vorticity(
        "smooth_blob", n_grid=n_grid, center=(0.4, 0.5), amplitude=amplitude,
        core_radius=0.08, edge_radius=0.16,
    )
    b = make_initial_vorticity(
        "smooth_blob", n_grid=n_grid, center=(0.6, 0.5), amplitude=amplitude,
        core_radius=0.08, edge_radius=0.16,
    )
    return a.with_values(a.values + b.values)


def test_criterion_1_modulus_oracle_equivalence():
    start = time.monotonic()
    worst = 0.0
    for phi in CATALOG:
        rs = np.geomspace(1e-12, phi.cutoff / 2.0, 100)
        for r in rs:
            r = float(r)
            y = R_of(phi, r)
            closed = phi.closed_R(r)
            worst = max(worst, abs(y - closed) / closed)
            inv = R_inverse(phi, y)
            closed_inv = phi.closed_R_inverse(y)
            worst = max(worst, abs(inv - closed_inv) / abs(closed_inv))
    elapsed = time.monotonic() - start
    assert worst <= 1e-6
    assert elapsed < 10.0
    print(f"\n[criterion 1] PASS  max_rel_err={worst:.3e} over 5 kinds x 100 pts "
          f"({elapsed:.1f}s)")


def test_criterion_2_fixed_point_law():
    worst = 0.0
    checked = 0
    for phi in CATALOG:
        rs = np.geomspace(1e-10, phi.cutoff / 2.0, 12)
        for J in (0.0, 0.5, 1.0, 2.0):
            for r in rs:
                r = float(r)
                try:
                    mu = propagated_modulus(phi, PropagationContext(J), r)
                except PropagationRangeError:
                    continue
                lhs = R_of(phi, mu)
                rhs = math.exp(J) * R_of(phi, r)
                worst = max(worst, abs(lhs - rhs) / rhs)
                checked += 1
    assert checked > 150
    assert worst <= 1e-8
    print(f"\n[criterion 2] PASS  max_rel_err={worst:.3e} over {checked} "
          f"(kind, J, r) triples")


def test_criterion_3_acm_series():
    start = time.monotonic()

    # one fitted constant caps the gradient series for every p
    cells = make_cells(LOG1, 50, 2, 1.5)
    ratios = []
    for p in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
        rep = series_condition(cells, "grad_lp", p=p)
        assert rep.verdict == "bounded_by"
        ratios.append(float(rep.partial_sums[-1]) / rep.bound)
    fitted = max(ratios)
    assert fitted <= 1.0
    assert fitted / min(ratios) <= 10.0

    # blow-up partial sums pass 1e12 within eight terms across the sweep
    small = make_cells(LOG1, 8, 2, 0.5)
    for s in (0.25, 0.5, 0.75):
        for t in (0.05, 0.1, 1.0):
            rep = series_condition(small, "blowup", s=s, t=t, c=1.0)
            assert rep.verdict == "diverging", (s, t)
            assert rep.simplified_partial_sums[-1] > 1e12, (s, t)

    # series vs integral comparison with the stated slack
    for p in (3.0, 10.0, 30.0):
        rep = condition2_bound(LOG1, p, 2)
        assert rep.integrable
        assert rep.series_sum <= rep.total_bound + 1e-9

    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(f"\n[criterion 3] PASS  fitted_C={fitted:.4f}, 9/9 blowup cells "
          f"diverging, integral slack ok ({elapsed:.1f}s)")


def test_criterion_4_flow_separation():
    start = time.monotonic()
    tol = 1e-10
    u = standard_field("osgood_1d")

    traj_worst = 0.0
    for x0 in (math.exp(-2.0), math.exp(-4.0), math.exp(-8.0)):
        tr = integrate_flow(u, [x0], 1.0, tol)
        traj_worst = max(traj_worst, abs(tr.final[0] - osgood_1d_exact(x0, 1.0)))
    assert traj_worst <= 10.0 * tol

    round_worst = 0.0
    for x0 in (math.exp(-2.0), math.exp(-4.0), math.exp(-6.0)):
        tr = integrate_flow(u, [x0], 1.0, tol)
        back = back_to_label(u, tr.final, 1.0, tol)
        round_worst = max(round_worst, abs(back[0] - x0))
    assert round_worst <= 20.0 * tol

    rep = separation_audit(
        u, Modulus.log_lipschitz(), 1.0, 1.0, 1000, 1e-9, rng=fresh_rng()
    )
    assert rep.pairs == 1000
    assert rep.passed

    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(f"\n[criterion 4] PASS  traj_err={traj_worst:.2e}, "
          f"roundtrip={round_worst:.2e}, audit clean over 1000 pairs "
          f"({elapsed:.1f}s)")


def brute_force_besov(f, weight, h_max):
    v = f.values
    n = f.n_grid
    L = f.L
    cell = (L / n) ** f.d
    total = 0.0
    for sx in range(n):
        for sy in range(n):
            if sx == 0 and sy == 0:
                continue
            hx = min(sx, n - sx) * (L / n)
            hy = min(sy, n - sy) * (L / n)
            h = math.hypot(hx, hy)
            if h > h_max:
                continue
            shifted = np.roll(np.roll(v, -sx, axis=0), -sy, axis=1)
            inc = float(np.mean((shifted - v) ** 2)) * L**f.d
            total += cell * inc / (h**f.d * weight(h))
    return total


def test_criterion_5_besov_brute_force():
    rng = fresh_rng()
    worst = 0.0
    for h_max in (0.5, 1.0):
        for _ in range(3):
            f = random_band_limited(32, 6, rng)
            fast = besov_functional(f, lambda r: r, h_max)
            slow = brute_force_besov(f, lambda r: r, h_max)
            worst = max(worst, abs(fast - slow) / slow)
    assert worst <= 1e-10

    fub_worst = 0.0
    for s in (0.25, 0.5, 1.0):
        f = random_band_limited(32, 6, rng)
        lhs = spectral_norm(lusin_Ds(f, s, 0.5), 0.0) ** 2
        rhs = besov_functional(f, lambda r: r ** (2.0 * s), 0.5)
        fub_worst = max(fub_worst, abs(lhs - rhs) / rhs)
    assert fub_worst <= 1e-10
    print(f"\n[criterion 5] PASS  brute_force_rel={worst:.2e}, "
          f"fubini_rel={fub_worst:.2e}")


def test_criterion_6_interpolation_audit():
    start = time.monotonic()
    rng = fresh_rng()
    mus = {
        "identity": lambda r: r,
        "sqrt": math.sqrt,
        "log_squared": lambda r: 1.0 / math.log(1.0 + 1.0 / r) ** 2,
    }
    reports = []
    for _ in range(50):
        f = random_band_limited(32, 10, rng)
        for mu in mus.values():
            for eps in (0.25, 0.0625, 0.015625):
                reports.append(interpolation_sides(f, mu, eps))
    implied = [r.implied_C for r in reports]
    c_uni = max(implied)
    assert c_uni / min(implied) <= 1e3
    assert all(
        r.lhs <= c_uni * (r.term_besov + r.term_log) * (1.0 + 1e-9)
        for r in reports
    )

    # the epsilon selector satisfies its defining identity exactly
    for dist_sq in (0.0, 1e-6, 1.0, 1e6):
        for rate in (1e-3, 1.0, 1e3):
            for gamma in (-0.1, -1.0, -3.0):
                ch = choose_epsilon(dist_sq, rate, gamma)
                assert ch.log_ratio == pytest.approx(abs(gamma), rel=1e-12)

    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(f"\n[criterion 6] PASS  {len(reports)} runs, implied_C spread "
          f"{c_uni / min(implied):.1f} <= 1e3 ({elapsed:.1f}s)")


def test_criterion_7_euler_solver():
    f = GridField.from_function(lambda x, y: np.cos(2.0 * np.pi * x), 64)
    u1, u2 = biot_savart(f)
    want = GridField.from_function(
        lambda x, y: np.sin(2.0 * np.pi * x) / (2.0 * np.pi), 64
    )
    bs_err = max(
        float(np.abs(u1.values).max()),
        float(np.abs(u2.values - want.values).max()),
    )
    assert bs_err <= 1e-12

    om = two_blobs(256, 1.0)
    out = advance(make_state(om, dt=0.01), 100)
    e_drift = abs(kinetic_energy(out.omega) - kinetic_energy(om)) / kinetic_energy(om)
    z_drift = abs(enstrophy(out.omega) - enstrophy(om)) / enstrophy(om)
    assert e_drift <= 1e-6
    assert z_drift <= 1e-6

    wavy = GridField.from_function(
        lambda x, y: np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
        + 0.5 * np.sin(4 * np.pi * x) * np.cos(2 * np.pi * y),
        64,
    )
    ref = advance(make_state(wavy, dt=0.2 / 320), 320).omega.values
    errs = []
    for nsteps in (5, 10, 20):
        got = advance(make_state(wavy, dt=0.2 / nsteps), nsteps).omega.values
        errs.append(float(np.sqrt(np.mean((got - ref) ** 2))))
    order = min(math.log2(errs[i] / errs[i + 1]) for i in range(2))
    assert order >= 3.7
    print(f"\n[criterion 7] PASS  biot_savart_err={bs_err:.1e}, "
          f"energy_drift={e_drift:.1e}, enstrophy_drift={z_drift:.1e}, "
          f"order={order:.2f}")


def test_criterion_8_stability_shape():
    start = time.monotonic()
    s = 0.5
    om1 = two_blobs(256, 6.0)

    # sweep four decades of offsets; outputs at t in {0, 0.5, 1.0}
    xs, y_half, y_one = [], [], []
    y_norm = 0.0
    for delta in (1e-5, 1e-4, 1e-3, 1e-2):
        om2 = translate_field(om1, (delta, 0.0))
        rec = stability_experiment(om1, om2, T=1.0, dt=0.004, s=s, record_every=125)
        xs.append(math.log(rec.initial_velocity_dist_sq))
        y_half.append(math.log(rec.vorticity_dist_sq[1]))
        y_one.append(math.log(rec.vorticity_dist_sq[2]))
        y_norm = max(y_norm, rec.y_norm_max)

    slope_half = float(np.polyfit(xs, y_half, 1)[0])
    slope_one = float(np.polyfit(xs, y_one, 1)[0])
    assert 0.5 < slope_half < 1.5 and 0.5 < slope_one < 1.5

    # constants of the n=1 power-law shape, fitted from the two slopes:
    # slope(t) = |gamma| s exp(-2 t M y)
    M = max(0.0, (math.log(slope_half) - math.log(slope_one)) / y_norm)
    gamma_abs = slope_one * math.exp(2.0 * M * y_norm) / s
    for t, measured in ((0.5, slope_half), (1.0, slope_one)):
        predicted = gamma_abs * s * math.exp(-2.0 * t * M * y_norm)
        assert abs(predicted - measured) <= 0.2 * measured, (t, predicted, measured)

    # deeper modulus: the bound fitted at t=0 dominates every later output
    om2 = translate_field(om1, (1e-3, 0.0))
    rec2 = stability_experiment(
        om1, om2, T=1.0, dt=0.004, s=s,
        params=StabilityParams(n=2), record_every=125,
    )
    c0 = rec2.vorticity_dist_sq[0] / rec2.bound_core[0]
    assert all(
        d <= c0 * core * (1.0 + 1e-9)
        for d, core in zip(rec2.vorticity_dist_sq, rec2.bound_core)
    )

    elapsed = time.monotonic() - start
    assert elapsed < 1800.0
    print(f"\n[criterion 8] PASS  slopes=({slope_half:.4f}, {slope_one:.4f}), "
          f"M={M:.4f}, |gamma|={gamma_abs:.4f}, n=2 bound holds "
          f"({elapsed:.0f}s)")


def test_criterion_9_transport_functional():
    s = 0.5
    lip = Modulus.lipschitz()
    g0 = make_initial_vorticity(
        "smooth_blob", n_grid=64, amplitude=1.0, center=(0.5, 0.5),
        core_radius=0.1, edge_radius=0.2,
    )
    g_norm_sq = float(np.mean(lusin_Ds(g0, s, 1.0).values ** 2))

    def rot_eval(t, x):
        out = np.empty_like(x)
        out[..., 0] = -(x[..., 1] - 0.5)
        out[..., 1] = x[..., 0] - 0.5
        return out

    flows = {
        "shear": standard_field("shear", amplitude=0.25),
        "rotation": VelocityField(rot_eval, d=2, seminorm=1.0, domain=(0.0, 1.0)),
    }
    summaries = []
    for name, u in flows.items():
        def w_at(tt):
            return lambda r: propagated_modulus_extended(lip, u.seminorm * tt, r) ** s

        A = A_of_u(w_at(1.0), tol=1e-9).value
        cs = []
        for tt in (0.0, 0.25, 0.5, 0.75, 1.0):
            theta = transport_solve(u, g0, tt, tol=1e-8) if tt > 0 else g0
            num = besov_functional(theta, w_at(tt), 1.0)
            cs.append(num / (g_norm_sq * A))
        ratios = [c / cs[0] for c in cs]
        assert all(0.5 <= r <= 2.0 for r in ratios), (name, ratios)
        summaries.append(f"{name} C0={cs[0]:.4f} drift={min(ratios):.2f}x")
    print(f"\n[criterion 9] PASS  " + "; ".join(summaries))
