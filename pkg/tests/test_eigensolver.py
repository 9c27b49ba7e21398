import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from jumpdiff.eigensolver import (
    Box,
    CharDeterminant,
    auto_re_max,
    characteristic_det,
    count_zeros,
    find_spectrum,
    gap_curve,
)
from jumpdiff.errors import BoxTooSmall
from jumpdiff.model import unit_spec
from tests.test_model import make_spec

PI2 = math.pi**2


def shooting_det(spec, lam: float) -> float:
    """Boundary determinant from numerically integrated ODE solutions.

    Independent of the closed-form evaluation: integrates the second-order
    equation for the two canonical initial conditions and assembles the same
    two boundary functionals.
    """
    def ode(_t, f):
        return [f[1], -2.0 * (spec.mu * f[1] + lam * f[0]) / spec.sigma**2]

    points = sorted(set(spec.nu.locations) | {spec.b})
    cols = []
    for f0 in ([1.0, 0.0], [0.0, 1.0]):
        sol = solve_ivp(ode, (spec.a, spec.b), f0, t_eval=points,
                        rtol=1e-11, atol=1e-13)
        values = dict(zip(points, sol.y[0]))
        nu_avg = sum(w * values[x] for x, w in spec.nu.atoms)
        cols.append((f0[0] - values[spec.b], f0[0] - nu_avg))
    return cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1]


def test_determinant_zero_at_origin():
    for spec in (unit_spec(0.0), unit_spec(7.0), unit_spec(-3.0),
                 make_spec(mu=2.0, atoms=((0.2, 0.3), (0.7, 0.7)))):
        assert abs(characteristic_det(spec, 0.0)) < 1e-13


def test_determinant_zero_at_driftfree_gap(spec0):
    assert abs(characteristic_det(spec0, 2 * PI2)) < 1e-9


def test_determinant_nonzero_off_spectrum(spec0):
    val = characteristic_det(spec0, 1.0)
    assert abs(val) > 1e-3
    assert np.sign(val.real) == np.sign(shooting_det(spec0, 1.0))


def test_determinant_finite_on_huge_lambda():
    for mu in (0.0, 50.0, 100.0):
        spec = unit_spec(mu)
        for lam in (1e6, -1e6, 1e6j, 1e5 + 9e5j):
            val = characteristic_det(spec, lam)
            assert np.isfinite(val.real) and np.isfinite(val.imag)


def test_determinant_matches_shooting_oracle(rng):
    for _ in range(20):
        mu = float(rng.uniform(0.0, 25.0))
        sigma = float(rng.uniform(0.6, 1.6))
        if rng.random() < 0.5:
            atoms = ((0.5, 1.0),)
        else:
            locs = np.sort(rng.uniform(0.1, 0.9, size=2))
            atoms = ((float(locs[0]), 0.5), (float(locs[1]), 0.5))
        spec = make_spec(sigma=sigma, mu=mu, atoms=atoms)
        lam = float(rng.uniform(0.0, 250.0))
        det = CharDeterminant(spec)
        got = complex(det(lam)) * math.exp(det.log_scale(lam))
        want = shooting_det(spec, lam)
        assert got.imag == pytest.approx(0.0, abs=1e-9 * abs(got))
        assert got.real == pytest.approx(want, rel=1e-6, abs=1e-12)


def test_determinant_continuous_across_double_root_point(spec20):
    # lambda* = mu^2 / (2 sigma^2) = 200 is the double-root point of the
    # characteristic polynomial; the determinant must be smooth there
    lam_star = 200.0
    vals = [characteristic_det(spec20, lam_star + d) for d in (-1e-5, 0.0, 1e-5)]
    assert abs(vals[1] - 0.5 * (vals[0] + vals[2])) < 1e-10 * max(abs(v) for v in vals)


def test_count_zeros_examples(spec0):
    assert count_zeros(spec0, Box(1.0, 25.0, -5.0, 5.0)) == 1
    assert count_zeros(spec0, Box(-0.5, 0.5, -0.5, 0.5)) == 1
    assert count_zeros(spec0, Box(0.5, 15.0, -5.0, 5.0)) == 0


def test_count_zeros_split_consistency(spec20):
    box = Box(-0.7, 150.0, -400.0, 400.0)
    total = count_zeros(spec20, box)
    lower = Box(box.re_min, box.re_max, box.im_min, 17.3)
    upper = Box(box.re_min, box.re_max, 17.3, box.im_max)
    assert total == count_zeros(spec20, lower) + count_zeros(spec20, upper)


def test_find_spectrum_driftfree(spec0):
    rep = find_spectrum(spec0, 100.0)
    assert rep.gap == pytest.approx(2 * PI2, abs=1e-6)
    assert rep.gap_is_real


def test_find_spectrum_plateau(spec20):
    rep = find_spectrum(spec20, 200.0)
    assert rep.gap == pytest.approx(8 * PI2, abs=1e-4)
    assert not rep.gap_is_real


def test_spectrum_conjugation_closure():
    for spec in (unit_spec(20.0), unit_spec(0.0),
                 make_spec(mu=5.0, atoms=((0.25, 0.5), (0.75, 0.5)))):
        rep = find_spectrum(spec, auto_re_max(spec))
        values = [e.value for e in rep.eigenvalues]
        for v in values:
            assert any(abs(v.conjugate() - w) < 1e-7 for w in values)


def test_zero_eigenvalue_always_reported():
    for mu in (0.0, 7.0, 20.0):
        rep = find_spectrum(unit_spec(mu), 120.0)
        zero = [e for e in rep.eigenvalues if abs(e.value) < 1e-6]
        assert len(zero) == 1
        assert zero[0].multiplicity == 1


def test_residuals_below_polish_tolerance(spec20):
    rep = find_spectrum(spec20, 200.0)
    assert all(e.residual < 1e-10 for e in rep.eigenvalues)
    assert all(e.value.real >= -1e-9 for e in rep.eigenvalues)


def test_box_too_small(spec0):
    with pytest.raises(BoxTooSmall):
        find_spectrum(spec0, 1.0)


def test_gap_curve_anchors():
    curve = gap_curve(unit_spec(), [0.0])
    assert curve[0][1] == pytest.approx(2 * PI2, abs=1e-6)

    curve = gap_curve(unit_spec(), [20.0, 40.0])
    for _, gap, is_real in curve:
        assert gap == pytest.approx(8 * PI2, abs=1e-3)
        assert not is_real


def test_gap_plateau_flat():
    gaps = [gap for _, gap, _ in gap_curve(unit_spec(), [20.0, 30.0, 40.0])]
    assert max(gaps) - min(gaps) < 1e-3


def test_gap_below_killed_bottom_at_large_drift():
    from jumpdiff.analytic import dirichlet_bottom
    curve = gap_curve(unit_spec(), [0.0, 20.0])
    assert curve[1][1] < dirichlet_bottom(unit_spec(20.0))
    assert curve[0][1] > dirichlet_bottom(unit_spec(0.0))


def test_multiple_eigenvalue_reported_with_multiplicity(spec0):
    # the driftfree spectrum has a threefold zero above the gap
    rep = find_spectrum(spec0, 100.0)
    multiple = [e for e in rep.eigenvalues if e.multiplicity > 1]
    assert len(multiple) == 1
    assert multiple[0].multiplicity == 3
    assert multiple[0].value.real == pytest.approx(8 * PI2, abs=1e-3)
    assert multiple[0].value.imag == 0.0


def test_find_spectrum_on_scaled_shifted_interval():
    # large mu L / sigma^2 makes the determinant magnitude vary by dozens of
    # orders along one contour; the per-point closeness guard must not read
    # that as a zero on the contour
    from jumpdiff.analytic import theoretical_gap
    spec = make_spec(a=-2.0, b=3.0, sigma=0.7, mu=6.0, atoms=((0.5, 1.0),))
    rep = find_spectrum(spec, auto_re_max(spec))
    assert rep.gap == pytest.approx(theoretical_gap(spec), rel=1e-9)
    assert not rep.gap_is_real


def test_scaling_law_via_determinant(rng):
    # lambda(a, b, sigma, mu) = s^2 lambda(0, 1, sigma, mu / s) with
    # s = 1 / (b - a): check through the gap on a doubled interval
    wide = make_spec(b=2.0, mu=10.0, atoms=((1.0, 1.0),))
    rep_wide = find_spectrum(wide, auto_re_max(wide))
    narrow = unit_spec(20.0)
    rep_narrow = find_spectrum(narrow, auto_re_max(narrow))
    assert rep_wide.gap == pytest.approx(rep_narrow.gap / 4.0, rel=1e-9)
