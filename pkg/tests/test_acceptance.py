"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

All runs use the unit configuration (interval (0, 1), sigma 1, restart atom
at 1/2) unless stated otherwise.  Tolerances are pinned here, not computed.
Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.
"""

import math
import time

import numpy as np

from jumpdiff.analytic import dirichlet_bottom, green_function, killed_survival
from jumpdiff.coupling import coupling_tail, mirror_exit_dominance
from jumpdiff.eigensolver import CharDeterminant, find_spectrum, gap_curve
from jumpdiff.experiments import invariant_limit_distance, threshold_locate
from jumpdiff.model import Interval, unit_spec
from jumpdiff.simulate import (
    RngStream,
    ensemble_tv,
    exit_time_ensemble,
    fit_rate,
    verify_pathwise_lemma,
)
from tests.test_analytic import green_oracle
from tests.test_eigensolver import shooting_det
from tests.test_experiments import write_config
from tests.test_model import make_spec

PI2 = math.pi**2
GAP_PLATEAU = 8 * PI2
GAP_DRIFTFREE = 2 * PI2


def report(number: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number:02d} {name}: {status} ({detail})")
    assert ok, f"criterion {number} failed: {detail}"


def test_01_eigensolver_plateau():
    t0 = time.time()
    curve = gap_curve(unit_spec(), [16.0, 20.0, 30.0, 40.0])
    elapsed = time.time() - t0
    worst = max(abs(gap - GAP_PLATEAU) for _, gap, _ in curve)
    all_complex = all(not is_real for _, _, is_real in curve)
    ok = worst < 1e-3 and all_complex and elapsed < 30.0
    report(1, "eigensolver-plateau", ok,
           f"max |gap - 8 pi^2| = {worst:.2e}, all complex: {all_complex}, "
           f"{elapsed:.1f}s")


def test_02_driftfree_anchor():
    t0 = time.time()
    rep = find_spectrum(unit_spec(0.0), 100.0)
    elapsed = time.time() - t0
    err = abs(rep.gap - GAP_DRIFTFREE)
    ok = err < 1e-6 and rep.gap_is_real and elapsed < 5.0
    report(2, "driftfree-anchor", ok,
           f"|gap - 2 pi^2| = {err:.2e}, real: {rep.gap_is_real}, {elapsed:.1f}s")


def test_03_threshold_conjecture():
    t0 = time.time()
    res = threshold_locate(unit_spec(), 1e-4)
    elapsed = time.time() - t0
    want = 2.0 * math.sqrt(3.0) * math.pi
    rel = abs(res.mu - want) / want
    ok = rel < 0.05 and elapsed < 120.0
    report(3, "threshold-conjecture", ok,
           f"located mu* = {res.mu:.4f} vs conjectured {want:.4f} "
           f"(rel {rel:.2%}, conjecture-consistent, not ground truth), "
           f"{elapsed:.1f}s")


def test_04_corollary3_inversion():
    gap20 = find_spectrum(unit_spec(20.0), 200.0).gap
    gap0 = find_spectrum(unit_spec(0.0), 100.0).gap
    lam0_20 = dirichlet_bottom(unit_spec(20.0))
    lam0_0 = dirichlet_bottom(unit_spec(0.0))
    ok = gap20 < lam0_20 and gap0 > lam0_0
    report(4, "corollary3-inversion", ok,
           f"mu=20: {gap20:.3f} < {lam0_20:.3f}; mu=0: {gap0:.3f} > {lam0_0:.3f}")


def test_05_invariant_limit():
    t0 = time.time()
    sups = [invariant_limit_distance(unit_spec(mu))[3] for mu in (5.0, 20.0, 60.0)]
    elapsed = time.time() - t0
    ok = sups[0] > sups[1] > sups[2] and sups[2] < 0.05 and elapsed < 10.0
    report(5, "invariant-limit", ok,
           "sup distances " + ", ".join(f"{s:.4f}" for s in sups)
           + f", {elapsed:.1f}s")


def test_06_exit_time_tail_rate():
    t0 = time.time()
    spec = unit_spec(1.0)
    taus, _ = exit_time_ensemble(spec, 0.5, 100_000, 1e-4, RngStream(606),
                                 horizon=1.7)
    grid = np.linspace(0.3, 1.5, 25)
    surv = np.array([(taus > t).mean() for t in grid])
    fit = fit_rate((grid, surv), (0.3, 1.5), noise_floor=20.0 / 100_000)
    elapsed = time.time() - t0
    want = PI2 / 2 + 0.5
    rel = abs(fit.rate - want) / want
    ok = rel < 0.10 and elapsed < 120.0
    report(6, "exit-time-tail-rate", ok,
           f"fitted {fit.rate:.3f} vs {want:.3f} (rel {rel:.2%}), {elapsed:.1f}s")


def test_07_coupling_tail_rates():
    t0 = time.time()
    grid20 = [0.01 * k for k in range(1, 16)]
    _, fit20 = coupling_tail(unit_spec(20.0), 0.25, 0.75, 100_000, 1e-4, grid20, 707)
    t20 = time.time() - t0
    t0 = time.time()
    grid0 = [0.04 * k for k in range(1, 16)]
    _, fit0 = coupling_tail(unit_spec(0.0), 0.25, 0.75, 100_000, 1e-4, grid0, 708)
    t0_run = time.time() - t0
    ok = (0.8 * GAP_PLATEAU <= fit20.rate <= 1.2 * GAP_PLATEAU
          and fit0.rate >= 0.8 * GAP_DRIFTFREE
          and t20 < 300.0 and t0_run < 300.0)
    report(7, "coupling-tail-rates", ok,
           f"mu=20: {fit20.rate:.2f} in [0.8, 1.2] x {GAP_PLATEAU:.2f} "
           f"({t20:.0f}s); mu=0: {fit0.rate:.2f} >= {0.8 * GAP_DRIFTFREE:.2f} "
           f"({t0_run:.0f}s)")


def test_08_coupling_inequality():
    ok_all = True
    details = []
    for mu, grid in ((0.0, [0.05 * k for k in range(1, 8)]),
                     (20.0, [0.02 * k for k in range(1, 9)])):
        spec = unit_spec(mu)
        n = 100_000
        curve = ensemble_tv(spec, 0.25, 0.75, grid, n, 64, 2e-4, 808)
        table, _ = coupling_tail(spec, 0.25, 0.75, n, 2e-4, grid, 809)
        worst = -math.inf
        for tv, p, se_p in zip(curve.tv, table.survival, table.standard_errors()):
            combined = math.sqrt(curve.se_scale() ** 2 + se_p**2)
            worst = max(worst, tv - p - 3.0 * combined)
        ok_all = ok_all and worst <= 0.0
        details.append(f"mu={mu:g}: max(TV - P - 3 SE) = {worst:.4f}")
    report(8, "coupling-inequality", ok_all, "; ".join(details))


def test_09_conditioned_path_squeeze():
    t0 = time.time()
    spec = unit_spec(20.0)
    ok = True
    details = []
    for n in (1, 2):
        fx, fy = verify_pathwise_lemma(spec, n, 3000, 1e-4, 909)
        ok = ok and fx >= 0.99 and fy <= 0.01
        details.append(f"n={n}: {fx:.4f}/{fy:.4f}")
    elapsed = time.time() - t0
    ok = ok and elapsed < 180.0
    report(9, "conditioned-path-squeeze", ok,
           "; ".join(details) + f" (need >= 0.99 / <= 0.01), {elapsed:.0f}s")


def test_10_mirror_dominance():
    n = 100_000
    ok = True
    details = []
    for y in (0.7, 0.9):
        rows = mirror_exit_dominance(Interval(0.0, 1.0), y, [0.05, 0.1, 0.2],
                                     n, 1010, dt=2e-4)
        for t, p_y, p_c in rows:
            se = math.sqrt(p_y * (1 - p_y) / n + p_c * (1 - p_c) / n)
            ok = ok and p_y <= p_c + 3.0 * se
        details.append(f"y={y}: " + ", ".join(f"{py:.3f}<={pc:.3f}"
                                              for _, py, pc in rows))
    report(10, "mirror-dominance", ok, "; ".join(details))


def test_11_oracle_equivalence_suite():
    t0 = time.time()
    rng = np.random.default_rng(1111)

    # characteristic determinant vs ODE shooting, 20 random cases
    worst_det = 0.0
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
        worst_det = max(worst_det, abs(got.real - want) / max(abs(want), 1e-12))
    ok_det = worst_det < 1e-6

    # Green's function vs the brute-force ODE construction
    worst_green = 0.0
    for _ in range(12):
        spec = make_spec(sigma=float(rng.uniform(0.6, 1.5)),
                         mu=float(rng.uniform(-8.0, 25.0)))
        x, y = (float(v) for v in rng.uniform(0.05, 0.95, size=2))
        got = green_function(spec, x, y)
        want = green_oracle(spec, x, y)
        worst_green = max(worst_green, abs(got - want) / max(abs(want), 1e-300))
    ok_green = worst_green < 1e-8

    # killed survival vs bridge-corrected Monte Carlo
    spec = unit_spec(0.0)
    n = 400_000
    taus, _ = exit_time_ensemble(spec, 0.5, n, 2.5e-4, RngStream(1112),
                                 horizon=1.0)
    p_hat = float((taus > 1.0).mean())
    se = math.sqrt(p_hat * (1 - p_hat) / n)
    diff = abs(killed_survival(spec, 0.5, 1.0) - p_hat)
    ok_mc = diff <= 3.0 * se

    elapsed = time.time() - t0
    ok = ok_det and ok_green and ok_mc and elapsed < 120.0
    report(11, "oracle-equivalence", ok,
           f"det rel {worst_det:.1e} (<1e-6), green rel {worst_green:.1e} "
           f"(<1e-8), survival |diff| {diff:.2e} <= 3 SE {3 * se:.2e}, "
           f"{elapsed:.0f}s")


def test_12_determinism(tmp_path):
    from jumpdiff.cli import main

    cfg1 = write_config(tmp_path, "d1.json", experiment="coupling-tail",
                        spec={"a": 0.0, "b": 1.0, "sigma": 1.0, "mu": 20.0,
                              "nu": [[0.5, 1.0]]},
                        t_grid=[0.02, 0.04, 0.06], n_paths=10_000, dt=5e-4,
                        seed=1212, out=str(tmp_path / "r1"))
    cfg2 = write_config(tmp_path, "d2.json", experiment="coupling-tail",
                        spec={"a": 0.0, "b": 1.0, "sigma": 1.0, "mu": 20.0,
                              "nu": [[0.5, 1.0]]},
                        t_grid=[0.02, 0.04, 0.06], n_paths=10_000, dt=5e-4,
                        seed=1212, out=str(tmp_path / "r2"))
    assert main(["coupling-tail", "--config", cfg1]) == 0
    assert main(["coupling-tail", "--config", cfg2]) == 0
    rerun_same = ((tmp_path / "r1" / "coupling-tail.csv").read_bytes()
                  .replace(b"r1", b"rX")
                  == (tmp_path / "r2" / "coupling-tail.csv").read_bytes()
                  .replace(b"r2", b"rX"))

    cfg3 = write_config(tmp_path, "d3.json", mu_grid=[0, 16, 20],
                        out=str(tmp_path / "r3"))
    assert main(["gap-sweep", "--config", cfg3, "--threads", "1"]) == 0
    once = (tmp_path / "r3" / "gap-sweep.csv").read_bytes()
    assert main(["gap-sweep", "--config", cfg3, "--threads", "3"]) == 0
    threads_same = once == (tmp_path / "r3" / "gap-sweep.csv").read_bytes()

    ok = rerun_same and threads_same
    report(12, "determinism", ok,
           f"rerun byte-identical: {rerun_same}, thread-count invariant: "
           f"{threads_same}")
