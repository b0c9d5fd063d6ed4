"""Acceptance criteria 1-14. Each test records one PASS/FAIL line; the lines
are collected into the "acceptance criteria" section of the pytest summary."""

import time
import timeit
import warnings

import numpy as np
import pytest

from cahnstefan.analysis import (audit_correlation, audit_support_dichotomy, convergence_study,
                                 convergence_verdict, gamma_liminf_probe, young_measure)
from cahnstefan.cli import main
from cahnstefan.dynamics import SolverConfig, dissipation_residual, run_cahn_hilliard, run_stefan
from cahnstefan.energy import energy_eps
from cahnstefan.field import PeriodicField, h_minus1_norm, h_minus1_norm_values
from cahnstefan.potential import build_custom, omega, psi
from cahnstefan.preparation import prepare_recovery

TWO_PI = 2 * np.pi


def sinusoid(m, amp, k=1, n=512):
    return PeriodicField.from_function(lambda x: m + amp * np.sin(TWO_PI * k * x), n)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*args, **kw)


@pytest.fixture(scope="module")
def asymmetric():
    """Double well with a cubic and a linear tilt; unequal well depths."""
    return build_custom(lambda v: (1 - v ** 2) ** 2 / 4 + 0.05 * v ** 3 + 0.1 * v,
                        lambda v: v ** 3 - v + 0.15 * v ** 2 + 0.1,
                        lambda v: 3 * v ** 2 - 1 + 0.3 * v, (-3, 3))


CANONICAL = {
    "zero": PeriodicField.constant(0.0),
    "convex_sine": sinusoid(1.6, 0.3),
    "mixed_sine": sinusoid(0.0, 1.5),
}


def test_01_hminus1_oracle(verdict):
    f = sinusoid(0.0, 1.0, n=256)
    val = h_minus1_norm(f) ** 2
    rel = abs(val - 1 / (8 * np.pi ** 2)) * 8 * np.pi ** 2
    h_minus1_norm(f)
    per_call = min(timeit.repeat(lambda: h_minus1_norm(f), number=100, repeat=5)) / 100
    verdict("1 H^-1 oracle", rel <= 1e-10 and per_call < 1e-3,
            f"relative error {rel:.2e}, {per_call * 1e6:.1f} us per call")


def test_02_convex_envelope(verdict, dw):
    v = dw.grid
    env = dw.envelope_values
    inside = np.abs(v) <= 1
    max_env = float(np.max(np.abs(env[inside])))
    (a, b), = dw.sigma_G
    h = dw.grid_spacing
    d2 = float(np.min(env[:-2] - 2 * env[1:-1] + env[2:]))
    ok = len(v) == 4096 and max_env <= 1e-8 and abs(a + 1) <= h and abs(b - 1) <= h and d2 >= -1e-12
    verdict("2 convex envelope", ok,
            f"max|W**| on [-1,1] = {max_env:.1e}, Sigma_G = ({a:.6f}, {b:.6f}), min second difference {d2:.1e}")


def test_03_mass_conservation(verdict, dw):
    u0 = PeriodicField.from_function(lambda x: 0.2 + 1.3 * np.sin(TWO_PI * x) + 0.2 * np.cos(3 * TWO_PI * x))
    cfg = SolverConfig(tau=1e-5, T_end=0.1, snapshot_stride=1)
    drift = {}
    for name, traj in (("CH", run_cahn_hilliard(dw, u0, 0.05, cfg)), ("Stefan", run_stefan(dw, u0, cfg))):
        assert len(traj.rows) - 1 == 10 ** 4
        drift[name] = max(abs(s.mean - u0.mean) for s in traj.snapshots)
    verdict("3 mass conservation", max(drift.values()) <= 1e-12,
            ", ".join(f"{k} max drift {v:.1e}" for k, v in drift.items()) + " over 1e4 steps")


def test_04_energy_stability(verdict, dw, asymmetric):
    matrix = [
        ("double well, wrinkled zero", dw, PeriodicField.constant(0.0), True),
        ("double well, mixed sine", dw, sinusoid(0.1, 1.4), False),
        ("asymmetric well, two-mode data", asymmetric,
         PeriodicField.from_function(lambda x: 0.3 * np.sin(TWO_PI * x) + 0.9 * np.cos(2 * TWO_PI * x)), True),
    ]
    worst = -np.inf
    for _, model, target, wrinkle_it in matrix:
        for eps in (0.1, 0.05, 0.025):
            u0 = quiet(prepare_recovery, model, target, eps) if wrinkle_it else target
            traj = run_cahn_hilliard(model, u0, eps, SolverConfig(T_end=5e-3, check_energy=False))
            F = traj.ledger[:, 1]
            worst = max(worst, float(np.max(np.diff(F) / (1 + np.abs(F[1:])))))
    verdict("4 energy stability", worst <= 1e-10,
            f"largest relative per-step change {worst:.1e} over 3 pairs x 3 eps")


def test_05_dissipation_identity(verdict, dw, convex_sine):
    start = time.perf_counter()
    ratios = {}
    for name, flow in (("CH", lambda c: run_cahn_hilliard(dw, convex_sine, 0.1, c)),
                       ("Stefan", lambda c: run_stefan(dw, convex_sine, c))):
        res = [dissipation_residual(flow(SolverConfig(tau=tau, T_end=0.01, snapshot_stride=10 ** 6)), 0.01)
               for tau in (1e-5, 5e-6, 2.5e-6)]
        ratios[name] = [res[0] / res[1], res[1] / res[2]]
    elapsed = time.perf_counter() - start
    ok = all(1.5 <= r <= 2.5 for rs in ratios.values() for r in rs) and elapsed < 30
    verdict("5 dissipation identity", ok,
            ", ".join(f"{k} ratios {rs[0]:.3f} {rs[1]:.3f}" for k, rs in ratios.items())
            + f", {elapsed:.1f} s")


def test_06_linear_rates(verdict, dw):
    eps, k, amp = 0.1, TWO_PI, 1e-6
    errors = {}
    for m, tau in ((0.0, 1e-5), (2.0, 1e-6)):
        u0 = sinusoid(m, amp)
        traj = run_cahn_hilliard(dw, u0, eps, SolverConfig(tau=tau, T_end=10 * tau, snapshot_stride=1))
        a = np.array([2 * abs(np.fft.rfft(s.values)[1]) / s.n for s in traj.snapshots])
        rates = (a[1:] / a[:-1] - 1) / tau
        sigma = -k ** 2 * (dw.d2W(m) + eps ** 2 * k ** 2)
        errors[m] = float(np.max(np.abs(rates / sigma - 1)))
        assert np.sign(rates).tolist() == [np.sign(sigma)] * 10
    verdict("6 spinodal growth and decay", max(errors.values()) <= 0.01,
            f"relative rate error {errors[0.0]:.2e} (m=0, growth), {errors[2.0]:.2e} (m=2, decay)")


def test_07_gamma_recovery(verdict, dw):
    start = time.perf_counter()
    zero = PeriodicField.constant(0.0)
    schedule = (0.04, 0.02, 0.01, 0.005)
    fields = [prepare_recovery(dw, zero, e) for e in schedule]
    F = [energy_eps(dw, u, e) for u, e in zip(fields, schedule)]
    dist = [h_minus1_norm(u) for u in fields]
    elapsed = time.perf_counter() - start
    ok = (all(f > 0 for f in F) and all(b < a for a, b in zip(F, F[1:]))
          and all(f <= 2 * e ** 0.25 for f, e in zip(F, schedule))
          and all(b < a for a, b in zip(dist, dist[1:])) and elapsed < 5)
    verdict("7 Gamma-recovery", ok,
            "F = " + " ".join(f"{f:.4f}" for f in F) + ", dist = " + " ".join(f"{d:.5f}" for d in dist)
            + f", {elapsed:.2f} s")


def test_08_stefan_stationarity(verdict, dw):
    u0 = PeriodicField.from_function(lambda x: 0.8 * np.sin(TWO_PI * x) * np.cos(3 * TWO_PI * x))
    cfg = SolverConfig(T_end=0.01, snapshot_stride=1)
    traj = run_stefan(dw, u0, cfg)
    dist = max(h_minus1_norm_values(s.values - u0.values) for s in traj.snapshots)
    verdict("8 Stefan stationarity", np.max(np.abs(u0.values)) <= 0.8 and dist <= 10 * cfg.nonlinear_tol,
            f"max H^-1 distance {dist:.1e} over {len(traj.snapshots)} snapshots to t = 0.01")


def test_09_trajectory_convergence(verdict, dw, convex_sine):
    start = time.perf_counter()
    table = convergence_study(dw, convex_sine, (0.1, 0.05, 0.025), SolverConfig(tau=5e-7), T_end=0.01,
                              workers=3)
    elapsed = time.perf_counter() - start
    rep = convergence_verdict(table)
    cols = "; ".join(f"{name} " + " ".join(f"{x:.3e}" for x in table.column(name))
                     for name in ("sup_hminus1", "slope_l2t", "energy_err_t1", "energy_err_t5"))
    verdict("9 trajectory convergence", rep.passed and elapsed < 180, f"{cols}; {elapsed:.1f} s")


def test_10_gamma_liminf(verdict, dw):
    lines, ok = [], True
    for name, target in CANONICAL.items():
        rep = gamma_liminf_probe(dw, target, (0.04, 0.02, 0.01, 0.005))
        d = rep.details
        ok &= rep.passed and d["tol_ok"]
        lines.append(f"{name} min slope {d['min_slope_eps']:.4f} vs {d['slope_star']:.4f} "
                     f"(tol {d['tol_discretization']:.3g})")
    verdict("10 Gamma-liminf of slopes", ok, "; ".join(lines))


def test_11_young_dichotomy(verdict, dw, convex_sine):
    zero = PeriodicField.constant(0.0)
    wrinkled = [quiet(prepare_recovery, dw, zero, e) for e in (0.02, 0.01, 0.005)]
    eym = quiet(young_measure, wrinkled)
    rep = audit_support_dichotomy(dw, eym, zero, tol=0.05)
    mass = float(np.min(eym.mass_within(dw.sigma_G_dilated(0.05))))
    smooth_var = float(np.max(young_measure([convex_sine]).variance()))
    ok = rep.passed and mass >= 0.99 and rep.details["max_gap"] <= 0.05 and smooth_var <= 1e-3
    verdict("11 Young-measure dichotomy", ok,
            f"wrinkled: min Sigma_G mass {mass:.4f}, max |mu(W**')-W**'(u)| {rep.details['max_gap']:.1e}; "
            f"smooth: max window variance {smooth_var:.1e}")


def test_12_correlation(verdict, dw):
    tests = {"identity": lambda v: v, "tanh": np.tanh, "ramp": lambda v: np.clip(v, -0.5, 0.5)}
    dirac = young_measure([PeriodicField.constant(1.7, 256)], windows=8)
    atoms = young_measure([PeriodicField(np.where(np.arange(256) % 2, 1.0, -1.0))], windows=8)
    worst = max(audit_correlation(dw, eym, l).details["max_excess"]
                for eym in (dirac, atoms) for l in tests.values())
    wrinkled = [quiet(prepare_recovery, dw, PeriodicField.constant(0.0), e) for e in (0.02, 0.01, 0.005)]
    reported = audit_correlation(dw, quiet(young_measure, wrinkled), lambda v: v).details["max_excess"]
    verdict("12 correlation inequality", worst <= 1e-3,
            f"max excess {worst:.1e} on Dirac and two-atom windows; wrinkled sweep {reported:.3g} (reported)")


def test_13_psi_omega(verdict, dw):
    rng = np.random.default_rng(2024)
    pairs = np.sort(rng.uniform(-3, 3, (10 ** 4, 2)), axis=1)
    pairs = pairs[pairs[:, 1] > pairs[:, 0]]
    min_psi = min(psi(dw, a, b) for a, b in pairs)
    concave = psi(dw, -0.4, 0.4)
    p12 = psi(dw, 1.0, 2.0)
    om = np.array([omega(dw, r, 2.0) for r in np.geomspace(0.05, 1.0, 20)])
    ok = (min_psi >= 0 and concave <= 1e-12 and abs(p12 - 0.746212387355) <= 1e-6
          and np.all(np.diff(om) >= 0) and np.all(om > 0))
    verdict("13 psi and omega", ok,
            f"min psi {min_psi:.1e} on {len(pairs)} pairs, psi(-0.4,0.4) = {concave:.1e}, "
            f"psi(1,2) = {p12:.9f}, omega {om[0]:.2e} .. {om[-1]:.3f}")


def test_14_sweep_determinism(verdict, tmp_path):
    cfg = tmp_path / "sweep.ini"
    cfg.write_text("[grid]\nn = 128\n[run]\neps_list = 0.1, 0.05\ntau = 1e-5\nT_end = 1e-3\nsamples = 10\n"
                   "workers = 2\n[target]\nkind = noise\nm = 1.6\namplitude = 0.3\n")
    tables = []
    for out in ("a", "b"):
        main(["sweep", "--config", str(cfg), "--out", str(tmp_path / out), "--seed", "5"])
        lines = (tmp_path / out / "convergence.csv").read_text().splitlines()
        tables.append("\n".join(line.rsplit(",", 1)[0] for line in lines))
    summaries = [(tmp_path / o / "summary.txt").read_bytes() for o in ("a", "b")]
    verdict("14 sweep determinism", tables[0] == tables[1] and summaries[0] == summaries[1],
            f"{len(tables[0].splitlines()) - 1} rows identical with the runtime column dropped")
