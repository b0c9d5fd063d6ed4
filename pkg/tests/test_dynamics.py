from pathlib import Path

import numpy as np
import pytest

from cahnstefan.dynamics import (DivergenceError, EnergyIncreaseError, LEDGER_COLUMNS,
                                 NonlinearSolverError, RangeExcursionError, SolverConfig, SolverError,
                                 auto_stabilization, default_tau_ch, dissipation_residual,
                                 run_cahn_hilliard, run_stefan)
from cahnstefan.field import PeriodicField, h_minus1_norm_values

TWO_PI = 2 * np.pi
DATA = Path(__file__).parent / "data"


def mode1(u: np.ndarray) -> float:
    return 2 * abs(np.fft.rfft(u)[1]) / len(u)


def scheme_factor(k, W2, eps, tau, S):
    """Per-step amplification of one Fourier mode under the linearized scheme."""
    k2 = k * k
    return (1 + tau * S * k2 - tau * k2 * W2) / (1 + tau * eps ** 2 * k2 ** 2 + tau * S * k2)


def test_config_validation():
    for bad in (dict(tau=0.0), dict(S=-1.0), dict(nonlinear_tol=0.0), dict(T_end=0.0),
                dict(snapshot_stride=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert default_tau_ch(0.1) == 1e-5 and default_tau_ch(0.01) == pytest.approx(1e-6)


def test_constant_is_an_equilibrium_of_both_flows(dw):
    u0 = PeriodicField.constant(0.3, 128)
    cfg = SolverConfig(tau=1e-4, T_end=0.01, snapshot_stride=10)
    for traj in (run_cahn_hilliard(dw, u0, 0.05, cfg), run_stefan(dw, u0, cfg)):
        led = traj.ledger
        assert np.all(led[:, 3] == 0.0) and np.ptp(led[:, 1]) == 0.0
        assert max(np.max(np.abs(s.values - 0.3)) for s in traj.snapshots) <= 1e-14
        assert dissipation_residual(traj, 0.01) == 0.0


def test_ledger_layout(dw, convex_sine, tmp_path):
    traj = run_cahn_hilliard(dw, convex_sine, 0.1, SolverConfig(T_end=1e-4, snapshot_stride=3))
    assert traj.ledger.shape == (11, 5)
    assert traj.times == pytest.approx([0, 3e-5, 6e-5, 9e-5, 1e-4])
    traj.write_ledger_csv(tmp_path / "ledger.csv")
    lines = (tmp_path / "ledger.csv").read_text().splitlines()
    assert lines[0] == ",".join(LEDGER_COLUMNS) and len(lines) == 12
    with pytest.raises(ValueError):
        dissipation_residual(traj, 1.0)


def test_mass_conserved_by_both_flows(dw):
    u0 = PeriodicField.from_function(lambda x: 0.2 + 0.9 * np.sin(TWO_PI * x) * np.cos(TWO_PI * 3 * x))
    cfg = SolverConfig(T_end=2e-3, snapshot_stride=1)
    for traj in (run_cahn_hilliard(dw, u0, 0.05, cfg), run_stefan(dw, u0, cfg)):
        assert max(abs(s.mean - u0.mean) for s in traj.snapshots) <= 1e-12


def test_convex_mode_decays_at_the_scheme_rate(dw):
    m, amp, eps, tau = 2.0, 1e-6, 0.1, 1e-5
    u0 = PeriodicField.from_function(lambda x: m + amp * np.sin(TWO_PI * x))
    traj = run_cahn_hilliard(dw, u0, eps, SolverConfig(tau=tau, T_end=10 * tau, snapshot_stride=1))
    a = np.array([mode1(s.values) for s in traj.snapshots])
    assert np.all(np.diff(a) < 0)
    expected = scheme_factor(TWO_PI, dw.d2W(m), eps, tau, traj.S)
    assert np.allclose(a[1:] / a[:-1], expected, rtol=1e-8)


def test_spinodal_mode_grows(dw):
    u0 = PeriodicField.from_function(lambda x: 1e-2 * np.sin(TWO_PI * x))
    traj = run_cahn_hilliard(dw, u0, 0.01, SolverConfig(T_end=1e-3, snapshot_stride=100))
    a = np.array([mode1(s.values) for s in traj.snapshots])
    assert np.all(np.diff(a) > 0)
    expected = scheme_factor(TWO_PI, -1.0, 0.01, traj.tau, traj.S)
    assert a[1] / a[0] == pytest.approx(expected ** 100, rel=1e-3)


def test_auto_stabilization_covers_the_range(dw):
    assert auto_stabilization(dw, np.array([1.3, 1.9])) == pytest.approx(dw.d2W(2.9), rel=1e-9)


def test_range_excursion_is_rejected(dw):
    with pytest.raises(RangeExcursionError):
        run_cahn_hilliard(dw, PeriodicField.constant(3.5, 64), 0.1)


def test_unstable_configuration_aborts_with_partial_trajectory(dw):
    u0 = PeriodicField.from_function(lambda x: 2 + 0.1 * np.sin(TWO_PI * 40 * x), 128)
    with pytest.raises(EnergyIncreaseError) as info:
        run_cahn_hilliard(dw, u0, 0.01, SolverConfig(tau=1e-3, S=0.0, T_end=1.0))
    assert len(info.value.trajectory.rows) >= 1
    with pytest.raises((DivergenceError, RangeExcursionError)):
        run_cahn_hilliard(dw, u0, 0.01, SolverConfig(tau=1e-3, S=0.0, T_end=1.0, check_energy=False))


def test_stefan_reports_nonconvergence(dw, convex_sine):
    with pytest.raises(NonlinearSolverError) as info:
        run_stefan(dw, convex_sine, SolverConfig(nonlinear_tol=1e-300, nonlinear_max_iter=2, T_end=1e-4))
    assert isinstance(info.value, SolverError) and "residual" in str(info.value)


def test_stefan_is_stationary_on_the_wells(dw):
    u0 = PeriodicField.from_function(lambda x: 0.8 * np.sin(TWO_PI * x) ** 3)
    cfg = SolverConfig(T_end=2e-3, snapshot_stride=1)
    traj = run_stefan(dw, u0, cfg)
    dist = max(h_minus1_norm_values(s.values - u0.values) for s in traj.snapshots)
    assert dist <= 10 * cfg.nonlinear_tol
    assert sum(traj.nonlinear_iterations) == 0


def test_stefan_matches_explicit_difference_scheme(dw, convex_sine):
    ref = np.loadtxt(DATA / "stefan_fd_t0005.csv", delimiter=",", skiprows=1)[:, 1]
    traj = run_stefan(dw, convex_sine, SolverConfig(tau=2e-6, T_end=0.005, snapshot_stride=10 ** 6))
    assert np.sqrt(np.mean((traj.final.values - ref) ** 2)) <= 1e-4


def test_stefan_contracts_in_hminus1(dw):
    cfg = SolverConfig(T_end=2e-3, snapshot_stride=20)
    pairs = [
        (lambda x: 1.6 + 0.3 * np.sin(TWO_PI * x), lambda x: 1.6 + 0.2 * np.cos(TWO_PI * 2 * x)),
        (lambda x: 1.5 * np.sin(TWO_PI * x), lambda x: 1.5 * np.sin(TWO_PI * x) + 0.3 * np.cos(TWO_PI * x)),
    ]
    for f, g in pairs:
        u0, v0 = PeriodicField.from_function(f), PeriodicField.from_function(g)
        d0 = h_minus1_norm_values(u0.values - v0.values)
        tu, tv = run_stefan(dw, u0, cfg), run_stefan(dw, v0, cfg)
        d = [h_minus1_norm_values(a.values - b.values) for a, b in zip(tu.snapshots, tv.snapshots)]
        assert max(d) <= d0 * (1 + 10 * cfg.nonlinear_tol)
        assert d[-1] < d0


def test_energy_never_increases(dw):
    u0 = PeriodicField.from_function(lambda x: 0.1 * np.sin(TWO_PI * x) + 0.05 * np.cos(TWO_PI * 7 * x))
    traj = run_cahn_hilliard(dw, u0, 0.03, SolverConfig(T_end=5e-3))
    F = traj.ledger[:, 1]
    assert np.all(np.diff(F) <= 1e-10 * (1 + np.abs(F[1:])))
