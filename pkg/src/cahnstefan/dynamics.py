"""Gradient-flow solvers in H^-1 with a per-step dissipation ledger.

Cahn-Hilliard: first-order stabilized semi-implicit stepping, diagonal in
Fourier space::

    (1 + tau eps^2 k^4 + tau S k^2) u_k^{n+1}
        = u_k^n - tau k^2 W'(u^n)_k + tau S k^2 u_k^n

Stefan limit: minimizing movements for F** in the H^-1 metric,
``u^{n+1} = argmin F**(v) + ||v - u^n||_{-1}^2 / (2 tau)``, solved by
Newton-CG with backtracking on that objective.

Every step appends a ledger row ``t, F, ||du/dt||_{-1}^2, slope^2,
residual`` where the residual is the signed defect in
``F(0) = F(t) + 1/2 int ||u_t||_{-1}^2 + 1/2 int slope^2``; the time integrals
are per-step sums of the difference quotient and the post-step slope.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .field import PeriodicField, workspace
from .potential import PotentialModel

log = logging.getLogger(__name__)

LEDGER_COLUMNS = ("t", "F", "dtnorm2", "slope2", "residual")
ENERGY_TOL = 1e-10


class SolverError(RuntimeError):
    """Run aborted; ``trajectory`` holds everything up to the last valid state."""

    def __init__(self, msg: str, trajectory: "Trajectory | None" = None):
        super().__init__(msg)
        self.trajectory = trajectory


class DivergenceError(SolverError):
    pass


class RangeExcursionError(SolverError):
    pass


class EnergyIncreaseError(SolverError):
    pass


class NonlinearSolverError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tau: float | None = None  # None: flow-specific default
    T_end: float = 0.01
    S: float | None = None  # None: automatic stabilization
    snapshot_stride: int = 100
    nonlinear_tol: float = 1e-10
    nonlinear_max_iter: int = 50
    check_energy: bool = True

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.S is not None and self.S < 0:
            raise ValueError("stabilization S must be nonnegative")
        if self.nonlinear_tol <= 0:
            raise ValueError("nonlinear_tol must be positive")
        if self.T_end <= 0 or self.snapshot_stride < 1 or self.nonlinear_max_iter < 1:
            raise ValueError("T_end, snapshot_stride and nonlinear_max_iter must be positive")


def default_tau_ch(eps: float) -> float:
    return min(1e-5, eps ** 2 * 1e-2)


DEFAULT_TAU_STEFAN = 1e-5


@dataclass
class Trajectory:
    eps: float  # 0 marks the Stefan flow
    times: list[float] = field(default_factory=list)
    snapshots: list[PeriodicField] = field(default_factory=list)
    rows: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    tau: float = 0.0
    S: float = 0.0
    nonlinear_iterations: list[int] = field(default_factory=list)

    @property
    def ledger(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(LEDGER_COLUMNS))

    @property
    def final(self) -> PeriodicField:
        return self.snapshots[-1]

    def snapshot_at(self, t: float) -> PeriodicField:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.snapshots[i]

    def write_ledger_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_COLUMNS)
            for row in self.rows:
                w.writerow(["%.17g" % x for x in row])


def dissipation_residual(traj: Trajectory, t: float) -> float:
    """|F(u(0)) - F(u(t)) - 1/2 int ||u_t||^2 - 1/2 int slope^2| at the last ledger time <= t."""
    led = traj.ledger
    if t > led[-1, 0] * (1 + 1e-12) + 1e-15:
        raise ValueError(f"t={t} is beyond the trajectory horizon {led[-1, 0]}")
    i = int(np.searchsorted(led[:, 0], t * (1 + 1e-12) + 1e-15, side="right")) - 1
    return abs(float(led[max(i, 0), 4]))


def _n_steps(T_end: float, tau: float) -> int:
    return max(int(math.ceil(T_end / tau - 1e-9)), 1)


class _Ledger:
    def __init__(self, traj: Trajectory, F0: float, slope2_0: float):
        self.traj = traj
        self.F0 = F0
        self.F = F0
        self.diss = 0.0
        traj.rows.append((0.0, F0, 0.0, slope2_0, 0.0))

    def record(self, t: float, tau: float, F: float, dtnorm2: float, slope2: float) -> float:
        self.diss += 0.5 * tau * (dtnorm2 + slope2)
        res = self.F0 - F - self.diss
        self.traj.rows.append((t, F, dtnorm2, slope2, res))
        increase = F - self.F
        self.F = F
        return increase


def _check_state(model, u, traj, step):
    if not np.all(np.isfinite(u)):
        raise DivergenceError(f"non-finite values at step {step}", traj)
    lo, hi = model.hull_domain
    if u.min() < lo or u.max() > hi:
        raise RangeExcursionError(
            f"state left hull domain {model.hull_domain} at step {step}: "
            f"range [{u.min():.6g}, {u.max():.6g}]", traj)


def auto_stabilization(model: PotentialModel, values: np.ndarray) -> float:
    return model.stabilizer(float(values.min()) - 1.0, float(values.max()) + 1.0)


def run_cahn_hilliard(model: PotentialModel, u0: PeriodicField, eps: float,
                      cfg: SolverConfig = SolverConfig()) -> Trajectory:
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    tau = cfg.tau if cfg.tau is not None else default_tau_ch(eps)
    n = u0.n
    ws = workspace(n)
    k2 = ws.k2
    ik = ws.derivative_symbol(1)
    traj = Trajectory(eps=eps, tau=tau)
    _check_state(model, u0.values, traj, 0)

    u = u0.values.copy()
    uh = ws.forward(u)
    S = cfg.S if cfg.S is not None else auto_stabilization(model, u)
    S_window = (float(u.min()) - 0.5, float(u.max()) + 0.5)
    traj.S = S
    denom = 1.0 + tau * eps ** 2 * k2 ** 2 + tau * S * k2

    def measure(uh, u):
        ux = ws.backward(ik * uh)
        F = float(np.mean(0.5 * eps ** 2 * ux ** 2 + model.W(u)))
        nl = ws.forward(model.dW(u))
        wh = nl + eps ** 2 * k2 * uh
        return F, ws.mode_sum(wh, k2), nl

    F, slope2, nl = measure(uh, u)
    ledger = _Ledger(traj, F, slope2)
    traj.times.append(0.0)
    traj.snapshots.append(PeriodicField(u, u0.m))

    steps = _n_steps(cfg.T_end, tau)
    for step in range(1, steps + 1):
        uh_new = (uh - tau * k2 * nl + tau * S * k2 * uh) / denom
        uh_new[0] = uh[0]
        u_new = ws.backward(uh_new)
        _check_state(model, u_new, traj, step)
        if cfg.S is None and (u_new.min() < S_window[0] or u_new.max() > S_window[1]):
            S = max(S, auto_stabilization(model, u_new))
            S_window = (min(S_window[0], float(u_new.min()) - 0.5),
                        max(S_window[1], float(u_new.max()) + 0.5))
            denom = 1.0 + tau * eps ** 2 * k2 ** 2 + tau * S * k2
            traj.S = S
            log.info("stabilization raised to S=%g at step %d", S, step)

        dtnorm2 = ws.mode_sum((uh_new - uh) / tau, ws.inv_k2)
        F, slope2, nl = measure(uh_new, u_new)
        t = step * tau
        increase = ledger.record(t, tau, F, dtnorm2, slope2)
        uh, u = uh_new, u_new
        if step % cfg.snapshot_stride == 0 or step == steps:
            traj.times.append(t)
            traj.snapshots.append(PeriodicField(u, u0.m))
        if cfg.check_energy and increase > ENERGY_TOL * (1 + abs(F)):
            raise EnergyIncreaseError(
                f"F_eps increased by {increase:.3e} at step {step} (S={S:g}); "
                "stabilization too small for this range", traj)
    return traj


class _MinimizingMovement:
    """One implicit step of the F** flow: argmin F**(v) + ||v - u||_{-1}^2 / (2 tau)."""

    def __init__(self, model: PotentialModel, n: int, tau: float, tol: float, max_iter: int):
        self.model = model
        self.ws = workspace(n)
        self.n = n
        self.tau = tau
        self.tol = tol
        self.max_iter = max_iter

    def objective(self, v, u):
        d = self.ws.forward(v - u)
        return float(np.mean(self.model.envelope(v))) + self.ws.mode_sum(d, self.ws.inv_k2) / (2 * self.tau)

    def residual(self, v, u):
        """G = v - u - tau (W**'(v))_xx and its H^-1 norm."""
        ws = self.ws
        gh = ws.forward(self.model.envelope_derivative(v))
        Gh = ws.forward(v - u) + self.tau * ws.k2 * gh
        Gh[0] = 0.0
        return Gh, math.sqrt(ws.mode_sum(Gh, ws.inv_k2))

    def solve(self, u: np.ndarray) -> tuple[np.ndarray, int, float]:
        ws, tau, n = self.ws, self.tau, self.n
        v = u.copy()
        Gh, r = self.residual(v, u)
        it = 0
        while r > self.tol:
            if it >= self.max_iter:
                raise NonlinearSolverError(
                    f"minimizing movement did not converge: H^-1 residual {r:.3e} after {it} iterations")
            it += 1
            c = self.model.envelope_second(v)
            cbar = float(np.mean(c))

            # Hessian of tau * objective on mean-zero fields: (-D^2)^{-1} + tau C
            def hess(x):
                x = x - x.mean()
                y = ws.backward(ws.forward(x) * ws.inv_k2) + tau * c * x
                return y - y.mean()

            prec_sym = np.zeros(len(ws.k))
            prec_sym[1:] = 1.0 / (ws.inv_k2[1:] + tau * cbar)

            def prec(x):
                return ws.backward(ws.forward(x - x.mean()) * prec_sym)

            A = LinearOperator((n, n), matvec=hess, dtype=float)
            P = LinearOperator((n, n), matvec=prec, dtype=float)
            rhs = -ws.backward(Gh * ws.inv_k2)
            delta, info = cg(A, rhs, M=P, rtol=min(1e-3, max(r, 1e-14)), maxiter=500)
            delta -= delta.mean()

            phi0 = self.objective(v, u)
            slope = float(np.dot(-rhs, delta)) / n / tau
            step = 1.0
            for _ in range(40):
                trial = v + step * delta
                if self.objective(trial, u) <= phi0 + 1e-4 * step * slope + 1e-15 * (1 + abs(phi0)):
                    break
                step *= 0.5
            v = trial
            Gh, r = self.residual(v, u)
        return v, it, r


def run_stefan(model: PotentialModel, u0: PeriodicField,
               cfg: SolverConfig = SolverConfig()) -> Trajectory:
    tau = cfg.tau if cfg.tau is not None else DEFAULT_TAU_STEFAN
    n = u0.n
    ws = workspace(n)
    traj = Trajectory(eps=0.0, tau=tau)
    _check_state(model, u0.values, traj, 0)
    mm = _MinimizingMovement(model, n, tau, cfg.nonlinear_tol, cfg.nonlinear_max_iter)

    def measure(u):
        F = float(np.mean(model.envelope(u)))
        g = model.envelope_derivative(u)
        return F, ws.mode_sum(ws.forward(g), ws.k2)

    u = u0.values.copy()
    F, slope2 = measure(u)
    ledger = _Ledger(traj, F, slope2)
    traj.times.append(0.0)
    traj.snapshots.append(PeriodicField(u, u0.m))
    mean0 = float(np.mean(u))

    steps = _n_steps(cfg.T_end, tau)
    for step in range(1, steps + 1):
        try:
            v, iters, _ = mm.solve(u)
        except NonlinearSolverError as exc:
            raise NonlinearSolverError(f"step {step}: {exc}", traj) from None
        v += mean0 - float(np.mean(v))  # Newton updates are mean-free up to roundoff
        _check_state(model, v, traj, step)
        traj.nonlinear_iterations.append(iters)
        dtnorm2 = ws.mode_sum(ws.forward((v - u) / tau), ws.inv_k2)
        F, slope2 = measure(v)
        t = step * tau
        increase = ledger.record(t, tau, F, dtnorm2, slope2)
        u = v
        if step % cfg.snapshot_stride == 0 or step == steps:
            traj.times.append(t)
            traj.snapshots.append(PeriodicField(u, u0.m))
        if cfg.check_energy and increase > ENERGY_TOL * (1 + abs(F)):
            raise EnergyIncreaseError(f"F** increased by {increase:.3e} at step {step}", traj)
    return traj


def with_tau(cfg: SolverConfig, tau: float) -> SolverConfig:
    return replace(cfg, tau=tau)
