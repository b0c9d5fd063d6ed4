"""Numerical audits of the eps -> 0 limit.

Young measures are replaced by windowed empirical value distributions; the
moments of a window are exact averages over its samples, the histogram is
kept for support and mass bookkeeping. All reports carry their tolerances
and render to CSV plus a one-line PASS/FAIL summary.
"""

from __future__ import annotations

import csv
import io
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (SolverConfig, Trajectory, default_tau_ch, run_cahn_hilliard,
                       run_stefan)
from .energy import energy_eps, energy_star, slope_eps, slope_star, slope_star_spectral
from .field import PeriodicField, h_minus1_norm_values
from .potential import PotentialModel
from .preparation import prepare_recovery

MIN_PERIODS_PER_WINDOW = 8


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([("%.17g" % x) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


@dataclass
class AuditReport:
    name: str
    passed: bool
    header: tuple[str, ...]
    rows: list[tuple]
    details: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        return _csv(self.header, self.rows)

    def summary(self) -> str:
        extra = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.details.items())
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} {extra}".rstrip()


# -- Young measures ---------------------------------------------------------

@dataclass
class EmpiricalYoungMeasure:
    windows: int
    bins: int
    edges: np.ndarray
    hist: np.ndarray  # windows x bins, row-stochastic
    samples: np.ndarray  # windows x (n / windows)
    M: float

    @property
    def support_per_window(self) -> list[tuple[float, float]]:
        return [(float(r.min()), float(r.max())) for r in self.samples]

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def moment(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """mu_x(f) per window."""
        vals = np.broadcast_to(np.asarray(f(self.samples), dtype=float), self.samples.shape)
        return np.mean(vals, axis=1)

    def variance(self) -> np.ndarray:
        return np.var(self.samples, axis=1)

    def mass_within(self, intervals: Sequence[tuple[float, float]]) -> np.ndarray:
        inside = np.zeros(self.samples.shape, dtype=bool)
        for a, b in intervals:
            inside |= (self.samples >= a) & (self.samples <= b)
        return inside.mean(axis=1)

    def occupied_bins(self) -> np.ndarray:
        return np.count_nonzero(self.hist, axis=1)


def _oscillation_period(values: np.ndarray) -> float:
    d = values - values.mean()
    s = np.sign(d)
    s = s[s != 0]
    crossings = np.count_nonzero(s != np.roll(s, 1)) if len(s) else 0
    return 2.0 / crossings if crossings else np.inf


def young_measure(fields: Sequence[PeriodicField], windows: int = 32, bins: int = 64) -> EmpiricalYoungMeasure:
    """Windowed value distribution of the last (finest eps) field."""
    if not fields:
        raise ValueError("young_measure needs at least one field")
    n = fields[-1].n
    if any(f.n != n for f in fields):
        raise ValueError("all fields must share the grid size")
    if n % windows:
        raise ValueError(f"window count {windows} must divide n={n}")
    M = max(float(np.max(np.abs(f.values))) for f in fields)
    pad = 1e-12 * (1 + M)
    edges = np.linspace(-M - pad, M + pad, bins + 1)
    samples = fields[-1].values.reshape(windows, n // windows)
    hist = np.empty((windows, bins))
    for i, row in enumerate(samples):
        counts, _ = np.histogram(row, bins=edges)
        hist[i] = counts / counts.sum()
    # only fields with in-window spread carry microstructure worth resolving
    period = _oscillation_period(fields[-1].values)
    spread = float(np.mean(np.var(samples, axis=1)))
    if spread > 1e-3 and 1.0 / windows < MIN_PERIODS_PER_WINDOW * period:
        warnings.warn(f"windows of width {1 / windows:.4g} hold fewer than {MIN_PERIODS_PER_WINDOW} "
                      f"oscillation periods (period ~ {period:.3g})", RuntimeWarning, stacklevel=2)
    return EmpiricalYoungMeasure(windows, bins, edges, hist, samples.copy(), M)


def audit_support_dichotomy(model: PotentialModel, eym: EmpiricalYoungMeasure, limit: PeriodicField,
                            tol: float = 0.05, dirac_var: float = 1e-3,
                            mass_fraction: float = 0.99) -> AuditReport:
    """Each window is near-Dirac or carried by closure(Sigma_G) dilated by tol;
    in every window mu(W**') must match W**'(limit)."""
    n = limit.n
    if n % eym.windows:
        raise ValueError("limit grid incompatible with the window count")
    lim = limit.values.reshape(eym.windows, n // eym.windows)
    mu_g = eym.moment(model.envelope_derivative)
    g_lim = np.mean(model.envelope_derivative(model.clip(lim)[0]), axis=1)
    var = eym.variance()
    dilated = model.sigma_G_dilated(tol)
    closed = [(a - 0.0, b + 0.0) for a, b in dilated]
    mass = eym.mass_within(closed) if closed else np.zeros(eym.windows)
    rows, violations = [], []
    for i in range(eym.windows):
        if var[i] <= dirac_var:
            kind = "dirac"
        elif mass[i] >= mass_fraction:
            kind = "sigma_G"
        else:
            kind = "violation"
        gap = abs(mu_g[i] - g_lim[i])
        ok = kind != "violation" and gap <= tol
        if not ok:
            violations.append((i, kind, gap))
        rows.append((i, kind, float(var[i]), float(mass[i]), float(mu_g[i]), float(g_lim[i]), float(gap)))
    return AuditReport(
        "support_dichotomy", not violations,
        ("window", "class", "variance", "sigma_G_mass", "mu_Wenv_prime", "Wenv_prime_limit", "gap"),
        rows, {"violations": len(violations), "max_gap": float(max(r[-1] for r in rows)),
               "min_sigma_G_mass": float(np.min(mass)), "tol": tol})


def audit_correlation(model: PotentialModel, eym: EmpiricalYoungMeasure,
                      l: Callable[[np.ndarray], np.ndarray], tol: float = 1e-3) -> AuditReport:
    """Excess of mu(l W') over mu(l) mu(W') per window, for nondecreasing l."""
    probe = np.linspace(float(eym.samples.min()), float(eym.samples.max()), 2049)
    lv = np.asarray(l(probe), dtype=float) * np.ones_like(probe)
    if np.any(np.diff(lv) < -1e-12 * (1 + np.max(np.abs(lv)))):
        raise ValueError("test function l must be nondecreasing on the attained range")

    def lw(v):
        return np.asarray(l(v), dtype=float) * model.dW(v)

    excess = eym.moment(lw) - eym.moment(l) * eym.moment(model.dW)
    worst = float(max(np.max(excess), 0.0))
    rows = [(i, float(e)) for i, e in enumerate(excess)]
    return AuditReport("correlation", worst <= tol, ("window", "excess"), rows,
                       {"max_excess": worst, "tol": tol})


# -- oscillation localization ----------------------------------------------

def critical_points(values: np.ndarray) -> np.ndarray:
    """Grid proxies for zeros of u_x: sign changes of centered differences,
    flat runs collapsed to their midpoint."""
    n = len(values)
    d = np.roll(values, -1) - np.roll(values, 1)
    scale = 1e-13 * (1 + np.max(np.abs(values)))
    s = np.where(d > scale, 1, np.where(d < -scale, -1, 0))
    nz = np.flatnonzero(s)
    if len(nz) == 0:
        return np.array([], dtype=int)
    out = []
    for p, q in zip(nz, np.roll(nz, -1)):
        if s[p] == s[q]:
            continue
        gap = (q - p) % n
        if gap == 0:
            continue
        if gap == 1:
            # adjacent opposite signs: take the extremal neighbour
            cand = (p, q)
            pick = max(cand, key=lambda j: values[j]) if s[p] > 0 else min(cand, key=lambda j: values[j])
            out.append(pick)
        else:
            out.append((p + gap // 2) % n)
    return np.unique(np.array(out, dtype=int))


def oscillation_audit(model: PotentialModel, f: PeriodicField, eps: float, e: float,
                      delta: float) -> AuditReport:
    """Pairs of critical points at distance <= delta must either stay inside
    Sigma_G^e in between or differ by less than e."""
    if e <= 0 or delta <= 0:
        raise ValueError("e and delta must be positive")
    v = f.values
    n = f.n
    crit = critical_points(v)
    dil = model.sigma_G_dilated(e)
    reach = int(np.floor(delta * n + 1e-9))
    rows = []
    for x in crit:
        for y in crit:
            gap = (y - x) % n
            if gap == 0 or gap > reach:
                continue
            jump = abs(v[y] - v[x])
            if jump < e:
                continue
            between = v[(x + np.arange(gap + 1)) % n]
            inside = np.zeros(between.shape, dtype=bool)
            for L, R in dil:
                inside |= (between > L) & (between < R)
            if not inside.all():
                rows.append((x / n, y / n, float(jump), int(np.count_nonzero(~inside))))
    return AuditReport("oscillation", not rows, ("x", "y", "jump", "points_outside"), rows,
                       {"critical_points": len(crit), "e": e, "delta": delta, "eps": eps})


def neighborhood_audit(model: PotentialModel, f: PeriodicField, eps: float, e: float,
                       delta_prime: float | None = None) -> AuditReport:
    """Points whose value is 2e away from Sigma_G keep a neighbourhood whose
    values stay e away. Reports the largest admissible neighbourhood radius
    (``inf`` when the condition holds on the whole torus)."""
    if e <= 0:
        raise ValueError("e must be positive")
    n = f.n
    dist = model.dist_to_sigma_G(f.values)
    premise = np.flatnonzero(dist >= 2 * e)
    bad = np.flatnonzero(dist < e)
    if len(premise) == 0 or len(bad) == 0:
        radius = float("inf")
    else:
        d = np.abs(premise[:, None] - bad[None, :])
        d = np.minimum(d, n - d)
        radius = float(d.min()) / n
    passed = delta_prime is None or radius >= delta_prime
    rows = [(len(premise), len(bad), radius)]
    return AuditReport("neighborhood", passed, ("premise_points", "near_sigma_points", "delta_max"), rows,
                       {"delta_max": radius, "vacuous": len(premise) == 0, "e": e})


# -- Gamma-liminf probe -----------------------------------------------------

def slope_tolerance(model: PotentialModel, target: PeriodicField) -> float:
    """Slack for comparing slopes at finite n.

    Twice the gap between the finite-difference and spectral evaluations of
    |grad F**|(target), plus the largest jump between neighbouring samples of
    the target times the Lipschitz constant of W**' on its range.
    """
    v = target.values
    lo, hi = float(v.min()), float(v.max())
    lip = model.lipschitz_envelope_derivative(lo, hi) if hi > lo else 0.0
    step = float(np.max(np.abs(np.roll(v, -1) - v)))
    return 2 * abs(slope_star(model, target) - slope_star_spectral(model, target)) + step * lip


def gamma_liminf_probe(model: PotentialModel, target: PeriodicField, eps_list: Sequence[float]) -> AuditReport:
    s_star = slope_star(model, target)
    tol = slope_tolerance(model, target)
    rows = []
    for eps in eps_list:
        u = prepare_recovery(model, target, eps)
        rows.append((eps, slope_eps(model, u, eps), s_star, h_minus1_norm_values(u.values - target.values),
                     energy_eps(model, u, eps)))
    min_slope = min(r[1] for r in rows)
    return AuditReport("gamma_liminf", min_slope >= s_star - tol,
                       ("eps", "slope_eps", "slope_star", "hminus1_dist", "F_eps"), rows,
                       {"min_slope_eps": min_slope, "slope_star": s_star, "tol_discretization": tol,
                        "tol_ok": tol < 0.05 * (1 + s_star)})


# -- trajectory convergence study -------------------------------------------

@dataclass
class ConvergenceRow:
    eps: float
    sup_hminus1: float
    slope_l2t: float
    energy_err: tuple[float, ...]
    runtime_s: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    checkpoints: tuple[float, ...]

    def __post_init__(self):
        eps = [r.eps for r in self.rows]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps must be strictly decreasing down the table")

    def column(self, name: str) -> np.ndarray:
        if name.startswith("energy_err_t"):
            k = int(name[len("energy_err_t"):]) - 1
            return np.array([r.energy_err[k] for r in self.rows])
        return np.array([getattr(r, name) for r in self.rows])

    def header(self) -> list[str]:
        return (["eps", "sup_hminus1", "slope_l2t"]
                + [f"energy_err_t{i + 1}" for i in range(len(self.checkpoints))] + ["runtime_s"])

    def to_csv(self, include_runtime: bool = True) -> str:
        header = self.header()
        rows = [[r.eps, r.sup_hminus1, r.slope_l2t, *r.energy_err, r.runtime_s] for r in self.rows]
        if not include_runtime:
            header = header[:-1]
            rows = [r[:-1] for r in rows]
        return _csv(header, rows)


def decreasing(col: Sequence[float], inversions: int = 0, slack: float = 0.0) -> bool:
    """Strictly decreasing, allowing ``inversions`` adjacent increases of at most ``slack`` (relative)."""
    bad = 0
    for a, b in zip(col, col[1:]):
        if b < a:
            continue
        if b <= a * (1 + slack):
            bad += 1
        else:
            return False
    return bad <= inversions


def _common_times(T_end: float, K: int) -> np.ndarray:
    return np.linspace(0.0, T_end, K + 1)


def _fit_tau(tau: float, dt: float) -> tuple[float, int]:
    steps = max(int(np.ceil(dt / tau - 1e-9)), 1)
    return dt / steps, steps


def convergence_study(model: PotentialModel, target: PeriodicField, eps_list: Sequence[float],
                      cfg: SolverConfig = SolverConfig(), T_end: float | None = None,
                      samples: int = 50, workers: int | None = None) -> ConvergenceTable:
    """Run CH for each eps from prepared data and the Stefan flow once; compare.

    Both flows are sampled on ``samples + 1`` common times. ``cfg.tau``, if
    given, is used by both flows (rounded down to divide the sampling step).
    """
    T = T_end if T_end is not None else cfg.T_end
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    times = _common_times(T, samples)
    dt = T / samples
    checkpoints = tuple(T * (i + 1) / 5 for i in range(5))
    check_idx = [int(round(c / dt)) for c in checkpoints]

    tau_s, stride_s = _fit_tau(cfg.tau if cfg.tau is not None else 1e-5, dt)
    stefan = run_stefan(model, target, SolverConfig(tau=tau_s, T_end=T, snapshot_stride=stride_s,
                                                    nonlinear_tol=cfg.nonlinear_tol,
                                                    nonlinear_max_iter=cfg.nonlinear_max_iter,
                                                    check_energy=cfg.check_energy))
    ref = stefan.snapshots
    ref_slope = np.array([slope_star(model, u) for u in ref])
    ref_energy = np.array([energy_star(model, u) for u in ref])

    def one(eps: float) -> ConvergenceRow:
        t0 = time.perf_counter()
        u0 = prepare_recovery(model, target, eps)
        tau_c, stride_c = _fit_tau(cfg.tau if cfg.tau is not None else default_tau_ch(eps), dt)
        traj = run_cahn_hilliard(model, u0, eps, SolverConfig(tau=tau_c, T_end=T, S=cfg.S,
                                                              snapshot_stride=stride_c,
                                                              check_energy=cfg.check_energy))
        snaps = traj.snapshots
        err = [h_minus1_norm_values(a.values - b.values) for a, b in zip(snaps, ref)]
        slopes = np.array([slope_eps(model, u, eps) for u in snaps])
        slope_l2t = float(np.trapezoid((slopes - ref_slope) ** 2, times))
        energy = [abs(energy_eps(model, snaps[i], eps) - ref_energy[i]) for i in check_idx]
        return ConvergenceRow(eps, float(max(err)), slope_l2t, tuple(energy), time.perf_counter() - t0)

    with ThreadPoolExecutor(max_workers=workers or 1) as pool:
        rows = list(pool.map(one, eps_list))
    return ConvergenceTable(rows, checkpoints)


def convergence_verdict(table: ConvergenceTable) -> AuditReport:
    h = table.column("sup_hminus1")
    s = table.column("slope_l2t")
    e = [table.column(f"energy_err_t{i + 1}") for i in range(len(table.checkpoints))]
    ok_h = decreasing(h, inversions=1, slack=0.10)
    ok_s = decreasing(s)
    ok_e = all(decreasing(col) for col in e)
    return AuditReport("convergence", ok_h and ok_s and ok_e, tuple(table.header()[:-1]),
                       [tuple(r) for r in np.column_stack([table.column("eps"), h, s, *e])],
                       {"hminus1_decreasing": ok_h, "slope_decreasing": ok_s, "energy_decreasing": ok_e})


# -- sweep-level invariants ---------------------------------------------------

def linf_bound_audit(fields: Sequence[PeriodicField]) -> AuditReport:
    """sup-norms along an eps-sequence must not trend upward."""
    vals = np.array([float(np.max(np.abs(f.values))) for f in fields])
    ok = bool(vals[-1] <= 1.1 * np.median(vals))
    return AuditReport("linf_bound", ok, ("index", "linf"), list(enumerate(vals.tolist())),
                       {"bound": float(vals.max())})


def chemical_potential_audit(model: PotentialModel, fields: Sequence[PeriodicField],
                             eps_list: Sequence[float]) -> AuditReport:
    """H^1 bound of w_eps and an L^2 Cauchy test on the last three eps."""
    from .energy import chemical_potential_values
    from .field import derivative_values

    ws = [chemical_potential_values(model, f.values, e) for f, e in zip(fields, eps_list)]
    h1 = [float(np.sqrt(np.mean(w ** 2) + np.mean(derivative_values(w, 1) ** 2))) for w in ws]
    inc = [float(np.sqrt(np.mean((a - b) ** 2))) for a, b in zip(ws, ws[1:])]
    last = inc[-2:]
    ok = len(last) < 2 or last[1] <= last[0]
    rows = [(e, h) for e, h in zip(eps_list, h1)]
    return AuditReport("chemical_potential", ok, ("eps", "h1_norm"), rows,
                       {"h1_max": max(h1), "last_increments": str([round(x, 8) for x in last])})
