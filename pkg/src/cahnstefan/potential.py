"""Potentials W, their convex envelope W** and the unstable sets.

A :class:`PotentialModel` bundles a C^2 potential with a tabulated lower
convex hull. Inside each affine piece of the hull (a component of the
global unstable set) the envelope is the bitangent line; elsewhere it is W
itself, so envelope values and slopes are exact outside the affine pieces
and never interpolated.
"""

from __future__ import annotations

import csv
import functools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

ScalarFn = Callable[[np.ndarray], np.ndarray]

Interval = tuple[float, float]

# relative threshold separating "W > W**" from roundoff
SIGMA_ETA = 1e-10
COLLINEAR_TOL = 1e-13
COLLINEAR_RUN = 8


@dataclass(frozen=True, eq=False)
class AffineSegment:
    """Maximal affine piece of W** with endpoints where W** touches W."""

    a: float
    b: float
    slope: float
    intercept: float  # W**(v) = intercept + slope * (v - a)

    def __call__(self, v):
        return self.intercept + self.slope * (np.asarray(v, dtype=float) - self.a)


@dataclass(frozen=True, eq=False)
class PotentialModel:
    W: ScalarFn
    dW: ScalarFn
    d2W: ScalarFn
    hull_domain: Interval
    grid: np.ndarray
    values: np.ndarray
    envelope_values: np.ndarray
    hull_nodes: list[tuple[float, float]]
    affine_segments: list[AffineSegment]
    sigma_G: list[Interval]
    sigma_L: list[Interval]
    growth_constant: float = 0.0
    growth_warning: bool = False
    name: str = "custom"
    _seg_bounds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bounds = np.array([(s.a, s.b) for s in self.affine_segments], dtype=float)
        object.__setattr__(self, "_seg_bounds", bounds.reshape(-1, 2))

    @property
    def grid_spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def _segment_index(self, v: np.ndarray) -> np.ndarray:
        """Index of the affine segment strictly containing v, or -1."""
        idx = np.full(v.shape, -1, dtype=int)
        for i, (a, b) in enumerate(self._seg_bounds):
            idx[(v > a) & (v < b)] = i
        return idx

    def in_domain(self, v) -> np.ndarray:
        lo, hi = self.hull_domain
        v = np.asarray(v, dtype=float)
        return (v >= lo) & (v <= hi)

    def clip(self, v) -> tuple[np.ndarray, bool]:
        """Clamp to the hull domain; the flag reports whether anything moved."""
        v = np.asarray(v, dtype=float)
        lo, hi = self.hull_domain
        out = np.clip(v, lo, hi)
        return out, bool(np.any(out != v))

    def envelope(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.W(v), dtype=float).copy()
        idx = self._segment_index(v)
        for i, seg in enumerate(self.affine_segments):
            sel = idx == i
            if np.any(sel):
                out[sel] = seg(v[sel])
        return out

    def envelope_derivative(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.dW(v), dtype=float).copy()
        idx = self._segment_index(v)
        for i, seg in enumerate(self.affine_segments):
            out[idx == i] = seg.slope
        return out

    def envelope_second(self, v) -> np.ndarray:
        """W**'' where it exists; zero on the affine pieces."""
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.d2W(v), dtype=float).copy()
        out[self._segment_index(v) >= 0] = 0.0
        return np.maximum(out, 0.0)

    def in_sigma_G(self, v) -> np.ndarray:
        return self._segment_index(np.asarray(v, dtype=float)) >= 0

    def in_sigma_G_closure(self, v, tol: float = 1e-12) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape, dtype=bool)
        for a, b in self.sigma_G:
            out |= (v >= a - tol * (1 + abs(a))) & (v <= b + tol * (1 + abs(b)))
        return out

    def dist_to_sigma_G(self, v) -> np.ndarray:
        """Distance from v to the closure of Sigma_G (inf if Sigma_G is empty)."""
        v = np.asarray(v, dtype=float)
        d = np.full(v.shape, np.inf)
        for a, b in self.sigma_G:
            d = np.minimum(d, np.maximum(np.maximum(a - v, v - b), 0.0))
        return d

    def sigma_G_dilated(self, rho: float) -> list[Interval]:
        """Open rho-neighbourhood of Sigma_G as merged disjoint intervals."""
        return merge_intervals([(a - rho, b + rho) for a, b in self.sigma_G])

    def component_of(self, v) -> np.ndarray:
        """Component label of Sigma_G containing v, -1 outside."""
        v = np.asarray(v, dtype=float)
        lab = np.full(v.shape, -1, dtype=int)
        for i, (a, b) in enumerate(self.sigma_G):
            lab[(v > a) & (v < b)] = i
        return lab

    def stabilizer(self, lo: float, hi: float, samples: int = 2049) -> float:
        """max W'' over [lo, hi], floored at zero."""
        v = np.linspace(lo, hi, samples)
        return float(max(np.max(self.d2W(v)), 0.0))

    def lipschitz_envelope_derivative(self, lo: float, hi: float) -> float:
        v = np.linspace(lo, hi, 4097)
        return float(np.max(self.envelope_second(v)))

    def envelope_table(self) -> np.ndarray:
        """Columns v, W, W**, W**', in_sigma_G."""
        v = self.grid
        return np.column_stack([
            v, self.values, self.envelope_values,
            self.envelope_derivative(v), self.in_sigma_G(v).astype(float),
        ])

    def write_envelope_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["v", "W", "W_env", "W_env_prime", "in_sigma_G"])
            for row in self.envelope_table():
                w.writerow(["%.17g" % row[0], "%.17g" % row[1], "%.17g" % row[2],
                            "%.17g" % row[3], int(row[4])])


def merge_intervals(intervals: Sequence[Interval]) -> list[Interval]:
    out: list[list[float]] = []
    for a, b in sorted(intervals):
        if out and a < out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def convex_envelope(samples) -> tuple[list[tuple[float, float]], list[AffineSegment]]:
    """Lower convex hull of sorted samples (v, W(v)) by monotone chain.

    Returns the hull vertices and the hull edges that pass strictly below an
    interior sample; those edges are the affine pieces of W**.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("convex_envelope needs at least 3 samples (v, W)")
    v, w = pts[:, 0], pts[:, 1]
    if np.any(np.diff(v) <= 0):
        raise ValueError("samples must be strictly increasing in v")

    hull: list[int] = []
    for i in range(len(v)):
        while len(hull) >= 2:
            o, p = hull[-2], hull[-1]
            cross = (v[p] - v[o]) * (w[i] - w[o]) - (w[p] - w[o]) * (v[i] - v[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)

    eta = SIGMA_ETA * (1 + float(np.max(np.abs(w))))
    segments = []
    for i, j in zip(hull[:-1], hull[1:]):
        if j - i < 2:
            continue
        slope = (w[j] - w[i]) / (v[j] - v[i])
        line = w[i] + slope * (v[i + 1:j] - v[i])
        if np.max(w[i + 1:j] - line) > eta:
            segments.append(AffineSegment(float(v[i]), float(v[j]), float(slope), float(w[i])))
    nodes = [(float(v[i]), float(w[i])) for i in hull]
    return nodes, segments


def _refine_bitangent(W, dW, d2W, seg: AffineSegment, h: float) -> AffineSegment:
    """Polish a grid-snapped bitangent to the exact common tangent."""

    def eqs(x):
        a, b = x
        return [dW(a) - dW(b), dW(a) * (b - a) - (W(b) - W(a))]

    def jac(x):
        a, b = x
        return [[d2W(a), -d2W(b)],
                [d2W(a) * (b - a), dW(a) - dW(b)]]

    sol = optimize.root(eqs, [seg.a, seg.b], jac=jac, method="hybr", options={"xtol": 1e-15})
    a, b = (float(t) for t in sol.x)
    if not sol.success or abs(a - seg.a) > 2 * h or abs(b - seg.b) > 2 * h or b <= a:
        return seg
    wa, wb = float(W(a)), float(W(b))
    return AffineSegment(a, b, (wb - wa) / (b - a), wa)


def _negative_runs(v: np.ndarray, f: np.ndarray, fn: ScalarFn) -> list[Interval]:
    neg = f < 0
    out = []
    i = 0
    n = len(v)
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        lo = v[i] if i == 0 else optimize.brentq(lambda t: float(fn(t)), v[i - 1], v[i], xtol=1e-15)
        hi = v[j] if j == n - 1 else optimize.brentq(lambda t: float(fn(t)), v[j], v[j + 1], xtol=1e-15)
        out.append((float(lo), float(hi)))
        i = j + 1
    return out


def _growth_check(v: np.ndarray, w: np.ndarray, dw: np.ndarray) -> tuple[float, bool]:
    # |W'| <= C (1 + W): flag a ratio that is still climbing at a tabulation end
    ratio = np.abs(dw) / (1.0 + w)
    C = float(np.max(ratio))
    k = max(len(v) // 20, 2)
    climbing = (ratio[0] > ratio[k] and ratio[0] >= C) or (ratio[-1] > ratio[-1 - k] and ratio[-1] >= C)
    return C, bool(climbing)


def build_custom(W: ScalarFn, dW: ScalarFn, d2W: ScalarFn, hull_domain: Interval,
                 n_hull: int = 4096, name: str = "custom") -> PotentialModel:
    """Tabulate envelope and unstable sets of a user potential.

    ``W``, ``dW`` and ``d2W`` must accept numpy arrays.
    """
    lo, hi = (float(t) for t in hull_domain)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"degenerate hull_domain {hull_domain!r}")
    if n_hull < 64:
        raise ValueError("n_hull must be at least 64")

    v = np.linspace(lo, hi, n_hull)
    w = np.asarray(W(v), dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("W is not finite on the hull domain")
    if w[0] <= w[1] or w[-1] <= w[-2]:
        raise ValueError("W is not coercive on hull_domain: it must increase towards both ends")

    d2 = np.diff(w, 2)
    flat = np.abs(d2) <= COLLINEAR_TOL
    run = 0
    for is_flat in flat:
        run = run + 1 if is_flat else 0
        if run >= COLLINEAR_RUN - 2:
            raise ValueError("W is affine on a sampled stretch; potentials must not be affine on any interval")

    h = float(v[1] - v[0])
    nodes, segments = convex_envelope(np.column_stack([v, w]))
    segments = [
        _refine_bitangent(W, dW, d2W, s, h) if (s.a > lo and s.b < hi) else s
        for s in segments
    ]

    env = w.copy()
    for s in segments:
        sel = (v > s.a) & (v < s.b)
        env[sel] = s(v[sel])

    sigma_G = [(s.a, s.b) for s in segments]
    sigma_L = _negative_runs(v, np.asarray(d2W(v), dtype=float), d2W)
    C, flag = _growth_check(v, w, np.asarray(dW(v), dtype=float))
    if flag:
        warnings.warn("growth condition |W'| <= C(1+W) looks violated near the tabulation ends",
                      RuntimeWarning, stacklevel=2)
    return PotentialModel(W=W, dW=dW, d2W=d2W, hull_domain=(lo, hi), grid=v, values=w,
                          envelope_values=env, hull_nodes=nodes, affine_segments=segments,
                          sigma_G=sigma_G, sigma_L=sigma_L, growth_constant=C,
                          growth_warning=flag, name=name)


def _dw_W(v):
    return (1.0 - np.square(v)) ** 2 / 4.0


def _dw_dW(v):
    v = np.asarray(v, dtype=float)
    return v ** 3 - v


def _dw_d2W(v):
    return 3.0 * np.square(v) - 1.0


@functools.lru_cache(maxsize=None)
def build_double_well(n_hull: int = 4096, domain: Interval = (-3.0, 3.0)) -> PotentialModel:
    """W(v) = (1 - v^2)^2 / 4 with analytic derivatives."""
    return build_custom(_dw_W, _dw_dW, _dw_d2W, domain, n_hull, name="double_well")


def envelope_derivative(model: PotentialModel, v: float) -> float:
    """W**'(v) for a scalar inside the hull domain."""
    if not model.in_domain(v):
        raise ValueError(f"v={v} outside hull domain {model.hull_domain}")
    return float(model.envelope_derivative(np.array([v]))[0])


def chord_slope(model: PotentialModel, a: float, b: float) -> float:
    return float((model.W(b) - model.W(a)) / (b - a))


def _bracket(model, a, b, s):
    wa = float(model.W(a))
    return lambda c: wa - np.asarray(model.W(c), dtype=float) + s * (np.asarray(c) - a)


def psi(model: PotentialModel, a: float, b: float, n_scan: int = 1024) -> float:
    """max over c in [a, b] of W(a) - W(c) + s (c - a), s the chord slope.

    Measures how far W is from concave on [a, b]; zero iff W lies above the
    chord everywhere.
    """
    if not a < b:
        raise ValueError("psi requires a < b")
    if not (model.in_domain(a) and model.in_domain(b)):
        raise ValueError("psi arguments outside the hull domain")
    s = chord_slope(model, a, b)
    g = _bracket(model, a, b, s)
    c = np.linspace(a, b, n_scan)
    vals = g(c)
    i = int(np.argmax(vals))
    best = max(float(vals[i]), 0.0)
    lo, hi = c[max(i - 1, 0)], c[min(i + 1, n_scan - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -float(g(t)), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


@functools.lru_cache(maxsize=32)
def _psi_table(model: PotentialModel, M: float, n_grid: int) -> tuple[np.ndarray, np.ndarray]:
    # psi on all grid pairs, maximizing over grid points c between them
    x = np.linspace(-M, M, n_grid)
    w = np.asarray(model.W(x), dtype=float)
    table = np.full((n_grid, n_grid), np.nan)
    for i in range(n_grid - 1):
        X = x[i:] - x[i]
        Wv = w[i:]
        s = np.empty_like(X)
        s[1:] = (Wv[1:] - w[i]) / X[1:]
        s[0] = 0.0
        B = w[i] - Wv[:, None] + X[:, None] * s[None, :]
        mask = np.triu(np.ones((len(X), len(X)), dtype=bool))  # row k <= column j
        B = np.where(mask, B, -np.inf)
        table[i, i + 1:] = np.maximum(B.max(axis=0)[1:], 0.0)
    return x, table


def omega(model: PotentialModel, rho: float, M: float, n_grid: int = 512) -> float:
    """Infimum of psi over [a,b] in [-M,M], b-a >= rho, not inside Sigma_G^rho.

    Returns ``inf`` when no admissible interval exists. Evaluated on an
    ``n_grid`` lattice so that it is exactly nondecreasing in rho.
    """
    if rho <= 0 or M <= 0:
        raise ValueError("omega requires rho > 0 and M > 0")
    lo, hi = model.hull_domain
    if -M < lo or M > hi:
        raise ValueError("[-M, M] must lie inside the hull domain")
    x, table = _psi_table(model, float(M), int(n_grid))
    a = x[:, None]
    b = x[None, :]
    tol = 1e-12 * (1 + M)
    ok = (b - a >= rho - tol) & np.isfinite(table)
    inside = np.zeros_like(ok)
    for L, R in model.sigma_G_dilated(rho):
        inside |= (a > L) & (b < R)
    ok &= ~inside
    if not np.any(ok):
        return float("inf")
    return float(np.min(table[ok]))
