"""Well-prepared initial data and wrinkled microstructures.

Wherever the datum takes values in a component (a, b) of Sigma_G, it is
replaced by a pulse-width modulated two-phase profile between a and b:
cells of length ~ eps^(1/2) each hold a run of phase ``a`` whose length
follows the lever rule for the cell's mean, and phases are joined by
linear ramps of width eps^(3/4). Since W** is affine on [a, b], such a
profile keeps F** fixed while its H^-1 distance to the datum is O(cell).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy import optimize

from .field import PeriodicField
from .potential import PotentialModel

WAVELENGTH_EXPONENT = 0.5
TRANSITION_EXPONENT = 0.75


@dataclass
class TwoPhaseRegion:
    start: int  # first grid index (may wrap past n)
    length: int  # number of grid points
    component: int
    a: float
    b: float
    fraction: float  # lever-rule share of phase a: fraction*a + (1-fraction)*b = region mean
    cell_fractions: list[float] = dc_field(default_factory=list)
    kept: bool = False  # too short to host one wavelength
    shift: float = 0.0  # fraction offset applied to restore the sampled mean


@dataclass
class RecoveryPlan:
    eps: float
    n: int
    lambda_osc: float
    delta_trans: float
    target_mean: float
    regions: list[TwoPhaseRegion]
    field: PeriodicField | None = None
    notes: list[str] = dc_field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not any(not r.kept for r in self.regions)

    def to_text(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k != "field"}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "RecoveryPlan":
        d = json.loads(text)
        d["regions"] = [TwoPhaseRegion(**r) for r in d["regions"]]
        return cls(**d)


def _runs(mask: np.ndarray, labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal cyclic runs (start, length, label) of mask with a constant label."""
    n = len(mask)
    prev = np.roll(np.arange(n), 1)
    starts = np.flatnonzero(mask & (~mask[prev] | (labels[prev] != labels)))
    if len(starts) == 0:
        return [(0, n, int(labels[0]))] if mask.all() else []
    is_start = np.zeros(n, dtype=bool)
    is_start[starts] = True
    runs = []
    for s in starts:
        length = 1
        while length < n:
            j = (s + length) % n
            if not mask[j] or is_start[j]:
                break
            length += 1
        runs.append((int(s), length, int(labels[s])))
    return runs


def _bump(d: np.ndarray, w: float, delta: float) -> np.ndarray:
    """Phase-a indicator of a run of width w seen at distance d from its centre.

    A trapezoid with ramps of width delta centred on the run edges; runs
    narrower than delta become a triangle of half-base delta. Either way
    the integral is exactly w and the shape is continuous in w.
    """
    if delta <= 0:
        return (d < w / 2).astype(float)
    if w >= delta:
        return np.clip((w / 2 + delta / 2 - d) / delta, 0.0, 1.0)
    return (w / delta) * np.clip(1.0 - d / delta, 0.0, 1.0)


def _profile(s: np.ndarray, bounds: np.ndarray, a: float, b: float, fracs: np.ndarray,
             delta: float, periodic: bool, shift: float = 0.0,
             edges: tuple[bool, bool] = (False, False)) -> np.ndarray:
    """Two-phase profile at local coordinates s over cells [bounds[j], bounds[j+1]].

    Phase-a runs sit centred in their cells; ``edges`` pins the first/last
    run to the region boundary (continuing past it) when the neighbouring
    datum is on the a side, so no jump is created there.
    """
    L = bounds[-1]
    J = len(fracs)
    cell = np.diff(bounds)
    # the range [-delta/2, cell + delta] lets a cell, pinned edges included,
    # reach pure phase b and pure phase a
    widths = np.clip((fracs + shift) * cell, -delta / 2, cell + delta)
    centers = 0.5 * (bounds[:-1] + bounds[1:])
    theta = np.zeros_like(s)
    for j, w in enumerate(widths):
        if j == 0 and edges[0] and not periodic:
            theta += np.clip((w - s) / delta + 0.5, 0.0, 1.0) if delta > 0 else (s < w)
        elif j == J - 1 and edges[1] and not periodic:
            theta += np.clip((s - (L - w)) / delta + 0.5, 0.0, 1.0) if delta > 0 else (s > L - w)
        else:
            d = np.abs(s - centers[j])
            if periodic:
                d = np.minimum(d, L - d)
            theta += _bump(d, max(w, 0.0), delta)
    theta = np.clip(theta, 0.0, 1.0)
    return b + (a - b) * theta


def _jumps(seg: np.ndarray, a: float, b: float, cyclic: bool) -> np.ndarray:
    """Positions p with a jump between seg[p-1] and seg[p]."""
    d = np.abs(np.diff(seg, prepend=seg[-1] if cyclic else seg[0]))
    thr = max(0.05 * (b - a), 10 * float(np.median(d)))
    return np.flatnonzero(d > thr)


def _cell_bounds(seg: np.ndarray, jumps: np.ndarray, lam: float, n: int) -> np.ndarray:
    """Integer cell boundaries: every constant stretch between jumps gets
    round(length / lam) equal cells, so no cell straddles a jump."""
    cuts = np.unique(np.concatenate([[0], jumps, [len(seg)]]))
    bounds = [0]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        J = max(int(round((hi - lo) / n / lam)), 1)
        bounds.extend(np.round(np.linspace(lo, hi, J + 1)[1:]).astype(int))
    return np.unique(np.array(bounds))


def _cell_fractions(seg: np.ndarray, a: float, b: float, bounds: np.ndarray) -> np.ndarray:
    # lever rule per cell: lam * a + (1 - lam) * b = cell mean
    means = np.array([seg[lo:hi].mean() for lo, hi in zip(bounds[:-1], bounds[1:])])
    return np.clip((b - means) / (b - a), 0.0, 1.0)


def _fill(model: PotentialModel, base: PeriodicField, mask: np.ndarray, eps: float,
          lam_exp: float, delta_exp: float) -> RecoveryPlan:
    n = base.n
    vals = base.values
    lambda_osc = eps ** lam_exp
    delta = eps ** delta_exp
    labels = model.component_of(vals)
    mask = mask & (labels >= 0)
    plan = RecoveryPlan(eps=eps, n=n, lambda_osc=lambda_osc, delta_trans=delta,
                        target_mean=float(np.mean(vals)), regions=[])
    out = vals.copy()
    pieces = []
    for start, length, comp in _runs(mask, labels):
        a, b = model.sigma_G[comp]
        idx = (start + np.arange(length)) % n
        L = length / n
        seg = vals[idx]
        region = TwoPhaseRegion(start, length, comp, a, b, float(np.clip((b - seg.mean()) / (b - a), 0, 1)))
        if L < lambda_osc:
            region.kept = True
            msg = (f"Sigma_G region at x={start / n:.4f} of length {L:.4g} cannot host one "
                   f"wavelength {lambda_osc:.4g}; left unmodified")
            plan.notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            plan.regions.append(region)
            continue
        periodic = length == n
        jumps = _jumps(seg, a, b, periodic)
        if periodic and len(jumps):
            # cut the torus open at a jump of the datum
            start = region.start = int((start + jumps[0]) % n)
            idx = (start + np.arange(length)) % n
            seg = vals[idx]
            periodic = False
            jumps = _jumps(seg, a, b, False)
        cells = _cell_bounds(seg, jumps, lambda_osc, n)
        fracs = _cell_fractions(seg, a, b, cells)
        region.cell_fractions = [float(f) for f in fracs]
        s = (np.arange(length) + 0.5) / n
        bounds = cells / n
        edges = (bool(vals[(start - 1) % n] <= a), bool(vals[(start + length) % n] <= a))
        out[idx] = _profile(s, bounds, a, b, fracs, delta, periodic, 0.0, edges)
        pieces.append((region, idx, s, bounds, fracs, periodic, edges))
        plan.regions.append(region)

    # each region keeps its own mean; narrow runs lose mass to the ramps, so
    # the nominal fractions are shifted until the sampled mean is exact
    for region, idx, s, bounds, fracs, periodic, edges in pieces:
        target_sum = float(np.sum(vals[idx]))

        def defect(shift):
            prof = _profile(s, bounds, region.a, region.b, fracs, delta, periodic, shift, edges)
            return float(np.sum(prof)) - target_sum

        slack = delta / float(np.min(np.diff(bounds)))
        lo, hi = -1.0 - slack, 1.0 + slack
        if defect(lo) * defect(hi) <= 0:
            shift = optimize.brentq(defect, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            shift = 0.0
            plan.notes.append(f"mean correction failed for the region at x={region.start / n:.4f}")
        out[idx] = _profile(s, bounds, region.a, region.b, fracs, delta, periodic, shift, edges)
        region.shift = float(shift)
    plan.field = PeriodicField(out, base.m)
    return plan


def recovery_plan(model: PotentialModel, target: PeriodicField, eps: float,
                  lam_exp: float = WAVELENGTH_EXPONENT,
                  delta_exp: float = TRANSITION_EXPONENT) -> RecoveryPlan:
    lo, hi = model.hull_domain
    if target.values.min() < lo or target.values.max() > hi:
        raise ValueError("target leaves the hull domain")
    return _fill(model, target, np.ones(target.n, dtype=bool), eps, lam_exp, delta_exp)


def prepare_recovery(model: PotentialModel, target: PeriodicField, eps: float, **kw) -> PeriodicField:
    """Energetically well-prepared approximation u0_eps of ``target``.

    Values outside Sigma_G are kept; Sigma_G-valued stretches become
    two-phase microstructure between the envelope endpoints, so that
    F_eps(u0_eps) -> F**(target) and u0_eps -> target in H^-1.
    """
    return recovery_plan(model, target, eps, **kw).field


def _region_mask(n: int, region: tuple[float, float]) -> np.ndarray:
    x0, x1 = region
    x = np.arange(n) / n
    if x1 - x0 >= 1.0:
        return np.ones(n, dtype=bool)
    x0 %= 1.0
    x1 %= 1.0
    if x0 <= x1:
        return (x >= x0) & (x < x1)
    return (x >= x0) | (x < x1)


def wrinkle_plan(model: PotentialModel, base: PeriodicField, region: tuple[float, float],
                 eps: float, **kw) -> RecoveryPlan:
    lo, hi = model.hull_domain
    if base.values.min() < lo or base.values.max() > hi:
        raise ValueError("base leaves the hull domain")
    mask = _region_mask(base.n, region)
    plan = _fill(model, base, mask, eps,
                 kw.get("lam_exp", WAVELENGTH_EXPONENT), kw.get("delta_exp", TRANSITION_EXPONENT))
    if plan.empty:
        plan.notes.append("effective wrinkling region is empty")
    return plan


def wrinkle(model: PotentialModel, base: PeriodicField, region: tuple[float, float],
            eps: float, **kw) -> PeriodicField:
    """Superimpose microstructure on ``base`` inside ``region`` where base is in Sigma_G."""
    plan = wrinkle_plan(model, base, region, eps, **kw)
    if plan.empty:
        warnings.warn("wrinkle: region meets no Sigma_G values; base returned unchanged",
                      RuntimeWarning, stacklevel=2)
    return plan.field


@dataclass
class RegionClassification:
    omega: list[tuple[float, float]]  # x-intervals where f is outside closure(Sigma_G)
    components: list[list[tuple[float, float]]]  # C_i per component of Sigma_G
    distances: np.ndarray  # pairwise torus distances between the C_i


def _cell_intervals(mask: np.ndarray) -> list[tuple[float, float]]:
    n = len(mask)
    if mask.all():
        return [(0.0, 1.0)]
    out = []
    for start, length, _ in _runs(mask, np.zeros(n, dtype=int)):
        out.append((start / n, (start + length) / n))
    return sorted(out)


def _set_distance(m1: np.ndarray, m2: np.ndarray) -> float:
    n = len(m1)
    i1, i2 = np.flatnonzero(m1), np.flatnonzero(m2)
    if len(i1) == 0 or len(i2) == 0:
        return float("inf")
    d = np.abs(i1[:, None] - i2[None, :])
    d = np.minimum(d, n - d)
    return float(d.min()) / n


def classify_regions(model: PotentialModel, f: PeriodicField, tol: float = 1e-12) -> RegionClassification:
    """Split T into Omega = {f outside closure(Sigma_G)} and C_i = {f in closure(Sigma_i)}."""
    v = f.values
    masks = []
    for a, b in model.sigma_G:
        masks.append((v >= a - tol * (1 + abs(a))) & (v <= b + tol * (1 + abs(b))))
    inside = np.zeros(f.n, dtype=bool)
    for mk in masks:
        inside |= mk
    ell = len(masks)
    dist = np.zeros((ell, ell))
    for i in range(ell):
        for j in range(i + 1, ell):
            dist[i, j] = dist[j, i] = _set_distance(masks[i], masks[j])
    return RegionClassification(
        omega=_cell_intervals(~inside) if (~inside).any() else [],
        components=[_cell_intervals(mk) if mk.any() else [] for mk in masks],
        distances=dist,
    )
