"""The functionals F_eps and F**, the chemical potential and both slopes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import (PeriodicField, derivative_values, h_minus1_norm_values,
                    high_mode_fraction, workspace)
from .potential import PotentialModel


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")


def energy_eps(model: PotentialModel, f: PeriodicField, eps: float) -> float:
    """int_T eps^2 f_x^2 / 2 + W(f) dx."""
    _check_eps(eps)
    fx = derivative_values(f.values, 1)
    return float(np.mean(0.5 * eps ** 2 * fx ** 2 + model.W(f.values)))


def energy_star(model: PotentialModel, f: PeriodicField) -> float:
    """int_T W**(f) dx, with f clamped to the hull domain."""
    v, _ = model.clip(f.values)
    return float(np.mean(model.envelope(v)))


def chemical_potential_values(model: PotentialModel, values: np.ndarray, eps: float) -> np.ndarray:
    return model.dW(values) - eps ** 2 * derivative_values(values, 2)


def chemical_potential(model: PotentialModel, f: PeriodicField, eps: float) -> PeriodicField:
    """w_eps = W'(f) - eps^2 f_xx."""
    _check_eps(eps)
    return PeriodicField(chemical_potential_values(model, f.values, eps))


def slope_eps(model: PotentialModel, f: PeriodicField, eps: float) -> float:
    """||(w_eps)_x||_{L^2}, by spectral differentiation and grid quadrature."""
    _check_eps(eps)
    w = chemical_potential_values(model, f.values, eps)
    return float(np.sqrt(np.mean(derivative_values(w, 1) ** 2)))


def slope_eps_dual(model: PotentialModel, f: PeriodicField, eps: float) -> float:
    """The same slope written as ||(w_eps)_xx||_{-1}; validation only."""
    _check_eps(eps)
    w = chemical_potential_values(model, f.values, eps)
    return h_minus1_norm_values(derivative_values(w, 2))


def _centered_slope(g: np.ndarray) -> float:
    n = len(g)
    gx = (np.roll(g, -1) - np.roll(g, 1)) * (n / 2.0)
    return float(np.sqrt(np.mean(gx ** 2)))


def slope_star(model: PotentialModel, f: PeriodicField) -> float:
    """||(W**'(f))_x||_{L^2} by second-order centered differences.

    W**' is only Lipschitz, so a spectral derivative of the composition
    would ring at the kinks.
    """
    v, _ = model.clip(f.values)
    return _centered_slope(model.envelope_derivative(v))


def slope_star_spectral(model: PotentialModel, f: PeriodicField) -> float:
    """Spectral counterpart of :func:`slope_star`, used as a cross-check."""
    v, _ = model.clip(f.values)
    g = model.envelope_derivative(v)
    ws = workspace(len(g))
    return float(np.sqrt(ws.mode_sum(ws.forward(g), ws.k2)))


@dataclass(frozen=True)
class EnergyReport:
    eps: float
    F_eps: float
    F_star: float
    slope_eps: float
    slope_star: float
    chem_pot: PeriodicField
    mass: float
    high_mode_fraction: float
    out_of_range: bool

    CSV_HEADER = "eps,F_eps,F_star,slope_eps,slope_star,mass"

    def csv_row(self) -> str:
        return ",".join("%.17g" % x for x in (self.eps, self.F_eps, self.F_star,
                                              self.slope_eps, self.slope_star, self.mass))


def energy_report(model: PotentialModel, f: PeriodicField, eps: float) -> EnergyReport:
    _, moved = model.clip(f.values)
    return EnergyReport(
        eps=eps,
        F_eps=energy_eps(model, f, eps),
        F_star=energy_star(model, f),
        slope_eps=slope_eps(model, f, eps),
        slope_star=slope_star(model, f),
        chem_pot=chemical_potential(model, f, eps),
        mass=f.mean,
        high_mode_fraction=high_mode_fraction(f),
        out_of_range=moved,
    )
