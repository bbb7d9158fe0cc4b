"""Linear stability of the non-lasing state and the lasing phase diagram.

The fluctuation vector is ``(da, drho_1e, drho_2e)`` around the normal state.
Its Jacobian is taken from the Wirtinger derivatives of the mean-field
right-hand side, so every term the mean-field code contains (including
non-degenerate lower levels) is reflected here automatically.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .meanfield import A, E1, E2, mf_jacobian, normal_state
from .numerics import cubic_roots, eig_dense_complex
from .params import ModelParams, derive_rates

log = logging.getLogger(__name__)


class NoCrossing(ValueError):
    """The largest growth rate never changes sign on the pump axis."""


class MultipleCrossings(ValueError):
    """More than one sign change on the pump axis; all are attached."""

    def __init__(self, crossings: Sequence[float]):
        super().__init__(f"{len(crossings)} crossings at {list(crossings)}")
        self.crossings = list(crossings)


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: tuple[complex, complex, complex]
    max_real: float
    lasing: bool
    inversion_ns: float


def jacobian(params: ModelParams) -> np.ndarray:
    """3x3 Jacobian of ``(a, rho_1e, rho_2e)`` at the normal state."""
    y = normal_state(params).to_vector()
    dy, dyc = mf_jacobian(y, params)
    # rho_ke = conj(rho_ek): its derivative is conj(A) on conj variables, conj(B) on plain ones
    J = np.empty((3, 3), dtype=complex)
    J[0, 0] = dy[A, A]
    J[0, 1] = dyc[A, E1]
    J[0, 2] = dyc[A, E2]
    for row, k in ((1, E1), (2, E2)):
        J[row, 0] = np.conj(dyc[k, A])
        J[row, 1] = np.conj(dy[k, E1])
        J[row, 2] = np.conj(dy[k, E2])
    return J


def jacobian_printed(params: ModelParams) -> np.ndarray:
    """The normal-state matrix as commonly printed, with ``+i omega_e`` on the
    atomic diagonal.  Kept only as a regression reference; its spectrum differs
    from :func:`jacobian` unless ``omega_e == 0``.
    """
    p = params
    gphi = derive_rates(p).gamma_phi
    ns = normal_state(p)
    d1 = ns.rho_ee - ns.rho_11
    d2 = ns.rho_ee - ns.rho_22
    return np.array([
        [-1j * p.nu - p.kappa / 2, -1j * p.g, -1j * p.g],
        [1j * p.g * d1, 1j * p.omega_e - gphi, 1j * p.Omega * np.exp(1j * p.phi)],
        [1j * p.g * d2, 1j * p.Omega * np.exp(-1j * p.phi), 1j * p.omega_e - gphi],
    ])


def characteristic_cubic(params: ModelParams) -> tuple[complex, complex, complex, complex]:
    """Closed-form coefficients (1, c2, c1, c0) of det(lambda - J) at degenerate lower levels.

    Written out in terms of Gamma_phi, the normal-state populations and the
    drive; ``omega_1`` and ``omega_2`` are not included, so this is only a
    cross-check of :func:`jacobian` for the degenerate case.
    """
    p = params
    gphi = derive_rates(p).gamma_phi
    if p.gamma_up + p.gamma_down <= 0:
        normal_state(p)  # raises AllRatesZero
    nu, we, g, k, om = p.nu, p.omega_e, p.g, p.kappa, p.Omega
    s = (p.gamma_down - p.gamma_up) / gphi
    c2 = 2 * gphi + 1j * (nu + 2 * we) + k / 2
    c1 = g ** 2 * s + (gphi + 1j * we) * (gphi + 1j * (2 * nu + we) + k) + om ** 2
    c0 = (g ** 2 * s * (gphi + 1j * (we + om * math.cos(p.phi)))
          + 0.5 * (k + 2j * nu) * ((gphi + 1j * we) ** 2 + om ** 2))
    return 1.0 + 0j, complex(c2), complex(c1), complex(c0)


def stability_report(params: ModelParams) -> StabilityReport:
    ev = eig_dense_complex(jacobian(params))
    mr = float(np.max(ev.real))
    return StabilityReport(tuple(complex(x) for x in ev), mr, mr > 0, normal_state(params).inversion)


def cubic_eigenvalues(params: ModelParams) -> np.ndarray:
    return cubic_roots(*characteristic_cubic(params))


def critical_pump_resonant(g: float, kappa: float, gamma_T: float) -> float:
    """Critical pump rate at phi = 0 (Delta omega = Omega) or phi = pi (Delta omega = -Omega)."""
    if gamma_T == 0:
        return 0.0
    return gamma_T + (8 * g ** 2 / kappa) * (1 - math.sqrt(1 + 3 * gamma_T * kappa / (16 * g ** 2)))


# ---------------------------------------------------------------------------
# vectorised growth rates

def _batch_jacobians(params: ModelParams, ratios: np.ndarray, gamma_T: float) -> np.ndarray:
    """Jacobians at many pump ratios Gamma_up/Gamma_T (3-level convention)."""
    p = params
    up = ratios * gamma_T
    down = gamma_T / 2 - up
    gphi = (up + 2 * down) / 2
    inv = (up - down) / (2 * gphi)  # rho_ee - rho_kk at the normal state
    J = np.zeros(ratios.shape + (3, 3), dtype=complex)
    J[..., 0, 0] = -1j * p.nu - p.kappa / 2
    J[..., 0, 1] = J[..., 0, 2] = -1j * p.g
    J[..., 1, 0] = J[..., 2, 0] = 1j * p.g * inv
    J[..., 1, 1] = -1j * (p.omega_e - p.omega_1) - gphi
    J[..., 2, 2] = -1j * (p.omega_e - p.omega_2) - gphi
    J[..., 1, 2] = 1j * p.Omega * np.exp(1j * p.phi)
    J[..., 2, 1] = 1j * p.Omega * np.exp(-1j * p.phi)
    return J


def growth_rate(params: ModelParams, ratios, gamma_T: Optional[float] = None) -> np.ndarray:
    """Largest real part of the normal-state spectrum at pump ratios ``ratios``."""
    if gamma_T is None:
        gamma_T = derive_rates(params).gamma_T3
    r = np.asarray(ratios, dtype=float)
    return np.linalg.eigvals(_batch_jacobians(params, r, gamma_T)).real.max(axis=-1)


def _crossings(f, axis: np.ndarray, values: np.ndarray, xtol: float) -> list[float]:
    out = []
    for i in np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]:
        lo, hi = axis[i], axis[i + 1]
        if values[i] == 0:
            out.append(float(lo))
            continue
        if values[i + 1] == 0:
            continue
        out.append(float(optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)))
    return out


def threshold_scan(params: ModelParams, pump_axis=None, *, gamma_T: Optional[float] = None,
                   xtol: float = 1e-12) -> float:
    """Pump ratio Gamma_up/Gamma_T at which the normal state loses stability.

    The total rate is held at ``gamma_T`` (default: that of ``params``).  The
    axis is scanned for sign changes of the largest real part, each bracket is
    refined with Brent's method.
    """
    if gamma_T is None:
        gamma_T = derive_rates(params).gamma_T3
    axis = np.linspace(0.0, 0.5, 101) if pump_axis is None else np.asarray(pump_axis, float)
    vals = growth_rate(params, axis, gamma_T)

    def f(r):
        return float(growth_rate(params, np.array([r]), gamma_T)[0])

    found = _crossings(f, axis, vals, xtol)
    if not found:
        raise NoCrossing("normal state does not change stability on the pump axis")
    if len(found) > 1:
        raise MultipleCrossings(found)
    return found[0]


def lowest_threshold(params: ModelParams, gamma_T: float, axis: np.ndarray) -> float:
    """Smallest pump ratio with positive growth; ``inf`` if none on the axis."""
    vals = growth_rate(params, axis, gamma_T)
    pos = np.nonzero(vals > 0)[0]
    if pos.size == 0:
        return math.inf
    i = pos[0]
    if i == 0:
        return float(axis[0])

    def f(r):
        return float(growth_rate(params, np.array([r]), gamma_T)[0])

    return float(optimize.brentq(f, axis[i - 1], axis[i], xtol=1e-12, rtol=4 * np.finfo(float).eps))


# ---------------------------------------------------------------------------
# phase diagram

@dataclass
class PhaseDiagramGrid:
    pump_ratios: np.ndarray
    detunings: np.ndarray
    max_real: np.ndarray          # shape (len(detunings), len(pump_ratios))
    inversion_ns: np.ndarray      # same shape
    eigenvalues: np.ndarray       # shape (..., 3)
    mf_inversion: Optional[np.ndarray] = None
    mf_photon_density: Optional[np.ndarray] = None

    @property
    def lasing(self) -> np.ndarray:
        return self.max_real > 0

    def report(self, i_det: int, j_pump: int) -> StabilityReport:
        ev = self.eigenvalues[i_det, j_pump]
        mr = float(self.max_real[i_det, j_pump])
        return StabilityReport(tuple(complex(x) for x in ev), mr, mr > 0,
                               float(self.inversion_ns[i_det, j_pump]))


def phase_diagram(params: ModelParams, pump_ratios=None, detunings=None,
                  gamma_T: Optional[float] = None) -> PhaseDiagramGrid:
    """Normal-state stability over a (detuning, pump ratio) grid.

    Detuning is varied by moving the cavity frequency at fixed ``omega_e``.
    """
    if gamma_T is None:
        gamma_T = derive_rates(params).gamma_T3
    pr = np.linspace(0.0, 0.5, 201) if pump_ratios is None else np.asarray(pump_ratios, float)
    dw = np.linspace(-3.0, 3.0, 201) if detunings is None else np.asarray(detunings, float)
    rows_ev, rows_inv = [], []
    for d in dw:
        p = params.with_detuning(float(d))
        ev = np.linalg.eigvals(_batch_jacobians(p, pr, gamma_T))
        rows_ev.append(ev)
        up = pr * gamma_T
        down = gamma_T / 2 - up
        with np.errstate(invalid="ignore", divide="ignore"):
            rows_inv.append((up - 2 * down) / (up + 2 * down))
    ev = np.array(rows_ev)
    return PhaseDiagramGrid(pr, dw, ev.real.max(axis=-1), np.array(rows_inv), ev)


# ---------------------------------------------------------------------------
# minima of the threshold over detuning

@dataclass(frozen=True)
class BranchMinimum:
    pump_ratio: float
    detuning: float


@dataclass
class MinimaRecord:
    phi: float
    positive: Optional[BranchMinimum]
    negative: Optional[BranchMinimum]
    events: list[str] = field(default_factory=list)


def threshold_curve(params: ModelParams, detunings, gamma_T: Optional[float] = None,
                    pump_axis=None) -> np.ndarray:
    """Lowest lasing pump ratio at each detuning (``inf`` where it never lases)."""
    if gamma_T is None:
        gamma_T = derive_rates(params).gamma_T3
    axis = np.linspace(0.0, 0.5, 201) if pump_axis is None else np.asarray(pump_axis, float)
    return np.array([lowest_threshold(params.with_detuning(float(d)), gamma_T, axis)
                     for d in detunings])


def _branch_minimum(params, gamma_T, axis, grid, curve) -> Optional[BranchMinimum]:
    """Lowest interior local minimum of a sampled threshold curve, refined."""
    best = None
    for i in range(1, len(grid) - 1):
        c = curve[i]
        if not np.isfinite(c) or not (c <= curve[i - 1] and c < curve[i + 1]):
            continue
        lo, hi = grid[i - 1], grid[i + 1]

        def t(d):
            v = lowest_threshold(params.with_detuning(d), gamma_T, axis)
            return v if np.isfinite(v) else 1e3

        res = optimize.minimize_scalar(t, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-5})
        cand = BranchMinimum(float(res.fun), float(res.x))
        if best is None or cand.pump_ratio < best.pump_ratio:
            best = cand
    return best


def minima_at(params: ModelParams, window: tuple[float, float] = (-3.0, 3.0), step: float = 0.02,
              gamma_T: Optional[float] = None) -> tuple[Optional[BranchMinimum], Optional[BranchMinimum]]:
    """(positive-branch, negative-branch) threshold minima at the phase of ``params``."""
    if gamma_T is None:
        gamma_T = derive_rates(params).gamma_T3
    axis = np.linspace(0.0, 0.5, 201)
    lo, hi = window
    out = []
    for side in (1, -1):
        edge = hi if side > 0 else -lo
        if edge <= 0:
            out.append(None)
            continue
        grid = side * np.arange(0.0, edge + step / 2, step)
        curve = threshold_curve(params, grid, gamma_T, axis)
        m = _branch_minimum(params, gamma_T, axis, grid[::side], curve[::side])
        out.append(m)
    return out[0], out[1]


def tag_events(records: list[MinimaRecord], jump: float = 0.5) -> list[MinimaRecord]:
    """Attach birth/death/jump events by comparing neighbouring records in place."""
    for prev, rec in zip(records, records[1:]):
        for name in ("positive", "negative"):
            a, b = getattr(prev, name), getattr(rec, name)
            if (a is None) != (b is None):
                rec.events.append(f"{name}-{'birth' if a is None else 'death'}")
            elif a is not None and abs(a.detuning - b.detuning) > jump:
                rec.events.append(f"{name}-jump")
    return records


def minima_track(params: ModelParams, phi_axis, window: tuple[float, float] = (-3.0, 3.0),
                 step: float = 0.02, jump: float = 0.5) -> list[MinimaRecord]:
    """Threshold minima on each detuning branch for every phase in ``phi_axis``.

    A branch that appears, disappears or moves by more than ``jump`` in
    detuning between neighbouring phases gets an event string attached.
    """
    gamma_T = derive_rates(params).gamma_T3
    records = [MinimaRecord(float(phi), *minima_at(params.replace(phi=float(phi)), window,
                                                   step, gamma_T))
               for phi in phi_axis]
    return tag_events(records, jump)


__all__ = [
    "NoCrossing", "MultipleCrossings", "StabilityReport", "PhaseDiagramGrid", "BranchMinimum",
    "MinimaRecord", "jacobian", "jacobian_printed", "characteristic_cubic", "stability_report",
    "cubic_eigenvalues", "critical_pump_resonant", "growth_rate", "threshold_scan",
    "lowest_threshold", "phase_diagram", "threshold_curve", "minima_at", "minima_track",
    "tag_events",
]
