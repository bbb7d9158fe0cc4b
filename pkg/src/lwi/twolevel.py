"""Two-level emitters in a cavity: the reference laser model.

Here the total rate is ``Gamma_T = gamma_up + gamma_down`` (not twice that, as
for the Lambda atom); :func:`rates2` is the one place that applies it.  The
microwave parameters ``Omega`` and ``phi`` of :class:`ModelParams` are ignored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .numerics import integrate_to_steady
from .params import AllRatesZero, ModelParams, Observables, derive_rates
from .permutation import AtomModel, DEFAULT_MEMORY_CAP, ExactResult, proj, solve_steady
from .stability import MultipleCrossings, NoCrossing, _crossings

GE, SZ, AMP = range(3)
CHARGE2 = np.array([1, 0, 1])


def rates2(params: ModelParams) -> float:
    """Total rate Gamma_T of the two-level model."""
    return derive_rates(params).gamma_T2


def two_level_model(params: ModelParams) -> AtomModel:
    """Two-level atom with levels ordered (e, g)."""
    d = 2
    e, g = 0, 1
    jumps = ((params.gamma_up, proj(e, g, d)), (params.gamma_down, proj(g, e, d)))
    return AtomModel(d, params.omega_e * proj(e, e, d), jumps, proj(e, g, d), np.array([1, 0]))


# ---------------------------------------------------------------------------
# mean field

@dataclass(frozen=True)
class TwoLevelMFState:
    rho_ge: complex
    sigma_z: float
    a: complex


def normal_sigma_z(params: ModelParams) -> float:
    gt = rates2(params)
    if gt <= 0:
        raise AllRatesZero("gamma_up + gamma_down must be positive")
    return (params.gamma_up - params.gamma_down) / gt


def mf2_rhs(y, params: ModelParams) -> np.ndarray:
    """Derivative of ``[rho_ge, sigma_z, a]`` with ``a = <a>/sqrt(N)``."""
    rge, sz, a = np.asarray(y, dtype=complex)
    p = params
    gt = rates2(p)
    d = np.empty(3, dtype=complex)
    d[GE] = -1j * p.omega_e * rge + 1j * p.g * a * sz - 0.5 * gt * rge
    # -2 g (i a rho_eg + c.c.) == 4 g Im(a rho_eg)
    d[SZ] = 4 * p.g * np.imag(a * np.conj(rge)) - gt * sz.real + (p.gamma_up - p.gamma_down)
    d[AMP] = -1j * (p.nu * a + p.g * rge) - 0.5 * p.kappa * a
    return d


def _mf2_obs(y):
    return np.array([abs(y[GE]), y[SZ].real, abs(y[AMP]) ** 2])


def _polish2(y, params):
    y = np.asarray(y, dtype=complex) * np.exp(-1j * np.angle(y[AMP]) * CHARGE2)
    w0 = float(-(mf2_rhs(y, params)[AMP] / y[AMP]).imag)

    def unpack(x):
        return np.array([x[0] + 1j * x[1], x[2], x[3]], dtype=complex), x[4]

    def res(x):
        v, w = unpack(x)
        f = mf2_rhs(v, params) + 1j * w * CHARGE2 * v
        return np.array([f[GE].real, f[GE].imag, f[SZ].real, f[AMP].real, f[AMP].imag])

    x0 = np.array([y[GE].real, y[GE].imag, y[SZ].real, y[AMP].real, w0])
    sol = optimize.root(res, x0, method="hybr", options={"xtol": 1e-14})
    if (not np.all(np.isfinite(sol.x)) or np.max(np.abs(res(sol.x))) > 1e-13
            or np.max(np.abs(sol.x[:4] - x0[:4])) > 1e-3 or sol.x[3] <= 0):
        return None
    return unpack(sol.x)[0]


@dataclass(frozen=True)
class TwoLevelMFResult:
    state: TwoLevelMFState
    observables: Observables
    time: float


def mf2_steady(params: ModelParams, seed: float = 1e-3, *, tol: float = 1e-7,
               window: float = 50.0, max_time: float = 2e5) -> TwoLevelMFResult:
    y0 = np.array([0.0, normal_sigma_z(params), seed], dtype=complex)
    res = integrate_to_steady(lambda v: mf2_rhs(v, params), y0, tol=tol, window=window,
                              observables=_mf2_obs, max_time=max_time)
    y = res.state
    if abs(y[AMP]) ** 2 > 1e-10:
        refined = _polish2(y, params)
        if refined is not None:
            y = refined
    st = TwoLevelMFState(complex(y[GE]), float(y[SZ].real), complex(y[AMP]))
    return TwoLevelMFResult(st, Observables(st.sigma_z, abs(st.a) ** 2), res.time)


# ---------------------------------------------------------------------------
# stability and threshold

def jacobian2(params: ModelParams, full: bool = False) -> np.ndarray:
    """Normal-state Jacobian of ``(a, rho_ge)``; with ``full`` the decoupled
    ``sigma_z`` row and column are appended."""
    p = params
    gt = rates2(p)
    sz = normal_sigma_z(p)
    J = np.array([[-1j * p.nu - 0.5 * p.kappa, -1j * p.g],
                  [1j * p.g * sz, -1j * p.omega_e - 0.5 * gt]])
    if not full:
        return J
    out = np.zeros((3, 3), dtype=complex)
    out[:2, :2] = J
    out[2, 2] = -gt
    return out


def growth_rate2(params: ModelParams, ratios, gamma_T: float) -> np.ndarray:
    r = np.asarray(ratios, dtype=float)
    p = params
    sz = 2 * r - 1
    J = np.zeros(r.shape + (2, 2), dtype=complex)
    J[..., 0, 0] = -1j * p.nu - 0.5 * p.kappa
    J[..., 0, 1] = -1j * p.g
    J[..., 1, 0] = 1j * p.g * sz
    J[..., 1, 1] = -1j * p.omega_e - 0.5 * gamma_T
    return np.linalg.eigvals(J).real.max(axis=-1)


def threshold_scan2(params: ModelParams, pump_axis=None, *, gamma_T: Optional[float] = None,
                    xtol: float = 1e-12) -> float:
    """Pump ratio Gamma_up/Gamma_T where the two-level normal state destabilises."""
    if gamma_T is None:
        gamma_T = rates2(params)
    axis = np.linspace(0.0, 1.0, 101) if pump_axis is None else np.asarray(pump_axis, float)
    vals = growth_rate2(params, axis, gamma_T)

    def f(r):
        return float(growth_rate2(params, np.array([r]), gamma_T)[0])

    found = _crossings(f, axis, vals, xtol)
    if not found:
        raise NoCrossing("normal state does not change stability on the pump axis")
    if len(found) > 1:
        raise MultipleCrossings(found)
    return found[0]


def critical_pump_2level(g: float, kappa: float, gamma_T: float, delta_omega: float) -> float:
    """Critical Gamma_up from the 2x2 characteristic polynomial.

    ``Gamma_T (1/2 + (Gamma_T kappa / g^2) [1/8 + dw^2 / (2 (Gamma_T + kappa)^2)])``
    """
    return gamma_T * (0.5 + gamma_T * kappa / g ** 2
                      * (0.125 + delta_omega ** 2 / (2 * (gamma_T + kappa) ** 2)))


def critical_pump_2level_printed(g: float, kappa: float, gamma_T: float, delta_omega: float) -> float:
    """Commonly quoted variant without the factor 1/2 on the detuning term.

    Agrees with :func:`critical_pump_2level` only on resonance.
    """
    return gamma_T * (0.5 + gamma_T * kappa / g ** 2
                      * (0.125 + delta_omega ** 2 / (gamma_T + kappa) ** 2))


# ---------------------------------------------------------------------------
# cumulants

SZ2, PAIR, AR, NP = range(4)


@dataclass(frozen=True)
class TwoLevelCumulantState:
    sigma_z: float
    pair_eg_ge: float
    a_rho_eg: complex
    n_photons: float


class Closure2:
    """Third moments: ``nsz = <a^dag a sigma_z>/N`` and
    ``asz = <a rho_eg^(i) sigma_z^(j)>/sqrt(N)`` (i != j).  Factorised here."""

    def nsz(self, y):
        return y[NP] * y[SZ2]

    def asz(self, y):
        return y[AR] * y[SZ2]


FACTORIZED2 = Closure2()


def cumulant2_rhs(y, params: ModelParams, closure: Closure2 = FACTORIZED2,
                  n_emitters=None) -> np.ndarray:
    """Derivative of ``[sigma_z, <rho_eg rho_ge>, <a rho_eg>/sqrt(N), <a^dag a>/N]``."""
    y = np.asarray(y, dtype=complex)
    p = params
    N = p.n_emitters if n_emitters is None else n_emitters
    pair_w, self_w = (1.0, 0.0) if np.isinf(N) else ((N - 1) / N, 1.0 / N)
    gt = rates2(p)
    sz, P, A, n = y
    ree = 0.5 * (1 + sz)
    d = np.empty(4, dtype=complex)
    d[SZ2] = 4 * p.g * np.imag(A) - gt * sz.real + (p.gamma_up - p.gamma_down)
    d[PAIR] = -gt * P.real - 2 * p.g * np.imag(closure.asz(y))
    d[AR] = (-(1j * (p.nu - p.omega_e) + 0.5 * (p.kappa + gt)) * A
             - 1j * p.g * (pair_w * P + closure.nsz(y) + self_w * ree))
    d[NP] = -p.kappa * n.real - 2 * p.g * np.imag(A)
    d[SZ2], d[PAIR], d[NP] = d[SZ2].real, d[PAIR].real, d[NP].real
    return d


@dataclass(frozen=True)
class TwoLevelCumulantResult:
    state: TwoLevelCumulantState
    observables: Observables
    time: float


def cumulant2_steady(params: ModelParams, *, n_emitters=None, seed: float = 1e-6,
                     tol: float = 1e-7, window: float = 50.0,
                     max_time: float = 2e5) -> TwoLevelCumulantResult:
    N = params.n_emitters if n_emitters is None else n_emitters
    y0 = np.array([normal_sigma_z(params), 0, 0, seed], dtype=complex)

    def obs(v):
        return np.array([v[SZ2].real, v[PAIR].real, abs(v[AR]), v[NP].real])

    res = integrate_to_steady(lambda v: cumulant2_rhs(v, params, n_emitters=N), y0, tol=tol,
                              window=window, observables=obs, max_time=max_time)

    def pack(v):
        return np.array([v[SZ2].real, v[PAIR].real, v[AR].real, v[AR].imag, v[NP].real])

    def unpack(x):
        return np.array([x[0], x[1], x[2] + 1j * x[3], x[4]], dtype=complex)

    x0 = pack(res.state)
    sol = optimize.root(lambda x: pack(cumulant2_rhs(unpack(x), params, n_emitters=N)), x0,
                        method="hybr", options={"xtol": 1e-14})
    y = res.state
    if (np.all(np.isfinite(sol.x)) and np.max(np.abs(sol.x - x0)) < 1e-3
            and np.max(np.abs(pack(cumulant2_rhs(unpack(sol.x), params, n_emitters=N)))) < 1e-12):
        y = unpack(sol.x)
    scale = N if np.isfinite(N) else 1.0
    st = TwoLevelCumulantState(float(y[SZ2].real), float(y[PAIR].real),
                               complex(y[AR]) * math.sqrt(scale), float(y[NP].real) * scale)
    return TwoLevelCumulantResult(st, Observables(st.sigma_z, float(y[NP].real)), res.time)


# ---------------------------------------------------------------------------
# exact

def exact2_steady(params: ModelParams, *, sector: bool = True,
                  memory_cap: int = DEFAULT_MEMORY_CAP, preconditioner=None) -> ExactResult:
    """Exact steady state of N two-level atoms via the symmetric-basis solver."""
    return solve_steady(params, two_level_model(params), sector=sector, memory_cap=memory_cap,
                        preconditioner=preconditioner)


__all__ = [
    "TwoLevelMFState", "TwoLevelCumulantState", "two_level_model", "rates2", "normal_sigma_z",
    "mf2_rhs", "mf2_steady", "jacobian2", "growth_rate2", "threshold_scan2",
    "critical_pump_2level", "critical_pump_2level_printed", "Closure2", "cumulant2_rhs",
    "cumulant2_steady", "exact2_steady",
]
