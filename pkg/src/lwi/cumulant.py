"""Second-order, U(1)-symmetric cumulant equations for the Lambda laser.

Variables (per-atom, intensive)::

    rho_ee, rho_11, rho_22, rho_12        single-atom moments
    P11 = <rho_1e rho_e1>                 pair moments of two different atoms
    P22 = <rho_2e rho_e2>
    P21 = <rho_1e rho_e2>  (= <rho_e2 rho_1e>)
    A_k = <a rho_ek> / sqrt(N)            field-matter moments
    n   = <a^dag a> / N

Symmetry-breaking first moments (<a>, <rho_ek>) are zero by construction.

Third moments enter only through six combinations, supplied by a
:class:`Closure`.  The default closure drops third cumulants, which in the
symmetric sector means factorising them into a second moment times a
single-atom moment.  Passing exact third moments instead turns the right-hand
side into the exact time derivative, which is how the equations are tested.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .numerics import integrate_to_steady
from .params import ModelParams, Observables, derive_rates

EE, P11_, P22_, R12, Q11, Q22, Q21, A1, A2, NPH = range(10)
STATE_SIZE = 10
_REAL = (EE, P11_, P22_, Q11, Q22, NPH)


@dataclass(frozen=True)
class CumulantState3:
    rho_ee: float
    rho_11: float
    rho_22: float
    rho_12: complex
    pair_1e_e1: float
    pair_2e_e2: float
    pair_e2_1e: complex
    a_rho_e1: complex
    a_rho_e2: complex
    n_photons: float   # <a^dag a>, not divided by N

    @property
    def inversion(self) -> float:
        return self.rho_ee - self.rho_11 - self.rho_22


def y1(y):
    """<rho_ee - rho_11 - rho_12>."""
    return y[EE] - y[P11_] - y[R12]


def y2(y):
    """<rho_ee - rho_22 - rho_21>."""
    return y[EE] - y[P22_] - np.conj(y[R12])


class Closure:
    """Third moments needed by the cumulant equations.

    ``t(k, j)`` is ``<a rho_ek^(i) Y_j^(l)> / sqrt(N)`` for atoms ``i != l``,
    with ``Y_1 = rho_ee - rho_11 - rho_12`` and ``Y_2 = rho_ee - rho_22 - rho_21``.
    ``nz(j)`` is ``<a^dag a Y_j^dag> / N``.  The base class factorises them.
    """

    def t(self, y, k: int, j: int) -> complex:
        return y[A1 if k == 1 else A2] * (y1(y) if j == 1 else y2(y))

    def nz(self, y, j: int) -> complex:
        return y[NPH] * np.conj(y1(y) if j == 1 else y2(y))


FACTORIZED = Closure()


def cumulant_rhs(y, params: ModelParams, closure: Closure = FACTORIZED,
                 n_emitters: float | None = None) -> np.ndarray:
    """Time derivative of the cumulant state vector.

    ``n_emitters`` overrides ``params.n_emitters``; ``numpy.inf`` gives the
    thermodynamic-limit system.
    """
    y = np.asarray(y, dtype=complex)
    p = params
    N = p.n_emitters if n_emitters is None else n_emitters
    pair_w, self_w = (1.0, 0.0) if np.isinf(N) else ((N - 1) / N, 1.0 / N)
    g, up, down = p.g, p.gamma_up, p.gamma_down
    gphi = derive_rates(p).gamma_phi
    wf = p.Omega * np.exp(1j * p.phi)
    wb = np.conj(wf)
    ree, r11, r22, r12 = y[EE], y[P11_], y[P22_], y[R12]
    q11, q22, q21 = y[Q11], y[Q22], y[Q21]
    a1, a2, n = y[A1], y[A2], y[NPH]
    r21 = np.conj(r12)
    t = closure.t

    d = np.empty(STATE_SIZE, dtype=complex)
    d[EE] = 2 * g * np.imag(a1 + a2) + up * (r11 + r22) - 2 * down * ree
    d[P11_] = -2 * np.imag(g * a1 + wf * r21) - up * r11 + down * ree
    d[P22_] = -2 * np.imag(g * a2 - wf * r21) - up * r22 + down * ree
    d[R12] = (1j * ((p.omega_1 - p.omega_2) * r12 + g * (a2 - np.conj(a1)) + wf * (r22 - r11))
              - up * r12)

    z11 = 1j * g * t(y, 1, 1) - 1j * wb * q21
    z22 = 1j * g * t(y, 2, 2) + 1j * wb * q21
    d[Q11] = 2 * z11.real - 2 * gphi * q11
    d[Q22] = 2 * z22.real - 2 * gphi * q22
    d[Q21] = (1j * (p.omega_1 - p.omega_2) * q21
              + 1j * g * (t(y, 2, 1) - np.conj(t(y, 1, 2)))
              - 1j * wf * (q11 - q22) - 2 * gphi * q21)

    damp = 0.5 * p.kappa + gphi
    d[A1] = (-1j * g * (pair_w * (q11 + np.conj(q21)) + self_w * ree)
             - 1j * g * closure.nz(y, 1)
             + 1j * (p.omega_e - p.omega_1 - p.nu) * a1 - 1j * wb * a2 - damp * a1)
    d[A2] = (-1j * g * (pair_w * (q22 + q21) + self_w * ree)
             - 1j * g * closure.nz(y, 2)
             + 1j * (p.omega_e - p.omega_2 - p.nu) * a2 - 1j * wf * a1 - damp * a2)
    d[NPH] = -p.kappa * n - 2 * g * np.imag(a1 + a2)
    for k in _REAL:
        d[k] = d[k].real
    return d


def initial_state(params: ModelParams, seed: float = 1e-6) -> np.ndarray:
    up, down = params.gamma_up, params.gamma_down
    s = up + 2 * down
    y = np.zeros(STATE_SIZE, dtype=complex)
    y[EE], y[P11_], y[P22_] = up / s, down / s, down / s
    y[NPH] = seed
    return y


def _observables(y) -> np.ndarray:
    return np.array([y[EE].real, y[P11_].real, y[P22_].real, abs(y[R12]), y[Q11].real,
                     y[Q22].real, abs(y[Q21]), abs(y[A1]), abs(y[A2]), y[NPH].real])


def _pack(y):
    return np.array([y[EE].real, y[P11_].real, y[P22_].real, y[R12].real, y[R12].imag,
                     y[Q11].real, y[Q22].real, y[Q21].real, y[Q21].imag,
                     y[A1].real, y[A1].imag, y[A2].real, y[A2].imag, y[NPH].real])


def _unpack(x):
    y = np.zeros(STATE_SIZE, dtype=complex)
    y[EE], y[P11_], y[P22_] = x[0], x[1], x[2]
    y[R12] = x[3] + 1j * x[4]
    y[Q11], y[Q22] = x[5], x[6]
    y[Q21] = x[7] + 1j * x[8]
    y[A1] = x[9] + 1j * x[10]
    y[A2] = x[11] + 1j * x[12]
    y[NPH] = x[13]
    return y


def polish(y, params: ModelParams, n_emitters=None, tol: float = 1e-12):
    """Newton-refine a steady state; the trace replaces the rho_ee equation."""
    def res(x):
        v = _unpack(x)
        f = cumulant_rhs(v, params, n_emitters=n_emitters)
        r = _pack(f)
        r[0] = x[0] + x[1] + x[2] - 1.0
        return r

    x0 = _pack(y)
    sol = optimize.root(res, x0, method="hybr", options={"xtol": 1e-14})
    if not np.all(np.isfinite(sol.x)) or np.max(np.abs(res(sol.x))) > tol:
        return None
    if np.max(np.abs(sol.x - x0)) > 1e-3 * max(1.0, np.max(np.abs(x0))):
        return None
    return _unpack(sol.x)


@dataclass(frozen=True)
class CumulantResult:
    state: CumulantState3
    observables: Observables
    time: float


def to_state(y, N) -> CumulantState3:
    scale = N if np.isfinite(N) else 1.0
    return CumulantState3(float(y[EE].real), float(y[P11_].real), float(y[P22_].real),
                          complex(y[R12]), float(y[Q11].real), float(y[Q22].real),
                          complex(y[Q21]), complex(y[A1]) * np.sqrt(scale),
                          complex(y[A2]) * np.sqrt(scale), float(y[NPH].real) * scale)


def cumulant_steady(params: ModelParams, *, n_emitters=None, seed: float = 1e-6,
                    tol: float = 1e-7, window: float = 50.0, max_time: float = 2e5,
                    polish_result: bool = True) -> CumulantResult:
    """Steady state from the normal state with a small photon seed.

    ``photon_density`` is ``<a^dag a>/N``.  For ``n_emitters=numpy.inf`` the
    moments stay intensive and ``n_photons`` in the returned state is the
    photon density itself.
    """
    N = params.n_emitters if n_emitters is None else n_emitters
    res = integrate_to_steady(lambda v: cumulant_rhs(v, params, n_emitters=N),
                              initial_state(params, seed), tol=tol, window=window,
                              observables=_observables, max_time=max_time)
    y = res.state
    if polish_result:
        refined = polish(y, params, n_emitters=N)
        if refined is not None:
            y = refined
    obs = Observables(inversion=float((y[EE] - y[P11_] - y[P22_]).real),
                      photon_density=float(y[NPH].real))
    return CumulantResult(to_state(y, N), obs, res.time)


__all__ = ["CumulantState3", "CumulantResult", "Closure", "FACTORIZED", "cumulant_rhs",
           "cumulant_steady", "initial_state", "polish"]
