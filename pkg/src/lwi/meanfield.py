"""Mean-field equations of the microwave-driven Lambda laser.

The state vector holds the seven first moments

    [rho_ee, rho_11, rho_22, rho_e1, rho_e2, rho_12, a]

with ``rho_ab = <|a><b|>`` for a single atom and ``a = <a>/sqrt(N)``.  With this
intensive field scaling N drops out of the equations.  Coherence convention:
``rho_1e = conj(rho_e1)`` and ``rho_21 = conj(rho_12)``; the equations below
were obtained from the Heisenberg-picture adjoint master equation and reduce to
the degenerate-level textbook form when omega_1 = omega_2 = 0.

Lower-level energies enter as ``(omega_e - omega_k)`` on the optical
coherences and ``(omega_1 - omega_2)`` on the ground-state coherence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .numerics import NonConvergence, integrate_to_steady
from .params import AllRatesZero, ModelParams, Observables, derive_rates

EE, P11, P22, E1, E2, R12, A = range(7)
STATE_SIZE = 7

# U(1) charge of each component: a -> e^{i t} a, rho_e1 -> e^{-i t} rho_e1
CHARGE = np.array([0, 0, 0, -1, -1, 0, 1])

LASING_CUTOFF = 1e-6


@dataclass(frozen=True)
class MeanFieldState:
    rho_ee: float
    rho_11: float
    rho_22: float
    rho_e1: complex
    rho_e2: complex
    rho_12: complex
    a: complex

    def to_vector(self) -> np.ndarray:
        return np.array([self.rho_ee, self.rho_11, self.rho_22, self.rho_e1,
                         self.rho_e2, self.rho_12, self.a], dtype=complex)

    @classmethod
    def from_vector(cls, y) -> "MeanFieldState":
        y = np.asarray(y, dtype=complex)
        return cls(float(y[EE].real), float(y[P11].real), float(y[P22].real),
                   complex(y[E1]), complex(y[E2]), complex(y[R12]), complex(y[A]))

    @property
    def inversion(self) -> float:
        return self.rho_ee - self.rho_11 - self.rho_22

    @property
    def photon_density(self) -> float:
        return abs(self.a) ** 2


def mf_rhs(y, params: ModelParams) -> np.ndarray:
    """Time derivative of the mean-field state vector."""
    ree, r11, r22, e1, e2, r12, a = np.asarray(y, dtype=complex)
    p = params
    gphi = derive_rates(p).gamma_phi
    g = p.g
    up, down = p.gamma_up, p.gamma_down
    w_fwd = p.Omega * np.exp(1j * p.phi)
    w_bwd = p.Omega * np.exp(-1j * p.phi)
    ac = np.conj(a)
    r21 = np.conj(r12)

    d = np.empty(STATE_SIZE, dtype=complex)
    d[E1] = (1j * ((p.omega_e - p.omega_1) * e1 + g * ac * (r11 - ree + r21) - w_bwd * e2)
             - gphi * e1)
    d[E2] = (1j * ((p.omega_e - p.omega_2) * e2 + g * ac * (r22 - ree + r12) - w_fwd * e1)
             - gphi * e2)
    d[R12] = (1j * ((p.omega_1 - p.omega_2) * r12 + g * (a * e2 - ac * np.conj(e1))
                    + w_fwd * (r22 - r11))
              - up * r12)
    # i z + c.c. == -2 Im z
    d[EE] = 2.0 * g * np.imag(a * (e1 + e2)) + up * (r11 + r22) - 2.0 * down * ree
    d[P11] = -2.0 * np.imag(g * a * e1 + w_fwd * r21) - up * r11 + down * ree
    d[P22] = -2.0 * np.imag(g * a * e2 - w_fwd * r21) - up * r22 + down * ree
    d[A] = -1j * (p.nu * a + g * (np.conj(e1) + np.conj(e2))) - 0.5 * p.kappa * a
    return d


def mf_jacobian(y, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Wirtinger derivatives (df/dy, df/dconj(y)) of :func:`mf_rhs`.

    A small perturbation changes the derivative by ``A @ dy + B @ conj(dy)``.
    """
    ree, r11, r22, e1, e2, r12, a = np.asarray(y, dtype=complex)
    p = params
    gphi = derive_rates(p).gamma_phi
    g, up, down = p.g, p.gamma_up, p.gamma_down
    wf = p.Omega * np.exp(1j * p.phi)
    wb = p.Omega * np.exp(-1j * p.phi)
    ac, e1c, e2c, r21 = np.conj(a), np.conj(e1), np.conj(e2), np.conj(r12)
    A_ = np.zeros((STATE_SIZE, STATE_SIZE), dtype=complex)
    B_ = np.zeros((STATE_SIZE, STATE_SIZE), dtype=complex)

    A_[E1, E1] = 1j * (p.omega_e - p.omega_1) - gphi
    A_[E1, E2] = -1j * wb
    A_[E1, P11] = 1j * g * ac
    A_[E1, EE] = -1j * g * ac
    B_[E1, R12] = 1j * g * ac
    B_[E1, A] = 1j * g * (r11 - ree + r21)

    A_[E2, E2] = 1j * (p.omega_e - p.omega_2) - gphi
    A_[E2, E1] = -1j * wf
    A_[E2, P22] = 1j * g * ac
    A_[E2, EE] = -1j * g * ac
    A_[E2, R12] = 1j * g * ac
    B_[E2, A] = 1j * g * (r22 - ree + r12)

    A_[R12, R12] = 1j * (p.omega_1 - p.omega_2) - up
    A_[R12, A] = 1j * g * e2
    A_[R12, E2] = 1j * g * a
    B_[R12, A] = -1j * g * e1c
    B_[R12, E1] = -1j * g * ac
    A_[R12, P22] = 1j * wf
    A_[R12, P11] = -1j * wf

    A_[EE, A] = -1j * g * (e1 + e2)
    A_[EE, E1] = A_[EE, E2] = -1j * g * a
    B_[EE, A] = 1j * g * (e1c + e2c)
    B_[EE, E1] = B_[EE, E2] = 1j * g * ac
    A_[EE, P11] = A_[EE, P22] = up
    A_[EE, EE] = -2.0 * down

    A_[P11, A] = 1j * g * e1
    A_[P11, E1] = 1j * g * a
    B_[P11, A] = -1j * g * e1c
    B_[P11, E1] = -1j * g * ac
    B_[P11, R12] = 1j * wf
    A_[P11, R12] = -1j * wb
    A_[P11, P11] = -up
    A_[P11, EE] = down

    A_[P22, A] = 1j * g * e2
    A_[P22, E2] = 1j * g * a
    B_[P22, A] = -1j * g * e2c
    B_[P22, E2] = -1j * g * ac
    B_[P22, R12] = -1j * wf
    A_[P22, R12] = 1j * wb
    A_[P22, P22] = -up
    A_[P22, EE] = down

    A_[A, A] = -1j * p.nu - 0.5 * p.kappa
    B_[A, E1] = B_[A, E2] = -1j * g
    return A_, B_


def normal_state(params: ModelParams) -> MeanFieldState:
    """Non-lasing fixed point: no field, no optical or ground coherence."""
    up, down = params.gamma_up, params.gamma_down
    if up + down <= 0:
        raise AllRatesZero("gamma_up + gamma_down must be positive")
    two_gphi = up + 2.0 * down
    return MeanFieldState(up / two_gphi, down / two_gphi, down / two_gphi, 0j, 0j, 0j, 0j)


def modulus_observables(y) -> np.ndarray:
    y = np.asarray(y)
    return np.array([y[EE].real, y[P11].real, y[P22].real, abs(y[R12]),
                     abs(y[E1]), abs(y[E2]), abs(y[A]) ** 2])


def _rotate(y, theta: float) -> np.ndarray:
    return np.asarray(y, dtype=complex) * np.exp(1j * theta * CHARGE)


def lasing_frequency(y, params: ModelParams) -> float:
    """Instantaneous rotation rate of the field, -Im(da/dt / a)."""
    a = y[A]
    if a == 0:
        return 0.0
    return float(-(mf_rhs(y, params)[A] / a).imag)


def polish_lasing(y, params: ModelParams, tol: float = 1e-13):
    """Newton-refine a lasing state as a fixed point in its co-rotating frame.

    Returns ``(state, frequency)`` or ``None`` if the refinement fails.
    """
    y = _rotate(y, -np.angle(y[A]))  # make the field real and positive
    w0 = lasing_frequency(y, params)

    def pack(v, w):
        return np.array([v[EE].real, v[P11].real, v[P22].real, v[R12].real, v[R12].imag,
                         v[E1].real, v[E1].imag, v[E2].real, v[E2].imag, v[A].real, w])

    def unpack(x):
        v = np.zeros(STATE_SIZE, dtype=complex)
        v[EE], v[P11], v[P22] = x[0], x[1], x[2]
        v[R12] = x[3] + 1j * x[4]
        v[E1] = x[5] + 1j * x[6]
        v[E2] = x[7] + 1j * x[8]
        v[A] = x[9]
        return v, x[10]

    def residual(x):
        v, w = unpack(x)
        f = mf_rhs(v, params) + 1j * w * CHARGE * v
        return np.array([v[EE].real + v[P11].real + v[P22].real - 1.0, f[P11].real, f[P22].real,
                         f[R12].real, f[R12].imag, f[E1].real, f[E1].imag,
                         f[E2].real, f[E2].imag, f[A].real, f[A].imag])

    x0 = pack(y, w0)
    sol = optimize.root(residual, x0, method="hybr", options={"xtol": 1e-14})
    if not np.all(np.isfinite(sol.x)):
        return None
    res = np.max(np.abs(residual(sol.x)))
    if res > tol or np.max(np.abs(sol.x[:10] - x0[:10])) > 1e-3 or sol.x[9] <= 0:
        return None
    v, w = unpack(sol.x)
    return v, float(w)


@dataclass(frozen=True)
class MeanFieldResult:
    state: MeanFieldState
    observables: Observables
    time: float
    frequency: float

    @property
    def lasing(self) -> bool:
        return self.observables.photon_density > LASING_CUTOFF


def mf_steady(params: ModelParams, seed: float = 1e-3, *, tol: float = 1e-7,
              window: float = 50.0, max_time: float = 2e5, polish: bool = True) -> MeanFieldResult:
    """Steady state reached from the normal state with a small real field seed.

    Raises :class:`~lwi.numerics.NonConvergence` if the modulus observables
    never settle (e.g. self-pulsing or a point extremely close to threshold).
    """
    y0 = normal_state(params).to_vector()
    y0[A] = seed
    res = integrate_to_steady(lambda y: mf_rhs(y, params), y0, tol=tol, window=window,
                              observables=modulus_observables, max_time=max_time)
    y = res.state
    freq = lasing_frequency(y, params)
    if polish and abs(y[A]) ** 2 > 1e-10:
        refined = polish_lasing(y, params)
        if refined is not None:
            y, freq = refined
    state = MeanFieldState.from_vector(y)
    obs = Observables(inversion=state.inversion, photon_density=state.photon_density)
    return MeanFieldResult(state, obs, res.time, freq)


__all__ = [
    "MeanFieldState", "MeanFieldResult", "mf_rhs", "mf_jacobian", "normal_state",
    "mf_steady", "polish_lasing", "modulus_observables", "NonConvergence", "LASING_CUTOFF",
]

