"""Model parameters, derived rates, observables and the dressed-state frame.

All rates and frequencies are plain floats in whatever unit the caller picks;
the command-line defaults use the microwave Rabi frequency as the unit for the
three-level model and the total decay rate for the two-level model.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any


class ParameterError(ValueError):
    """Raised for physically invalid or malformed parameter sets."""


class AllRatesZero(ParameterError):
    """Raised when the normal state is undefined because gamma_up + gamma_down == 0."""


def _wrap_phase(phi: float) -> float:
    """Reduce an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(phi, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the driven Lambda-system laser.

    Attributes
    ----------
    nu : float
        Cavity frequency.
    omega_e : float
        Energy of the excited level.
    omega_1, omega_2 : float
        Energies of the two lower levels (degenerate at 0 by default).
    g : float
        Collective light-matter coupling; each atom couples with g/sqrt(N).
    Omega : float
        Microwave Rabi frequency between the lower levels.
    phi : float
        Microwave phase, stored reduced to (-pi, pi].
    kappa : float
        Cavity field decay rate.
    gamma_up, gamma_down : float
        Incoherent pump (each lower level -> e) and decay (e -> each lower level).
    n_emitters : int
        Number of atoms N.
    fock_dim : int
        Cavity Fock truncation P, used by the exact solvers only.
    """

    nu: float = 0.0
    omega_e: float = 1.0
    omega_1: float = 0.0
    omega_2: float = 0.0
    g: float = 0.9
    Omega: float = 1.0
    phi: float = 0.0
    kappa: float = 0.8
    gamma_up: float = 0.1
    gamma_down: float = 0.4
    n_emitters: int = 1
    fock_dim: int = 10

    def __post_init__(self) -> None:
        for name in ("nu", "omega_e", "omega_1", "omega_2", "g", "Omega", "phi",
                     "kappa", "gamma_up", "gamma_down"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ("g", "Omega", "kappa", "gamma_up", "gamma_down"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        for name, low in (("n_emitters", 1), ("fock_dim", 2)):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ParameterError(f"{name} must be an integer, got {value!r}")
            if value < low:
                raise ParameterError(f"{name} must be >= {low}, got {value}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "phi", _wrap_phase(self.phi))

    @property
    def delta_omega(self) -> float:
        return self.omega_e - self.nu

    def replace(self, **changes: Any) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def with_pump_ratio(self, ratio: float, gamma_T: float, levels: int = 3) -> "ModelParams":
        """Set gamma_up/gamma_down from a pump fraction at fixed total rate.

        The total rate is 2(gamma_up + gamma_down) for three-level atoms and
        gamma_up + gamma_down for two-level atoms.
        """
        if levels == 3:
            up = ratio * gamma_T
            down = gamma_T / 2.0 - up
        elif levels == 2:
            up = ratio * gamma_T
            down = gamma_T - up
        else:
            raise ParameterError(f"levels must be 2 or 3, got {levels}")
        if down < -1e-12 * max(1.0, abs(gamma_T)):
            raise ParameterError(
                f"pump ratio {ratio} exceeds the maximum for {levels}-level atoms")
        return self.replace(gamma_up=up, gamma_down=max(down, 0.0))

    def with_detuning(self, delta_omega: float) -> "ModelParams":
        """Move the cavity so that omega_e - nu == delta_omega."""
        return self.replace(nu=self.omega_e - delta_omega)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown parameter keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, source: str | Path) -> "ModelParams":
        """Load from a JSON file path or a JSON document string."""
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ParameterError("parameter document must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class DerivedRates:
    gamma_phi: float
    gamma_T3: float
    gamma_T2: float
    delta_omega: float


def derive_rates(params: ModelParams) -> DerivedRates:
    """Dephasing rate, the two total-rate conventions and the detuning."""
    up, down = params.gamma_up, params.gamma_down
    return DerivedRates(
        gamma_phi=(up + 2.0 * down) / 2.0,
        gamma_T3=2.0 * (up + down),
        gamma_T2=up + down,
        delta_omega=params.omega_e - params.nu,
    )


@dataclass(frozen=True)
class Observables:
    """Steady-state observables shared by every solver.

    ``photon_density`` is always per emitter, <a^dag a>/N.  ``g2`` and ``fano``
    are only available from the exact solvers and are NaN otherwise.
    """

    inversion: float
    photon_density: float
    g2: float = math.nan
    fano: float = math.nan

    @property
    def lasing(self) -> bool:
        return self.photon_density > 1e-6


@dataclass(frozen=True)
class DressedFrame:
    """Microwave-dressed lower levels in the frame rotating with the cavity.

    The couplings are the amplitudes multiplying a rho_{e+} and a rho_{e-};
    |coupling_plus|^2 + |coupling_minus|^2 == g^2.  Expanding the bare
    operator rho_e1 + rho_e2 in the dressed basis gives sqrt(2) times these
    amplitudes, and the sign of the minus amplitude depends on the phase
    convention chosen for |->.
    """

    omega_plus: float
    omega_minus: float
    coupling_plus: complex
    coupling_minus: complex
    delta_omega: float


def dressed_frame(params: ModelParams) -> DressedFrame:
    half = params.phi / 2.0
    plus, minus = dressed_energies(params.Omega)
    return DressedFrame(
        omega_plus=plus,
        omega_minus=minus,
        coupling_plus=complex(params.g * math.cos(half), 0.0),
        coupling_minus=complex(0.0, -params.g * math.sin(half)),
        delta_omega=params.omega_e - params.nu,
    )


def dressed_energies(Omega: float) -> tuple[float, float]:
    """(omega_plus, omega_minus) of the dressed lower levels for a signed drive.

    Unlike :class:`ModelParams` this accepts negative ``Omega``.
    """
    return float(Omega), float(-Omega)


def dressed_states(phi: float) -> tuple[list[complex], list[complex]]:
    """Amplitudes of |+> and |-> on the bare basis (e, 1, 2)."""
    s = 1.0 / math.sqrt(2.0)
    plus = [0.0, s * complex(math.cos(phi / 2), -math.sin(phi / 2)),
            s * complex(math.cos(phi / 2), math.sin(phi / 2))]
    minus = [0.0, -plus[1], plus[2]]
    return plus, minus
