import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lwi.params import ModelParams  # noqa: E402


def reference_params(**changes) -> ModelParams:
    """g=0.9, kappa=0.8, Omega=1, Gamma_T=1 (three-level convention), Delta omega=Omega."""
    p = ModelParams(nu=0.0, omega_e=1.0, g=0.9, Omega=1.0, phi=0.0, kappa=0.8,
                    gamma_up=0.25, gamma_down=0.25)
    return p.replace(**changes) if changes else p


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def ref():
    return reference_params()


# criterion number -> list of (part, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name}: {'ok' if p else 'FAILED'} ({d})" for name, p, d in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
