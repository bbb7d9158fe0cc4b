import math

import pytest
from hypothesis import given, strategies as st

from lwi.params import (AllRatesZero, ModelParams, Observables, ParameterError, derive_rates,
                        dressed_energies, dressed_frame, dressed_states)
from lwi.meanfield import normal_state

rates = st.floats(0, 10, allow_nan=False)


@pytest.mark.parametrize("up,down,gphi,t3,t2", [
    (0.0, 1.0, 1.0, 2.0, 1.0),
    (0.25, 0.25, 0.375, 1.0, 0.5),
    (1.0, 0.0, 0.5, 2.0, 1.0),
])
def test_derive_rates_examples(up, down, gphi, t3, t2):
    r = derive_rates(ModelParams(gamma_up=up, gamma_down=down))
    assert (r.gamma_phi, r.gamma_T3, r.gamma_T2) == (gphi, t3, t2)


@given(rates, rates)
def test_derive_rates_formulas(up, down):
    p = ModelParams(gamma_up=up, gamma_down=down)
    r = derive_rates(p)
    assert r.gamma_phi == (up + 2 * down) / 2
    assert r.gamma_T3 == 2 * (up + down)
    assert r.gamma_T2 == up + down
    assert r.gamma_phi >= 0
    assert derive_rates(p) == r


@given(st.floats(-50, 50, allow_nan=False))
def test_phi_wrapped(phi):
    p = ModelParams(phi=phi)
    assert -math.pi < p.phi <= math.pi
    assert math.isclose(math.cos(p.phi), math.cos(phi), abs_tol=1e-9)
    assert math.isclose(math.sin(p.phi), math.sin(phi), abs_tol=1e-9)


def test_phi_pi_stays_pi():
    assert ModelParams(phi=math.pi).phi == math.pi
    assert ModelParams(phi=-math.pi).phi == math.pi


@pytest.mark.parametrize("field,value", [("g", -1), ("kappa", -0.1), ("gamma_up", -1e-3),
                                         ("Omega", -2), ("n_emitters", 0), ("fock_dim", 1),
                                         ("nu", math.nan), ("n_emitters", 1.5)])
def test_invalid_params(field, value):
    with pytest.raises(ParameterError):
        ModelParams(**{field: value})


def test_json_roundtrip(tmp_path):
    p = ModelParams(nu=0.3, phi=1.0, n_emitters=4)
    path = tmp_path / "p.json"
    import json
    path.write_text(json.dumps(p.to_dict()))
    assert ModelParams.from_json(path) == p
    assert ModelParams.from_json(json.dumps(p.to_dict())) == p
    with pytest.raises(ParameterError):
        ModelParams.from_dict({"g": 1.0, "bogus": 2})


def test_pump_ratio_conventions():
    p3 = ModelParams().with_pump_ratio(0.3, 1.0, levels=3)
    assert math.isclose(derive_rates(p3).gamma_T3, 1.0)
    assert math.isclose(p3.gamma_up, 0.3)
    p2 = ModelParams().with_pump_ratio(0.7, 1.0, levels=2)
    assert math.isclose(derive_rates(p2).gamma_T2, 1.0)
    with pytest.raises(ParameterError):
        ModelParams().with_pump_ratio(0.6, 1.0, levels=3)


def test_detuning():
    p = ModelParams(omega_e=2.0).with_detuning(0.7)
    assert math.isclose(p.delta_omega, 0.7)
    assert math.isclose(derive_rates(p).delta_omega, 0.7)


@pytest.mark.parametrize("phi,plus,minus", [
    (0.0, 0.9, 0.0), (math.pi, 0.0, 0.9), (math.pi / 2, 0.9 / math.sqrt(2), 0.9 / math.sqrt(2)),
])
def test_dressed_frame_limits(phi, plus, minus):
    f = dressed_frame(ModelParams(g=0.9, phi=phi))
    assert math.isclose(abs(f.coupling_plus), plus, abs_tol=1e-15)
    assert math.isclose(abs(f.coupling_minus), minus, abs_tol=1e-15)


@given(st.floats(0, 5), st.floats(-10, 10))
def test_dressed_couplings_norm(g, phi):
    f = dressed_frame(ModelParams(g=g, phi=phi))
    assert math.isclose(abs(f.coupling_plus) ** 2 + abs(f.coupling_minus) ** 2, g ** 2,
                        rel_tol=1e-12, abs_tol=1e-15)


@given(st.floats(-5, 5, allow_nan=False))
def test_dressed_energies_odd(Omega):
    plus, minus = dressed_energies(Omega)
    assert dressed_energies(-Omega) == (minus, plus)


def test_dressed_states_orthonormal():
    import numpy as np
    plus, minus = (np.array(v) for v in dressed_states(0.7))
    assert math.isclose(np.vdot(plus, plus).real, 1.0)
    assert abs(np.vdot(plus, minus)) < 1e-15


def test_observables_lasing_flag():
    assert Observables(0.0, 2e-6).lasing
    assert not Observables(0.0, 1e-7).lasing
    assert math.isnan(Observables(0.0, 0.0).g2)


def test_all_rates_zero():
    with pytest.raises(AllRatesZero):
        normal_state(ModelParams(gamma_up=0, gamma_down=0))
