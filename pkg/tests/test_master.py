import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twostate_mfg import (
    EntropyField,
    build_trajectory,
    check_entropy_jump,
    entropy_Z,
    enumerate_terminal_means,
    induced_flow,
    pde_residual,
    sign_root,
    u_star,
    value_U,
)
from twostate_mfg.master import branch_root_at_zero, flux, value_U_by_shooting

S3 = math.sqrt(3) / 2
ZP2 = math.sqrt(3) / (math.sqrt(3) + 1)


def test_sign_root_examples():
    assert sign_root(1.3, 0.0) == 0.0
    assert sign_root(0.0, 0.3) == 0.3
    assert sign_root(2.0, 1e-12) == pytest.approx(S3, abs=1e-9)
    assert branch_root_at_zero(2.0, 1) == pytest.approx(S3, abs=1e-15)
    assert branch_root_at_zero(0.4, 1) == 0.0


def test_entropy_Z_examples():
    assert entropy_Z(1.0, 0.0) == 0.0
    m = np.linspace(-1, 1, 201)
    assert np.max(np.abs(entropy_Z(0.0, m) - 2 * m)) == 0.0
    assert entropy_Z(2.0, 1e-12) == pytest.approx(ZP2, abs=1e-9)
    assert ZP2 == pytest.approx(0.63397, abs=1e-5)


def test_odd_symmetry_and_sign():
    tau, m = np.meshgrid(np.linspace(0, 3, 31), np.linspace(-1, 1, 81))
    Z = entropy_Z(tau, m)
    assert np.max(np.abs(Z + entropy_Z(tau, -m))) <= 1e-12
    assert np.all(np.sign(Z) == np.sign(m))


@given(st.floats(0.0, 3.0), st.floats(-1.0, 1.0))
def test_sign_root_solves_cubic(tau, m):
    M = sign_root(tau, m)
    g = tau**2 * M**3 + tau * (2 - tau) * M * abs(M) + (1 - 2 * tau) * M - m
    assert abs(g) <= 1e-12
    assert np.sign(M) == np.sign(m)


@given(st.floats(0.05, 3.0), st.floats(0.001, 1.0))
def test_consistency_with_root_enumeration(T, m0):
    assert sign_root(T, m0) == pytest.approx(enumerate_terminal_means(T, m0)["M3"], abs=1e-10)


def test_jump_examples():
    j = check_entropy_jump(2.0)
    assert j.z_plus == pytest.approx(ZP2, abs=1e-12)
    assert j.z_minus == pytest.approx(-ZP2, abs=1e-12)
    ok, rh = j
    assert ok and rh == 0.0
    j = check_entropy_jump(0.6)
    mp = ((0.6 - 2) + math.sqrt(0.36 + 2.4)) / 1.2
    assert j.jump_ok and 0 < j.z_plus < 0.5
    assert j.z_plus == pytest.approx(2 * mp / (0.6 * mp + 1), abs=1e-14)
    with pytest.raises(ValueError):
        check_entropy_jump(0.5)


def test_flux_even_in_z_at_zero():
    assert flux(0.0, 0.7) == flux(0.0, -0.7)


def test_value_examples():
    T = 2.0
    m = np.linspace(-1, 1, 21)
    np.testing.assert_allclose(value_U(T, 1, m, T), -m, atol=1e-15)
    np.testing.assert_allclose(value_U(T, -1, m, T), m, atol=1e-15)
    assert value_U(0.0, 1, 1e-12, T) == pytest.approx(-S3, abs=1e-9)
    assert value_U(0.7, 1, 0.0, T) == 0.0 and value_U(0.7, -1, 0.0, T) == 0.0
    assert u_star(T, 1.0, T) == -1.0
    assert u_star(T, 0.5, T) == 0.0
    assert u_star(0.0, 0.9, T) == pytest.approx(-sign_root(2.0, 0.8), abs=1e-15)


def test_value_difference_identity():
    T = 2.0
    t, m = np.meshgrid(np.linspace(0, T, 21), np.linspace(-1, 1, 41))
    diff = value_U(t, -1, m, T) - value_U(t, 1, m, T)
    assert np.max(np.abs(diff - entropy_Z(T - t, m))) <= 1e-12


@pytest.mark.parametrize("t,x,m", [(0.0, 1, 0.3), (0.0, -1, 0.3), (1.0, -1, -0.6), (0.5, 1, 0.05)])
def test_value_against_shooting_oracle(t, x, m):
    assert value_U(t, x, m, 2.0) == pytest.approx(value_U_by_shooting(t, x, m, 2.0), abs=1e-9)


@pytest.mark.parametrize("tau,m", [(0.3, 0.5), (1.5, -0.4)])
def test_pde_residual(tau, m):
    field = EntropyField(T=2.0).fit()
    r1 = pde_residual(field, tau, m, 1e-3)
    r2 = pde_residual(field, tau, m, 5e-4)
    assert r1 <= 1e-5
    assert r1 / r2 == pytest.approx(4.0, abs=0.5)


def test_pde_residual_rejects_shock_stencil():
    field = EntropyField(T=2.0).fit()
    with pytest.raises(ValueError):
        pde_residual(field, 1.0, 5e-4, 1e-3)


def test_induced_flow_short_horizon():
    flow = induced_flow(0.5, 0.2)
    roots = enumerate_terminal_means(0.2, 0.5)
    assert len(roots) == 1
    assert flow.terminal == pytest.approx(roots["M3"], abs=1e-6)


@pytest.mark.parametrize("m0", [0.1, -0.1, 0.5, -0.5])
def test_induced_flow_follows_sign_matched_branch(m0):
    flow = induced_flow(m0, 2.0)
    ref = build_trajectory(2.0, m0, enumerate_terminal_means(2.0, m0)["M3"])
    t = flow.grid.nodes
    assert np.max(np.abs(flow(t) - ref.m(t))) <= 1e-6
    assert np.all(np.sign(flow.values) == np.sign(m0))
    assert np.all(np.diff(np.abs(flow.values)) >= -1e-12)


def test_induced_flow_mirror():
    a, b = induced_flow(0.1, 2.0), induced_flow(-0.1, 2.0)
    np.testing.assert_allclose(a.values, -b.values, atol=1e-12)


def test_induced_flow_rejects_zero():
    with pytest.raises(ValueError):
        induced_flow(0.0, 2.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 1.0))
def test_induced_flow_terminal_matches_sign_root(m0):
    assert induced_flow(m0, 2.0).terminal == pytest.approx(sign_root(2.0, m0), abs=1e-6)


def test_estimator():
    est = EntropyField(T=2.0).fit()
    assert est.has_shock_ and est.shock_.jump_ok
    assert est.get_params() == {"T": 2.0}
    X = np.array([[0.0, 0.9], [2.0, 0.25]])
    np.testing.assert_allclose(est.predict(X), [u_star(0.0, 0.9, 2.0), 0.5], atol=1e-15)
    assert not EntropyField(T=0.4).fit().has_shock_
