import math

import numpy as np
import pytest

from ionreservoir import analytic as an
from ionreservoir import master as ma
from ionreservoir.fock import FockSpace
from ionreservoir.model import SystemParams


def random_blocks(dim, seed=0):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(2 * dim, 2 * dim)) + 1j * rng.normal(size=(2 * dim, 2 * dim))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    return ma.InternalBlocks(rho[:dim, :dim], rho[:dim, dim:], rho[dim:, :dim], rho[dim:, dim:])


def test_time_series_validation():
    with pytest.raises(ValueError):
        ma.TimeSeries(np.array([0.0, 0.0]), np.zeros(2))
    with pytest.raises(ValueError):
        ma.TimeSeries(np.array([0.0, 1.0]), np.zeros(3))


def test_initial_blocks_invariants():
    b = ma.initial_blocks(SystemParams(c_g=0.6, c_e=0.8j, alpha_e=1 - 1j))
    assert max(b.invariant_deviations().values()) < 1e-10
    assert b.traces()[0] == pytest.approx(0.36) and b.traces()[3] == pytest.approx(0.64)


def test_rhs_free_oscillator():
    p = SystemParams(g_coupling=0.0, kappa_custom=0.0, dim=10)
    b = random_blocks(10)
    d = ma.rhs(b, p)
    n = FockSpace(10).number
    np.testing.assert_allclose(d.gg, -1j * (n @ b.gg - b.gg @ n), atol=1e-14)
    np.testing.assert_allclose(np.diag(d.gg), 0, atol=1e-14)


def test_dissipator_annihilates_identity():
    p = SystemParams(g_coupling=0.0, omega=1.0, kappa_custom=0.3, dim=12)
    eye = np.eye(12, dtype=complex) / 24
    d = ma.rhs(ma.InternalBlocks(eye, 0 * eye, 0 * eye, eye), p)
    # only the free rotation acts, and it commutes with the identity
    assert np.max(np.abs(d.stack())) == 0


def test_vacuum_coherence_rate():
    p = SystemParams(g_coupling=0.0, kappa_custom=0.4, dim=16)
    z = np.zeros((16, 16), complex)
    ge = z.copy()
    ge[0, 0] = 1
    d = ma.rhs(ma.InternalBlocks(z, ge, z, z), p)
    assert d.ge[0, 0] == pytest.approx(-0.4 / 4, abs=1e-14)
    X2 = FockSpace(16).X2
    var = (X2 @ X2)[0, 0] - X2[0, 0] ** 2
    assert 2 * var.real == pytest.approx(0.25)


def test_unitary_limit_conserves_purity():
    p = SystemParams(kappa_custom=0.0, dim=32)
    s = ma.integrate(ma.initial_blocks(p), np.linspace(0, 5, 11), p)
    purities = [ma.InternalBlocks.from_stack(s.blocks[i]).purity() for i in range(11)]
    np.testing.assert_allclose(purities, 1.0, atol=1e-8)


def test_pure_dephasing_trace_and_oracle():
    p = SystemParams(g_coupling=0.0, kappa_custom=0.2, dim=8)
    init = ma.fock_blocks(p, 2)
    t_end = 5 / 0.2
    s = ma.integrate(init, np.linspace(0, t_end, 6), p)
    assert s.max_trace_drift < 1e-8
    oracle = ma.liouvillian_oracle(init, t_end, p)
    assert np.max(np.abs(s.blocks[-1] - oracle.stack())) < 1e-6


def test_random_blocks_match_oracle():
    p = SystemParams(kappa_custom=0.1, dim=8)
    init = random_blocks(8, seed=3)
    s = ma.integrate(init, [0.0, 50.0], p)
    assert np.max(np.abs(s.blocks[-1] - ma.liouvillian_oracle(init, 50.0, p).stack())) < 1e-6


def test_purity_non_increasing_under_dephasing():
    p = SystemParams(g_coupling=0.0, kappa_custom=0.1, dim=24)
    s = ma.integrate(ma.initial_blocks(p), np.linspace(0, 4, 41), p)
    pur = np.array([ma.InternalBlocks.from_stack(b).purity() for b in s.blocks])
    assert np.all(np.diff(pur) <= 1e-9)
    assert pur[-1] < pur[0]


def test_hermiticity_preserved():
    p = SystemParams(dim=24)
    s = ma.integrate(ma.initial_blocks(p), np.linspace(0, 3, 4), p)
    dev = ma.InternalBlocks.from_stack(s.blocks[-1]).invariant_deviations()
    assert max(dev.values()) < 1e-9


def test_unstable_step_aborts():
    p = SystemParams(dim=24)
    with pytest.raises(ma.IntegrationError):
        ma.integrate(ma.initial_blocks(p), np.linspace(0.0, 20.0, 5), p, courant=8.0)


@pytest.mark.parametrize("mode", ma.MODES)
def test_fused_generator_matches_reference_rhs(mode):
    p = SystemParams(dim=10, kappa_custom=0.3, g_coupling=0.2)
    b = random_blocks(10, seed=1)
    fused = ma.Liouvillian(p, FockSpace(10), mode)(b.stack())
    np.testing.assert_allclose(fused, ma.rhs(b, p, mode).stack(), atol=1e-12)


def test_max_step_rule():
    p = SystemParams(dim=64, kappa_custom=0.05)
    assert ma.max_step(p) == pytest.approx(ma.DEFAULT_COURANT / 64)
    stiff = p.with_(kappa_custom=1.0)
    assert ma.max_step(stiff, courant=1.0) == pytest.approx(4 / 64**2)


def test_lab_coherence_initial_value():
    p = SystemParams(alpha_e=1.5, c_g=0.6, c_e=0.8)
    s = ma.integrate(ma.initial_blocks(p), [0.0, 0.1], p)
    c = ma.lab_coherence(s, p)
    expected = 0.6 * 0.8 * np.exp(-0.5 * 0.25)
    assert c.values[0] == pytest.approx(expected, abs=1e-12)
    ts, op = ma.lab_coherence(s, p, operator_valued=True)
    np.testing.assert_allclose(np.trace(op, axis1=1, axis2=2), ts.values, atol=1e-14)


def test_two_level_rabi_contrast():
    # g = 0, kappa = 0: R = 1/2 sqrt(1 - 4 s^2 u^2 sin^4(Omega_e t / 2))
    p = SystemParams(g_coupling=0.0, kappa_custom=0.0, delta=1.0, omega_L_rabi=1.0, dim=24)
    t = np.linspace(0, 2 * np.pi / math.sqrt(2), 41)
    s = ma.integrate(ma.initial_blocks(p), t, p)
    R = np.abs(ma.lab_coherence(s, p).values)
    su = 0.5
    expected = 0.5 * np.sqrt(1 - 4 * su**2 * np.sin(math.sqrt(2) * t / 2) ** 4)
    np.testing.assert_allclose(R, expected, atol=1e-8)
    assert np.ptp(R) == pytest.approx(0.5 * (1 - math.sqrt(1 - 4 * su**2)), abs=1e-8)


def test_master_matches_analytic_without_noise():
    p = SystemParams(kappa_custom=0.0, dim=48)
    t = np.linspace(0, 6, 31)
    s = ma.integrate(ma.initial_blocks(p), t, p, keep_blocks=False)
    R = np.abs(ma.lab_coherence(s, p).values)
    assert np.max(np.abs(R - an.coherence_modulus_R(p, t))) < 1e-6


def test_literal_mode_differs():
    p = SystemParams(dim=24)
    init = ma.initial_blocks(p)
    a = ma.rhs(init, p)
    b = ma.rhs(init, p, mode="one-sided")
    assert np.max(np.abs(a.stack() - b.stack())) > 1e-3
    with pytest.raises(ValueError):
        ma.rhs(init, p, mode="bogus")


def test_closed_form_R():
    p = SystemParams(dim=32)
    s = ma.integrate(ma.initial_blocks(p), [0.0, 0.5], p)
    assert ma.closed_form_R(p, 0.0) == pytest.approx(abs(ma.lab_coherence(s, p).values[0]), abs=1e-15)
    assert ma.closed_form_R(p, 1e6) < 1e-12
    one = ma.fock_blocks(p.with_(g_coupling=0.0), 1)
    t = np.linspace(0, 10, 5)
    R = ma.closed_form_R(p.with_(g_coupling=0.0, delta=0.0, omega_L_rabi=1e-12), t, initial=one)
    np.testing.assert_allclose(R, 0.5 * np.exp(-3 * 0.05 / 4 * t), rtol=1e-9)


def test_decay_rate_conventions():
    p = SystemParams(gamma=0.02, omega=3.0, dissipator_preset="gamma")
    assert ma.decay_rate_constant(p) == pytest.approx(0.02 / 4)
    assert ma.decay_rate_constant(p, "gamma-omega-squared") == pytest.approx(0.02 * 9)
    with pytest.raises(ValueError):
        ma.decay_rate_constant(p, "other")


def test_fit_decay_rates_ratio_and_zero():
    p = SystemParams(dim=24)
    rows = ma.fit_decay_rates(p, [0, 1, 2, 3])
    ratios = np.array([r.fitted_rate for r in rows]) / rows[0].fitted_rate
    np.testing.assert_allclose(ratios, [1, 3, 7, 13], rtol=0.03)
    assert all(r.rel_error < 0.02 for r in rows)
    quiet = ma.fit_decay_rates(p.with_(kappa_custom=0.0), [0, 2])
    assert all(abs(r.fitted_rate) < 1e-9 for r in quiet)


def test_single_fock_fit_within_two_percent():
    p = SystemParams(dim=24, kappa_custom=0.08)
    (row,) = ma.fit_decay_rates(p, [1])
    assert row.fitted_rate == pytest.approx(3 * 0.08 / 4, rel=0.02)
