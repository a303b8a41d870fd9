import math

import numpy as np
import pytest

from wgqed.model import (
    DotParams,
    EffectiveDot,
    HBAR_MEV_NS,
    build_eff1_hamiltonian,
    build_eff_hamiltonian,
    build_full_hamiltonian,
    derive_couplings,
    eta_coeff,
    lambda_coeff,
    validate_regime,
)
from wgqed.operators import HilbertSpace, QuantumState, dot_operator

# Reference dot of the decay study: g=0.10, omega=10, delta=200, delta_cav=200.30
DOT_A = DotParams(g=0.10, omega=10.0, delta=200.0, delta_cav=200.30)
DOT_B = DotParams(g=0.08, omega=13.75, delta=220.0, delta_cav=220.30)


def test_lambda_coeff_reference_values():
    # independent oracle: direct formula arithmetic
    oracle_a = 10.0 * 0.10 / 4.0 * (1 / 200.0 + 1 / 200.30)
    assert lambda_coeff(DOT_A) == pytest.approx(oracle_a, rel=1e-15)
    assert lambda_coeff(DOT_A) == pytest.approx(0.0024981278082875685, rel=1e-12)
    # the partner dot was parameterized to nearly equalize the drive
    assert lambda_coeff(DOT_B) == pytest.approx(0.002498297775760327, rel=1e-12)
    assert abs(lambda_coeff(DOT_B) / lambda_coeff(DOT_A) - 1.0) < 1e-4


def test_lambda_coeff_zero_drive_and_errors():
    assert lambda_coeff(DotParams(g=0.1, omega=0.0, delta=200.0, delta_cav=200.3)) == 0
    with pytest.raises(ValueError):
        DotParams(g=0.1, omega=1.0, delta=0.0, delta_cav=1.0)
    with pytest.raises(ValueError):
        DotParams(g=0.1, omega=1.0, delta=1.0, delta_cav=0.0)


def test_eta_coeff_reference_value():
    lam, d = 0.0024981, 0.30
    ej = EffectiveDot(lam=lam, delta=d)
    oracle = lam * lam / 2.0 * (2.0 / d)
    assert eta_coeff(ej, ej) == pytest.approx(oracle, rel=1e-15)
    assert eta_coeff(ej, ej) == pytest.approx(2.08016787e-05, rel=1e-9)


def test_eta_group_scaling_equalizes_diagonal():
    lam0, d0 = 0.0024981, 0.30
    e1 = EffectiveDot(lam=lam0, delta=d0)
    e2 = EffectiveDot(lam=math.sqrt(2) * lam0, delta=2 * d0)
    assert eta_coeff(e2, e2) == pytest.approx(eta_coeff(e1, e1), rel=1e-12)


def test_eta_zero_and_sign_errors():
    e0 = EffectiveDot(lam=0.0, delta=0.3)
    e1 = EffectiveDot(lam=0.002, delta=0.3)
    assert eta_coeff(e0, e1) == 0.0
    with pytest.raises(ValueError):
        eta_coeff(e1, EffectiveDot(lam=0.002, delta=-0.3))


def test_eta_symmetry_and_diagonal_identity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        lj, lk = rng.uniform(1e-4, 1e-2, size=2)
        dj, dk = rng.uniform(0.05, 2.0, size=2)
        a, b = EffectiveDot(lam=lj, delta=dj), EffectiveDot(lam=lk, delta=dk)
        assert eta_coeff(a, b) == pytest.approx(eta_coeff(b, a), rel=1e-15)
        assert eta_coeff(a, a) == pytest.approx(lj**2 / dj, rel=1e-15)


def test_derive_couplings_structure():
    dots = [
        EffectiveDot(lam=0.002, delta=0.2),
        EffectiveDot(lam=0.002 * math.sqrt(2), delta=0.4),
    ]
    cpl = derive_couplings(dots)
    np.testing.assert_array_equal(cpl.delta_jk, -cpl.delta_jk.T)
    np.testing.assert_allclose(cpl.eta, cpl.eta.T, rtol=1e-15)
    assert cpl.epsilon == pytest.approx(0.002**2 / 0.2, rel=1e-12)
    uneven = derive_couplings(
        [EffectiveDot(lam=0.002, delta=0.2), EffectiveDot(lam=0.001, delta=0.2)]
    )
    assert uneven.epsilon is None


def test_full_hamiltonian_matrix_elements_at_t0():
    space = HilbertSpace(1, 3, 2)
    h = build_full_hamiltonian([DOT_A], space, 0.0).toarray()
    e0 = space.basis_index((2,), 0)
    g1 = space.basis_index((1,), 1)
    g0 = space.basis_index((1,), 0)
    assert h[e0, g1] == pytest.approx(0.10, abs=1e-15)
    assert h[e0, g0] == pytest.approx((10.0 + 10.0) / 2.0, abs=1e-12)


def test_full_hamiltonian_zero_couplings():
    space = HilbertSpace(1, 3, 1)
    dot = DotParams(g=0.0, omega=0.0, delta=200.0, delta_cav=200.3)
    h = build_full_hamiltonian([dot], space, 1.0).toarray()
    np.testing.assert_array_equal(h, np.zeros_like(h))


def test_full_hamiltonian_hermitian_at_reference_time():
    space = HilbertSpace(2, 3, 4)
    h = build_full_hamiltonian([DOT_A, DOT_B], space, 0.37).toarray()
    assert np.max(np.abs(h - h.conj().T)) < 1e-12


def test_builders_hermitian_random_samples():
    rng = np.random.default_rng(17)
    for _ in range(10):
        dot = DotParams(
            g=rng.uniform(0.01, 0.5) + 1j * rng.uniform(-0.1, 0.1),
            omega=rng.uniform(1, 20),
            delta=rng.uniform(100, 300),
            delta_cav=rng.uniform(100, 300),
        )
        t = rng.uniform(0, 100)
        h3 = build_full_hamiltonian([dot], HilbertSpace(1, 3, 2), t).toarray()
        assert np.max(np.abs(h3 - h3.conj().T)) < 1e-12
        h1 = build_eff1_hamiltonian([dot], HilbertSpace(1, 2, 2), t).toarray()
        assert np.max(np.abs(h1 - h1.conj().T)) < 1e-12


def test_eff1_structure():
    space = HilbertSpace(2, 2, 2)
    h = build_eff1_hamiltonian([DOT_A, DOT_B], space, 0.0)
    arr = h.toarray()
    # dot in |f> contributes nothing: the ff-sector block vanishes
    dc = space.cavity_dim
    ff = space.basis_index((0, 0), 0)
    np.testing.assert_array_equal(arr[ff : ff + dc, ff : ff + dc], np.zeros((dc, dc)))
    # single dot in |g| at t=0: cavity block is -(stark*n + lam*a + lam* a^+)
    single = HilbertSpace(1, 2, 2)
    harr = build_eff1_hamiltonian([DOT_A], single, 0.0).toarray()
    g0 = single.basis_index((1,), 0)
    lam = lambda_coeff(DOT_A)
    a = np.diag(np.sqrt([1.0, 2.0]), 1)
    block = -(
        DOT_A.stark_coeff * np.diag([0.0, 1.0, 2.0]) + lam * a + np.conj(lam) * a.T
    )
    np.testing.assert_allclose(harr[g0 : g0 + 3, g0 : g0 + 3], block, atol=1e-15)
    # commutes with every |g>_j<g| projector
    for j in range(2):
        pg = dot_operator(space, j, "proj_g").toarray()
        comm = arr @ pg - pg @ arr
        np.testing.assert_allclose(comm, np.zeros_like(comm), atol=1e-14)


def test_eff_hamiltonian_diagonal_entries():
    e1 = EffectiveDot(lam=0.002, delta=0.3)
    e2 = EffectiveDot(lam=0.0025, delta=0.3)
    space = HilbertSpace(2, 2, 0)
    h = build_eff_hamiltonian([e1, e2], space, 0.0).toarray()
    # exactly diagonal, identically zero off the diagonal
    off = h - np.diag(np.diagonal(h))
    assert np.count_nonzero(off) == 0
    eta11 = eta_coeff(e1, e1)
    eta22 = eta_coeff(e2, e2)
    eta12 = eta_coeff(e1, e2)
    assert h[space.basis_index((1, 1)), space.basis_index((1, 1))].real == (
        pytest.approx(eta11 + eta22 + 2 * eta12, rel=1e-14)
    )
    assert h[space.basis_index((0, 1)), space.basis_index((0, 1))].real == (
        pytest.approx(eta22, rel=1e-14)
    )
    assert h[space.basis_index((0, 0)), space.basis_index((0, 0))] == 0.0


def test_eff_hamiltonian_unequal_detuning_cross_term():
    e1 = EffectiveDot(lam=0.002, delta=0.2)
    e2 = EffectiveDot(lam=0.002 * math.sqrt(2), delta=0.4)
    space = HilbertSpace(2, 2, 0)
    # at delta_jk * t / hbar = pi/2 the cosine kills the cross term
    t = (math.pi / 2) * HBAR_MEV_NS / 0.2
    h = build_eff_hamiltonian([e1, e2], space, t).toarray()
    gg = space.basis_index((1, 1))
    expected = eta_coeff(e1, e1) + eta_coeff(e2, e2)
    assert h[gg, gg].real == pytest.approx(expected, rel=1e-10)


def test_validate_regime_reference_pass():
    report = validate_regime([DOT_A])
    assert report.passed
    by_name = {c.name: c for c in report.checks}
    assert by_name["large-detuning"].ratio == pytest.approx(20.0, rel=1e-12)
    assert by_name["dispersive-hierarchy"].ratio == pytest.approx(120.09, rel=1e-3)


def test_validate_regime_tone_imbalance_fails():
    dot = DotParams(
        g=0.1, omega=10.0, delta=200.0, delta_cav=200.3, omega_prime=9.0
    )
    report = validate_regime([dot])
    by_name = {c.name: c for c in report.checks}
    assert not by_name["tone-balance"].passed
    assert not report.passed


def test_validate_regime_dispersive_failure_ratio():
    # small two-photon detuning: ratio 0.001/0.0025 = 0.4
    dot = DotParams(g=0.1, omega=10.0, delta=200.0, delta_cav=200.001)
    report = validate_regime([dot])
    by_name = {c.name: c for c in report.checks}
    assert not by_name["dispersive-hierarchy"].passed
    assert by_name["dispersive-hierarchy"].ratio == pytest.approx(0.4, rel=1e-2)


def test_validate_regime_never_raises_and_reports_all():
    # zero couplings are trivially dispersive: every ratio still reported
    dot = DotParams(g=0.0, omega=0.0, delta=1.0, delta_cav=-1.0)
    report = validate_regime([dot])
    assert len(report.checks) == 5
    assert all(c.ratio is not None for c in report.checks)
    # mixed-sign two-photon detunings are flagged
    report2 = validate_regime(
        [DOT_A, DotParams(g=0.1, omega=10.0, delta=200.0, delta_cav=199.7)]
    )
    by_name = {c.name: c for c in report2.checks}
    assert not by_name["two-photon-detuning"].passed
    assert not report2.passed
