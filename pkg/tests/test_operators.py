import numpy as np
import pytest

from wgqed.operators import (
    HilbertSpace,
    LinearOperator,
    QuantumState,
    SpaceMismatchError,
    cavity_ops,
    dot_operator,
    embed,
    fidelity,
    partial_trace,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def test_space_dims_and_ordering():
    sp = HilbertSpace(2, 3, 4)
    assert sp.dim == 9 * 5
    assert sp.local_dims == (3, 3, 5)
    # dot 0 slowest, cavity fastest
    assert sp.basis_index((0, 0), 1) == 1
    assert sp.basis_index((0, 1), 0) == 5
    assert sp.basis_index((1, 0), 0) == 15


def test_space_validation():
    with pytest.raises(ValueError):
        HilbertSpace(0, 2, 0)
    with pytest.raises(ValueError):
        HilbertSpace(1, 4, 0)
    with pytest.raises(ValueError):
        HilbertSpace(1, 2, -1)


def test_embed_single_site_identity_case():
    sp = HilbertSpace(1, 2, 0)
    op = embed(sp, 0, SZ)
    np.testing.assert_array_equal(op.toarray(), SZ)


def test_embed_flip_second_dot():
    sp = HilbertSpace(2, 2, 0)
    x2 = embed(sp, 1, SX)
    ff = QuantumState.basis(sp, (0, 0)).amplitudes
    fg = QuantumState.basis(sp, (0, 1)).amplitudes
    np.testing.assert_allclose(x2.apply(ff), fg)


def test_embed_cavity_annihilation():
    sp = HilbertSpace(1, 2, 2)
    a = embed(sp, "cavity", np.diag(np.sqrt([1.0, 2.0]), 1))
    psi = QuantumState.basis(sp, (1,), 2).amplitudes
    out = a.apply(psi)
    expected = np.sqrt(2) * QuantumState.basis(sp, (1,), 1).amplitudes
    np.testing.assert_allclose(out, expected)


def test_embed_errors():
    sp = HilbertSpace(2, 2, 0)
    with pytest.raises(ValueError):
        embed(sp, 0, np.eye(3))
    with pytest.raises(ValueError):
        embed(sp, 5, SX)
    with pytest.raises(ValueError):
        embed(sp, "cavity", np.eye(1))


def test_embed_product_homomorphism():
    rng = np.random.default_rng(11)
    sp = HilbertSpace(2, 3, 2)
    for site in (0, 1, "cavity"):
        d = sp.site_dim(site)
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        lhs = (embed(sp, site, a) @ embed(sp, site, b)).toarray()
        rhs = embed(sp, site, a @ b).toarray()
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_dot_operator_identities():
    sp = HilbertSpace(1, 3, 0)
    raise_op = dot_operator(sp, 0, "raise")
    lower_op = dot_operator(sp, 0, "lower")
    proj_g = dot_operator(sp, 0, "proj_g")
    # sigma^- sigma^+ = |g><g|
    np.testing.assert_array_equal(
        (lower_op @ raise_op).toarray(), proj_g.toarray()
    )
    # <e| sigma^+ |g> = 1
    assert raise_op.toarray()[sp.basis_index((2,)), sp.basis_index((1,))] == 1.0
    # completeness
    total = (
        dot_operator(sp, 0, "proj_f").toarray()
        + proj_g.toarray()
        + dot_operator(sp, 0, "proj_e").toarray()
    )
    np.testing.assert_array_equal(total, np.eye(3))


def test_dot_operator_two_level_restriction():
    sp = HilbertSpace(1, 2, 0)
    for kind in ("raise", "lower", "proj_e"):
        with pytest.raises(ValueError):
            dot_operator(sp, 0, kind)
    with pytest.raises(ValueError):
        dot_operator(sp, 0, "nonsense")


def test_cavity_ops():
    sp = HilbertSpace(1, 2, 3)
    a, ad, num = cavity_ops(sp)
    v1 = QuantumState.basis(sp, (0,), 1).amplitudes
    v0 = QuantumState.basis(sp, (0,), 0).amplitudes
    assert np.vdot(v0, a.apply(v1)) == pytest.approx(1.0)
    for n in range(4):
        vn = QuantumState.basis(sp, (0,), n).amplitudes
        assert np.vdot(vn, num.apply(vn)).real == pytest.approx(float(n))
    np.testing.assert_array_equal(a.apply(v0), np.zeros_like(v0))
    np.testing.assert_allclose((ad @ a).toarray(), num.toarray(), atol=0)
    with pytest.raises(ValueError):
        cavity_ops(HilbertSpace(1, 2, 0))


def test_hermitian_flag_enforced():
    sp = HilbertSpace(1, 2, 0)
    with pytest.raises(ValueError):
        LinearOperator(sp, np.array([[0, 1], [0, 0]], dtype=complex), hermitian=True)
    # hermitian builder outputs carry a verified flag
    op = embed(sp, 0, SZ)
    assert op.hermitian


def test_partial_trace_product_with_vacuum():
    sp = HilbertSpace(2, 2, 3)
    psi = np.zeros(sp.dim, dtype=complex)
    amp = np.array([0.6, 0.8j])
    for s, a in ((0, 0.6), (1, 0.8j)):
        psi[sp.basis_index((0, s), 0)] = a
    state = QuantumState.pure(sp, psi)
    reduced = partial_trace(state, [0, 1])
    qsp = HilbertSpace(2, 2, 0)
    target = np.zeros(qsp.dim, dtype=complex)
    target[qsp.basis_index((0, 0))] = 0.6
    target[qsp.basis_index((0, 1))] = 0.8j
    np.testing.assert_allclose(
        reduced.amplitudes, np.outer(target, target.conj()), atol=1e-14
    )


def test_partial_trace_bell_marginal():
    sp = HilbertSpace(2, 2, 0)
    psi = np.zeros(4, dtype=complex)
    psi[sp.basis_index((0, 0))] = 1 / np.sqrt(2)
    psi[sp.basis_index((1, 1))] = 1 / np.sqrt(2)
    reduced = partial_trace(QuantumState.pure(sp, psi), [0])
    np.testing.assert_allclose(reduced.amplitudes, np.eye(2) / 2, atol=1e-14)


def test_partial_trace_preserves_trace_and_keep_all():
    rng = np.random.default_rng(5)
    sp = HilbertSpace(2, 2, 2)
    m = rng.normal(size=(sp.dim, sp.dim)) + 1j * rng.normal(size=(sp.dim, sp.dim))
    rho = m @ m.conj().T
    rho /= np.trace(rho).real
    state = QuantumState.density(sp, rho)
    full = partial_trace(state, [0, 1, "cavity"])
    np.testing.assert_allclose(full.amplitudes, rho, atol=1e-12)
    part = partial_trace(state, [1])
    assert np.trace(part.amplitudes).real == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        partial_trace(state, [])
    with pytest.raises(ValueError):
        partial_trace(state, ["cavity"])


def test_fidelity_values_and_symmetry():
    sp = HilbertSpace(1, 2, 0)
    f = QuantumState.basis(sp, (0,))
    plus = QuantumState.pure(sp, np.array([1, 1]) / np.sqrt(2))
    assert fidelity(plus, plus) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(plus, f) == pytest.approx(0.5, abs=1e-12)
    mixed = QuantumState.density(sp, np.eye(2) / 2)
    assert fidelity(mixed, mixed) == pytest.approx(0.5, abs=1e-12)
    assert fidelity(mixed, plus.to_density()) == pytest.approx(
        fidelity(plus.to_density(), mixed), abs=1e-12
    )
    other = HilbertSpace(2, 2, 0)
    with pytest.raises(SpaceMismatchError):
        fidelity(plus, QuantumState.basis(other, (0, 0)))


def test_state_validation():
    sp = HilbertSpace(1, 2, 0)
    with pytest.raises(ValueError):
        QuantumState.pure(sp, np.array([1.0, 1.0]))  # unnormalized
    with pytest.raises(ValueError):
        QuantumState.density(sp, np.array([[1.0, 0.5], [0.4, 0.0]]))  # not herm
    with pytest.raises(ValueError):
        QuantumState.density(sp, np.eye(2))  # trace 2
    with pytest.raises(ValueError):
        QuantumState.density(
            sp, np.array([[1.5, 0], [0, -0.5]])
        )  # negative eigenvalue
    st = QuantumState.plus_register(sp)
    assert not st.amplitudes.flags.writeable
