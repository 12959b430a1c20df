import numpy as np
import pytest

from qlbm.ops import (
    Dense,
    Diagonal,
    DirectSum,
    Embedding,
    Identity,
    Permutation,
    Product,
    StructuredOperator,
    Sum,
    Tensor,
    register_transpose,
    scale,
    spectral_norm,
    unitary_completion,
    verify_unitary,
)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def random_operator(rng, dim_out, dim_in, depth):
    """Build a random lazy operator together with an independently assembled
    dense matrix (plain numpy: kron/@/+/zero placement)."""
    if depth == 0:
        if dim_out == dim_in and rng.random() < 0.5:
            kind = rng.choice(["identity", "permutation", "diagonal"])
            if kind == "identity":
                return Identity(dim_in), np.eye(dim_in, dtype=complex)
            if kind == "permutation":
                mapping = rng.permutation(dim_in)
                m = np.zeros((dim_in, dim_in), dtype=complex)
                m[mapping, np.arange(dim_in)] = 1.0
                return Permutation(mapping), m
            entries = rng.standard_normal(dim_in) + 1j * rng.standard_normal(dim_in)
            return Diagonal(entries), np.diag(entries)
        m = rng.standard_normal((dim_out, dim_in)) + 1j * rng.standard_normal((dim_out, dim_in))
        return Dense(m), m

    kinds = ["product", "sum", "embedding"]
    if dim_out % 2 == 0 and dim_in % 2 == 0:
        kinds.append("tensor")
    if dim_out >= 2 and dim_in >= 2:
        kinds.append("directsum")
    kind = rng.choice(kinds)
    if kind == "product":
        mid = int(rng.integers(1, 7))
        a, ma = random_operator(rng, dim_out, mid, depth - 1)
        b, mb = random_operator(rng, mid, dim_in, depth - 1)
        return Product([a, b]), ma @ mb
    if kind == "sum":
        a, ma = random_operator(rng, dim_out, dim_in, depth - 1)
        b, mb = random_operator(rng, dim_out, dim_in, depth - 1)
        coeffs = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        return Sum([a, b], coeffs), coeffs[0] * ma + coeffs[1] * mb
    if kind == "embedding":
        do = int(rng.integers(1, dim_out + 1))
        di = int(rng.integers(1, dim_in + 1))
        ro = int(rng.integers(0, dim_out - do + 1))
        co = int(rng.integers(0, dim_in - di + 1))
        inner, mi = random_operator(rng, do, di, depth - 1)
        dense = np.zeros((dim_out, dim_in), dtype=complex)
        dense[ro:ro + do, co:co + di] = mi
        return Embedding(inner, dim_out, dim_in, ro, co), dense
    if kind == "tensor":
        a, ma = random_operator(rng, 2, 2, depth - 1)
        b, mb = random_operator(rng, dim_out // 2, dim_in // 2, depth - 1)
        return Tensor(a, b), np.kron(ma, mb)
    # direct sum splitting the requested dimensions in two
    do1 = int(rng.integers(1, dim_out))
    di1 = int(rng.integers(1, dim_in))
    a, ma = random_operator(rng, do1, di1, depth - 1)
    b, mb = random_operator(rng, dim_out - do1, dim_in - di1, depth - 1)
    dense = np.zeros((dim_out, dim_in), dtype=complex)
    dense[:do1, :di1] = ma
    dense[do1:, di1:] = mb
    return DirectSum([a, b]), dense


def test_identity_apply():
    assert np.array_equal(Identity(4).apply([1, 2, 3, 4]), np.array([1, 2, 3, 4], dtype=complex))


def test_cyclic_permutation_wraps_basis():
    p = Permutation([1, 2, 3, 0])
    e3 = np.zeros(4)
    e3[3] = 1.0
    out = p.apply(e3)
    assert np.array_equal(out, np.array([1, 0, 0, 0], dtype=complex))


def test_tensor_hadamard_pair():
    op = Tensor(Dense(HADAMARD), Dense(HADAMARD))
    e0 = np.zeros(4)
    e0[0] = 1.0
    np.testing.assert_allclose(op.apply(e0), np.full(4, 0.5), atol=1e-15)


def test_materialize_diagonal():
    np.testing.assert_array_equal(
        Diagonal([1, -1]).materialize(), np.diag([1.0 + 0j, -1.0]))


def test_materialize_shift_product():
    shift = Permutation((np.arange(4) + 1) % 4)
    op = Product([shift, Identity(4)])
    # column-by-column basis application, independent of materialize internals
    expected = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1.0
        expected[:, i] = op.apply(e)
    np.testing.assert_array_equal(op.materialize(), expected)
    cyclic = np.zeros((4, 4))
    cyclic[(np.arange(4) + 1) % 4, np.arange(4)] = 1.0
    np.testing.assert_array_equal(op.materialize(), cyclic.astype(complex))


def test_materialize_embedding():
    op = Embedding(Identity(2), 4, 4, 0, 0)
    np.testing.assert_array_equal(op.materialize(), np.diag([1, 1, 0, 0]).astype(complex))


def test_materialize_cap_rejected():
    with pytest.raises(ValueError, match="entries"):
        Identity(2**14).materialize(cap=2**26)


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        Identity(4).apply(np.ones(3))


def test_product_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        Product([Identity(3), Identity(4)])


def test_apply_is_linear(rng):
    for _ in range(20):
        op, _ = random_operator(rng, int(rng.integers(1, 9)), int(rng.integers(1, 9)), 2)
        u = rng.standard_normal(op.dim_in) + 1j * rng.standard_normal(op.dim_in)
        v = rng.standard_normal(op.dim_in) + 1j * rng.standard_normal(op.dim_in)
        a, b = rng.standard_normal(2)
        lhs = op.apply(a * u + b * v)
        rhs = a * op.apply(u) + b * op.apply(v)
        scale_ref = max(1.0, np.linalg.norm(rhs))
        assert np.linalg.norm(lhs - rhs) / scale_ref < 1e-12


def test_composition_soundness(rng):
    for _ in range(60):
        op, dense = random_operator(rng, int(rng.integers(1, 9)), int(rng.integers(1, 9)), 3)
        got = op.materialize()
        assert got.shape == dense.shape
        np.testing.assert_allclose(got, dense, atol=1e-12 * max(1, np.abs(dense).max()))


def test_apply_materialize_agreement(rng):
    for _ in range(30):
        op, _ = random_operator(rng, int(rng.integers(1, 9)), int(rng.integers(1, 9)), 2)
        v = rng.standard_normal(op.dim_in) + 1j * rng.standard_normal(op.dim_in)
        np.testing.assert_allclose(op.apply(v), op.materialize() @ v, atol=1e-11)


def test_adjoint_matches_conjugate_transpose(rng):
    for _ in range(30):
        op, dense = random_operator(rng, int(rng.integers(1, 9)), int(rng.integers(1, 9)), 2)
        np.testing.assert_allclose(op.adjoint().materialize(), dense.conj().T, atol=1e-12)


def test_register_transpose_swaps_factors(rng):
    a = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    b = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    swap = register_transpose((2, 3), (1, 0))
    np.testing.assert_allclose(swap.apply(np.kron(a, b)), np.kron(b, a), atol=1e-15)


def test_register_transpose_three_factors(rng):
    dims = (2, 3, 4)
    vecs = [rng.standard_normal(d) + 1j * rng.standard_normal(d) for d in dims]
    t = register_transpose(dims, (2, 0, 1))
    got = t.apply(np.kron(np.kron(vecs[0], vecs[1]), vecs[2]))
    want = np.kron(np.kron(vecs[2], vecs[0]), vecs[1])
    np.testing.assert_allclose(got, want, atol=1e-15)


def test_spectral_norm_permutation():
    report = spectral_norm(Permutation([2, 0, 1]), tol=1e-10)
    assert report.method == "dense-svd"
    assert abs(report.spectral_norm_estimate - 1.0) < 1e-10


def test_spectral_norm_diagonal():
    report = spectral_norm(Diagonal([0.5, 0.25]))
    assert abs(report.spectral_norm_estimate - 0.5) < 1e-12


def test_spectral_norm_two_block():
    op = Dense(np.array([[1.0, 0.0], [-1.0, 1.0]]))
    expected = np.sqrt((3.0 + np.sqrt(5.0)) / 2.0)
    report = spectral_norm(op)
    assert abs(report.spectral_norm_estimate - expected) < 1e-12


def test_spectral_norm_power_iteration(rng):
    entries = rng.uniform(0.1, 1.0, size=8192)
    entries[137] = 2.0  # clear gap so the iteration certifies quickly
    report = spectral_norm(Diagonal(entries), tol=1e-10)
    assert report.method == "power-iteration"
    assert report.converged
    assert abs(report.spectral_norm_estimate - 2.0) < 1e-8


def test_spectral_norm_of_unitary_product(rng):
    factors = []
    for _ in range(4):
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6)))
        factors.append(Dense(q))
    report = spectral_norm(Product(factors))
    assert abs(report.spectral_norm_estimate - 1.0) < 1e-10


def test_unitary_completion_zero():
    np.testing.assert_allclose(
        unitary_completion(np.zeros((1, 1))).materialize(),
        np.array([[0, 1], [1, 0]], dtype=complex), atol=1e-15)


def test_unitary_completion_identity():
    u = unitary_completion(np.eye(2)).materialize()
    expected = np.block([[np.eye(2), np.zeros((2, 2))], [np.zeros((2, 2)), -np.eye(2)]])
    np.testing.assert_allclose(u, expected, atol=1e-14)


def test_unitary_completion_diagonal_contraction():
    u = unitary_completion(np.diag([0.6, 0.8])).materialize()
    np.testing.assert_allclose(u[:2, :2], np.diag([0.6, 0.8]), atol=1e-12)
    np.testing.assert_allclose(u[:2, 2:], np.diag([0.8, 0.6]), atol=1e-12)
    np.testing.assert_allclose(u[2:, :2], np.diag([0.8, 0.6]), atol=1e-12)
    ok, defect = verify_unitary(Dense(u), 1e-10)
    assert ok, defect


def test_unitary_completion_top_block_roundtrip(rng):
    for _ in range(10):
        n = int(rng.integers(1, 9))
        b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        b /= np.linalg.norm(b, 2) * (1.0 + rng.uniform(0, 1))
        u = unitary_completion(b)
        np.testing.assert_allclose(u.materialize()[:n, :n], b, atol=1e-10)
        ok, defect = verify_unitary(u, 1e-10)
        assert ok, defect


def test_unitary_completion_rejects_expansion():
    with pytest.raises(ValueError, match="exceeds"):
        unitary_completion(np.diag([1.5]))


def test_unitary_completion_clamps_with_warning():
    with pytest.warns(UserWarning, match="clamped"):
        u = unitary_completion(np.diag([1.0 + 1e-9]))
    ok, _ = verify_unitary(u, 1e-8)
    assert ok


def test_verify_unitary_hadamard():
    ok, defect = verify_unitary(Dense(HADAMARD), 1e-12)
    assert ok and defect < 1e-12


def test_verify_unitary_defect_value():
    ok, defect = verify_unitary(Diagonal([1.0, 0.5]), 1e-10)
    assert not ok
    assert abs(defect - 0.75) < 1e-12


def test_verify_unitary_permutation(rng):
    ok, _ = verify_unitary(Permutation(rng.permutation(16)), 1e-14)
    assert ok


def test_verify_unitary_probed_path(rng):
    entries = np.exp(1j * rng.uniform(0, 2 * np.pi, size=8192))
    ok, defect = verify_unitary(Diagonal(entries), 1e-10)
    assert ok and defect < 1e-10


def test_scale_helper():
    np.testing.assert_allclose(
        scale(Identity(2), 2.5j).materialize(), 2.5j * np.eye(2), atol=1e-15)
