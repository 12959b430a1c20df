from fractions import Fraction

import numpy as np
import pytest

from qlbm.lattice import (
    GridSpec,
    VelocityField,
    check_low_mach,
    d1q3,
    d2q5,
    diffusion_coefficient,
    equilibrium,
    equilibrium_field,
    load_velocity_table,
    moment_phi,
    relaxation_regime,
    shift_operator,
    streaming_permutation,
)
from qlbm.ops import verify_unitary

from oracles import dense_streaming


def test_d2q5_weights():
    vs = d2q5()
    assert vs.w == (Fraction(2, 6), Fraction(1, 6), Fraction(1, 6), Fraction(1, 6), Fraction(1, 6))


def test_d2q5_first_moment_vanishes():
    vs = d2q5()
    np.testing.assert_array_equal(vs.weights @ vs.directions, np.zeros(2))


def test_d2q5_second_moment():
    vs = d2q5()
    m = np.zeros((2, 2))
    for w, e in zip(vs.weights, vs.directions):
        m += w * np.outer(e, e)
    np.testing.assert_allclose(m, np.eye(2) / 3.0, atol=1e-16)


def test_d1q3_weights_and_moments():
    vs = d1q3()
    assert sum(vs.w) == 1
    assert vs.e[0] == (0,)
    second = sum(w * e[0] * e[0] for w, e in zip(vs.w, vs.e))
    assert second == Fraction(1, 3)


def test_equilibrium_at_rest():
    grid = GridSpec(4, 4)
    f = equilibrium(0.3, (0.0, 0.0), d2q5(), grid)
    np.testing.assert_allclose(f, [0.1, 0.05, 0.05, 0.05, 0.05], atol=1e-16)


def test_equilibrium_at_low_mach_boundary():
    grid = GridSpec(4, 4)
    f = equilibrium(1.0, (1.0 / 3.0, 0.0), d2q5(), grid)
    assert abs(f[1] - 1.0 / 3.0) < 1e-15
    assert abs(f[2]) < 1e-15


def test_equilibrium_zeroth_moment_identity(rng):
    grid = GridSpec(8, 8)
    vs = d2q5()
    for _ in range(10):
        phi = rng.uniform(0, 2)
        u = rng.uniform(-0.3, 0.3, size=2)
        f = equilibrium(phi, u, vs, grid)
        assert abs(moment_phi(f) - phi) < 1e-14


def test_equilibrium_first_moment_identity(rng):
    grid = GridSpec(8, 8)
    vs = d2q5()
    for _ in range(10):
        phi = rng.uniform(0, 2)
        u = rng.uniform(-0.3, 0.3, size=2)
        f = equilibrium(phi, u, vs, grid)
        first = (grid.c * vs.directions.T) @ f
        np.testing.assert_allclose(first, phi * u * grid.c / 1.0 * 1.0, atol=1e-14)


def test_equilibrium_flags_negative_populations():
    grid = GridSpec(4)
    with pytest.warns(UserWarning, match="low-Mach"):
        equilibrium(1.0, (0.5,), d1q3(), grid)


def test_moment_phi_values():
    assert moment_phi(np.array([0.1, 0.05, 0.05, 0.05, 0.05])) == pytest.approx(0.3)
    assert moment_phi(np.zeros(5)) == 0.0


def test_shift_operator_wraps():
    s = shift_operator(4)
    e3 = np.zeros(4)
    e3[3] = 1.0
    np.testing.assert_array_equal(s.apply(e3), np.array([1, 0, 0, 0], dtype=complex))


def test_shift_operator_order_and_unitarity():
    s = shift_operator(8)
    m = s.materialize()
    np.testing.assert_array_equal(np.linalg.matrix_power(m, 8), np.eye(8))
    np.testing.assert_allclose(m.conj().T @ m, np.eye(8), atol=1e-15)


def test_streaming_rest_direction_is_identity():
    grid = GridSpec(4, 4)
    p0 = streaming_permutation(d2q5(), grid, 0)
    np.testing.assert_array_equal(p0.materialize(), np.eye(16))


def test_streaming_1d_wraps_node():
    grid = GridSpec(4)
    p1 = streaming_permutation(d1q3(), grid, 1)
    e3 = np.zeros(4)
    e3[3] = 1.0
    out = p1.apply(e3)
    assert out[0] == 1.0


def test_streaming_inverse_pairs():
    grid = GridSpec(4, 4)
    vs = d2q5()
    for i, j in [(1, 2), (3, 4)]:
        pi = streaming_permutation(vs, grid, i).materialize()
        pj = streaming_permutation(vs, grid, j).materialize()
        np.testing.assert_array_equal(pj @ pi, np.eye(16))


def test_streaming_matches_dense_oracle():
    grid = GridSpec(4, 2)
    vs = d2q5()
    for i in range(vs.Q):
        got = streaming_permutation(vs, grid, i).materialize()
        np.testing.assert_array_equal(got.real, dense_streaming(vs.e[i], grid.nx, grid.ny))


def test_streaming_is_unitary_permutation():
    grid = GridSpec(8, 4)
    vs = d2q5()
    for i in range(vs.Q):
        op = streaming_permutation(vs, grid, i)
        ok, defect = verify_unitary(op, 1e-14)
        assert ok, defect


def test_streaming_rejects_bad_direction():
    with pytest.raises(ValueError, match="out of range"):
        streaming_permutation(d1q3(), GridSpec(4), 3)


def test_check_low_mach():
    grid = GridSpec(8, 8)
    ok = check_low_mach(VelocityField.uniform((0.2, 0.2), grid, 2), grid)
    assert ok.ok
    bad = check_low_mach(VelocityField.uniform((0.4, 0.0), grid, 2), grid)
    assert not bad.ok
    rest = check_low_mach(VelocityField.uniform((0.0, 0.0), grid, 2), grid)
    assert rest.ok


def test_diffusion_coefficient_values():
    grid = GridSpec(8)
    assert diffusion_coefficient(0.8, grid) == pytest.approx(0.1)
    with pytest.warns(UserWarning):
        assert diffusion_coefficient(0.5, grid) == 0.0
    assert diffusion_coefficient(1.3, grid) == pytest.approx(0.8 / 3.0)


def test_velocity_field_modes(rng):
    grid = GridSpec(4, 2)
    table = rng.uniform(-0.3, 0.3, size=(grid.N, 2))
    field = VelocityField.from_table(table, grid)
    np.testing.assert_array_equal(field.at(5), table)
    tables = rng.uniform(-0.3, 0.3, size=(3, grid.N, 2))
    tf = VelocityField.time_indexed(tables, grid)
    np.testing.assert_array_equal(tf.at(1), tables[1])
    np.testing.assert_array_equal(tf.at(10), tables[2])
    assert not tf.is_static


def test_velocity_table_csv_roundtrip(tmp_path, rng):
    grid = GridSpec(4, 2)
    table = rng.uniform(-0.3, 0.3, size=(grid.N, 2))
    path = tmp_path / "u.csv"
    with open(path, "w") as fh:
        fh.write("ix,iy,ux,uy\n")
        for j in range(grid.N):
            fh.write(f"{j % 4},{j // 4},{table[j, 0]:.17g},{table[j, 1]:.17g}\n")
    field = load_velocity_table(path, grid)
    np.testing.assert_allclose(field.at(0), table, atol=1e-15)


def test_velocity_table_csv_missing_node(tmp_path):
    grid = GridSpec(2, 1)
    path = tmp_path / "u.csv"
    path.write_text("ix,iy,ux,uy\n0,0,0.1,0.0\n")
    with pytest.raises(ValueError, match="unset"):
        load_velocity_table(path, grid)


def test_equilibrium_field_matches_scalar(rng):
    grid = GridSpec(4, 2)
    vs = d2q5()
    phi = rng.uniform(0, 1, size=grid.N)
    u = rng.uniform(-0.3, 0.3, size=(grid.N, 2))
    f = equilibrium_field(phi, u, vs, grid)
    for j in range(grid.N):
        np.testing.assert_allclose(f[:, j], equilibrium(phi[j], u[j], vs, grid), atol=1e-15)


def test_relaxation_regime_strings():
    assert "under-relaxation" in relaxation_regime(1.3)
    assert "empirically" in relaxation_regime(0.8)
    assert "outside" in relaxation_regime(0.4)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError, match="powers of two"):
        GridSpec(6)
