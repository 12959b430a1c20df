import numpy as np
import pytest

from qlbm.dilation import (
    AmplificationReport,
    amplify_singular_values,
    counter_increment,
    decay_bound_holds,
    dilated_march,
    dilation_run_csv,
    marching_query_complexity,
    naive_success_probabilities,
    relocation_operator,
)
from qlbm.encodings import (
    BlockEncoding,
    embed_compact,
    encode_identity,
    encode_scaled_marching,
    restrict_compact,
)
from qlbm.lattice import GridSpec, VelocityField, d1q3
from qlbm.marching import MarchingState, march
from qlbm.classical import init_equilibrium
from qlbm.ops import Dense, verify_unitary, unitary_completion


def contraction_encoding(rng, dim, alpha, norm=0.9):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    a *= norm / np.linalg.norm(a, 2)
    return BlockEncoding(unitary_completion(a / alpha), alpha, 1, Dense(a), "step")


def test_counter_increment_wraps():
    add = counter_increment(2)
    e3 = np.zeros(4)
    e3[3] = 1.0
    np.testing.assert_array_equal(add.apply(e3), np.array([1, 0, 0, 0], dtype=complex))


def test_counter_increment_order():
    add = counter_increment(3)
    m = add.materialize()
    np.testing.assert_array_equal(np.linalg.matrix_power(m, 8), np.eye(8))
    np.testing.assert_allclose(m.conj().T @ m, np.eye(8), atol=1e-15)


def test_relocation_matches_direct_definition():
    # direct construction: increment exactly the non-zero-ancilla branches
    n_t, m, sys = 2, 2, 3
    t_dim, a_dim = 4, 4
    got = relocation_operator(n_t, m, sys).materialize()
    direct = np.zeros((t_dim * a_dim * sys, t_dim * a_dim * sys))
    for c in range(t_dim):
        for a in range(a_dim):
            c2 = c if a == 0 else (c + 1) % t_dim
            for x in range(sys):
                direct[(c2 * a_dim + a) * sys + x, (c * a_dim + a) * sys + x] = 1.0
    np.testing.assert_allclose(got.real, direct, atol=1e-15)


def test_relocation_identity_branch():
    s = relocation_operator(2, 1, 2)
    v = np.zeros(s.dim_in)
    v[0] = 1.0  # counter 0, ancilla 0
    np.testing.assert_allclose(s.apply(v), v, atol=1e-15)


def test_relocation_increments_failed_branch():
    s = relocation_operator(2, 1, 2)
    v = np.zeros(s.dim_in)
    v[2] = 1.0  # counter 0, ancilla 1, system 0
    out = s.apply(v)
    expected = np.zeros_like(v)
    expected[1 * 2 * 2 + 2] = 1.0  # counter 1, ancilla 1, system 0
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_relocation_is_unitary():
    ok, defect = verify_unitary(relocation_operator(3, 2, 4), 1e-12)
    assert ok, defect


def test_single_identity_step():
    be = encode_identity(1.0, 1, 4)
    psi0 = np.array([0.5, 0.5, 0.5, 0.5])
    result = dilated_march(psi0, [be])
    assert result.success_probability == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(result.estimate, psi0, atol=1e-12)


def test_norm_preserving_steps_probability():
    # two norm-preserving steps with alpha = 6 each: success is 1/1296
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    be = BlockEncoding(unitary_completion(q / 6.0), 6.0, 1, Dense(q), "rotation")
    psi0 = rng.standard_normal(4)
    result = dilated_march(psi0, [be, be])
    assert result.success_probability == pytest.approx(1.0 / 1296.0, abs=1e-12)
    assert result.predicted_probability == pytest.approx(1.0 / 1296.0, abs=1e-12)


def test_projection_probability_matches_closed_form(rng):
    for steps in (2, 4, 8):
        encodings = [contraction_encoding(rng, 8, float(rng.uniform(1.0, 2.0)),
                                          norm=float(rng.uniform(0.5, 1.0)))
                     for _ in range(steps)]
        psi0 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        result = dilated_march(psi0, encodings)
        assert result.success_probability == pytest.approx(
            result.predicted_probability, abs=1e-10)
        # and the estimate reproduces the product of the encoded steps
        ref = psi0.copy()
        for be in encodings:
            ref = be.target.apply(ref)
        np.testing.assert_allclose(result.estimate, ref, atol=1e-10)


def test_flow_map_zero_structure(rng):
    encodings = [contraction_encoding(rng, 4, 1.5) for _ in range(4)]
    psi0 = rng.standard_normal(4)
    result = dilated_march(psi0, encodings, counter_qubits=3)
    for rec in result.records:
        # counter values beyond the step count carry nothing
        assert np.all(rec.counter_norms[rec.step + 1:] <= 1e-12)
        if rec.step >= 1:
            # the freshest failure has not re-entered the ancilla-0 sector
            assert rec.ancilla_zero_norms[rec.step] <= 1e-12


def test_first_step_failure_block_is_exact(rng):
    # after one step, counter 1 holds exactly the non-corner branch of U_1
    be = contraction_encoding(rng, 4, 2.0)
    psi0 = rng.standard_normal(4)
    psi0 /= np.linalg.norm(psi0)
    result = dilated_march(psi0, [be], counter_qubits=1)
    full = np.zeros(2 * 4, dtype=complex)
    full[:4] = psi0
    after = be.U.apply(full)
    rec = result.records[-1]
    np.testing.assert_allclose(rec.corner, after[:4], atol=1e-12)
    failure_norm = np.linalg.norm(after[4:])
    assert result.records[-1].counter_norms[1] == pytest.approx(failure_norm, abs=1e-12)


def test_norm_preserved_through_run(rng):
    encodings = [contraction_encoding(rng, 8, 1.2) for _ in range(8)]
    result = dilated_march(rng.standard_normal(8), encodings)
    assert result.norm_drift <= 1e-12


def test_dilated_lbm_matches_marching_trajectory(rng):
    grid = GridSpec(4)
    vs = d1q3()
    ufield = VelocityField.uniform((0.2,), grid, 1)
    tau, omega, steps = 2.0, 0.5, 3
    phi0 = rng.uniform(0.1, 1.0, grid.N)
    state0 = MarchingState.from_distribution(
        init_equilibrium(phi0, ufield, vs, grid), omega)

    be = encode_scaled_marching(ufield, tau, omega, vs, grid)
    psi0 = embed_compact(state0.psi, vs, grid, doubled=True)
    result = dilated_march(psi0, [be] * steps)

    reference = march(state0, ufield, tau, steps)[-1].psi
    got = restrict_compact(result.estimate, vs, grid)
    np.testing.assert_allclose(got, reference, atol=1e-9)
    assert result.success_probability == pytest.approx(
        result.predicted_probability, abs=1e-10)


def test_mixed_ancilla_widths_rejected(rng):
    a = contraction_encoding(rng, 4, 1.5)
    b = encode_identity(1.0, 2, 4)
    with pytest.raises(ValueError, match="share"):
        dilated_march(np.ones(4), [a, b])


def test_naive_scheme_decays(rng):
    encodings = [contraction_encoding(rng, 4, 2.0, norm=1.0) for _ in range(6)]
    per_step, cumulative = naive_success_probabilities(np.ones(4), encodings)
    assert all(p <= 1.0 + 1e-12 for p in per_step)
    assert cumulative[-1] < cumulative[0]
    assert cumulative[-1] < 0.25 ** 5  # alpha = 2 per step forces <= 1/4 each


def test_run_csv(tmp_path, rng):
    encodings = [contraction_encoding(rng, 4, 1.5) for _ in range(2)]
    result = dilated_march(rng.standard_normal(4), encodings)
    path = tmp_path / "run.csv"
    dilation_run_csv(result, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("step,counter_0_norm")
    assert len(lines) == 1 + 3


# ---------------------------------------------------------------------------
# uniform singular value amplification

def test_amplification_scales_identity():
    be = encode_identity(2.0, 1, 4)
    # encoded target is I with alpha 2; amplified with s = 1, delta = 0.1
    amplified, report = amplify_singular_values(be, s=1.0, delta=0.1, eps=1e-3)
    np.testing.assert_allclose(
        amplified.U.materialize()[:4, :4], 0.9 * np.eye(4), atol=1e-12)
    assert report.clamped == 0


def test_amplification_half_identity():
    # A = 0.5 I encoded with alpha 2: amplified block is (1-delta) A / s = 0.9 I
    u = unitary_completion(np.eye(4) * 0.25)
    be = BlockEncoding(u, 2.0, 1, Dense(0.5 * np.eye(4)), "half identity")
    amplified, report = amplify_singular_values(be, s=0.5, delta=0.1, eps=1e-3)
    np.testing.assert_allclose(
        amplified.U.materialize()[:4, :4], 0.9 * np.eye(4), atol=1e-12)
    assert amplified.alpha == pytest.approx(0.5 / 0.9)
    # rescaled by the new alpha, the encoded target is recovered
    np.testing.assert_allclose(amplified.extract_block(), 0.5 * np.eye(4), atol=1e-11)


def test_amplification_near_full():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 4))
    a *= 0.8 / np.linalg.norm(a, 2)
    be = BlockEncoding(unitary_completion(a / 2.0), 2.0, 1, Dense(a), "step")
    amplified, _ = amplify_singular_values(be, s=0.8, delta=1e-6, eps=1e-3)
    sig = np.linalg.svd(amplified.U.materialize()[:4, :4], compute_uv=False)
    assert sig[0] == pytest.approx(1.0, abs=1e-5)


def test_amplification_contract_random(rng):
    for _ in range(10):
        dim = int(rng.integers(2, 17))
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        norm = float(np.linalg.norm(a, 2))
        alpha = norm * float(rng.uniform(1.5, 4.0))
        be = BlockEncoding(unitary_completion(a / alpha), alpha, 1, Dense(a), "step")
        s = norm * float(rng.uniform(1.0, 2.0))
        delta = float(rng.uniform(0.05, 0.5))
        amplified, report = amplify_singular_values(be, s=s, delta=delta, eps=1e-4)
        assert report.clamped == 0
        got = amplified.U.materialize()[:dim, :dim]
        np.testing.assert_allclose(got, (1.0 - delta) * a / s, atol=1e-10)
        ok, defect = verify_unitary(amplified.U, 1e-10)
        assert ok, defect
        expected_queries = (alpha / (delta * s)) * np.log(alpha / (s * 1e-4))
        assert report.query_count == pytest.approx(expected_queries, rel=1e-12)


def test_amplification_reports_clamping(rng):
    a = np.diag([0.9, 0.1])
    be = BlockEncoding(unitary_completion(a / 2.0), 2.0, 1, Dense(a), "step")
    # s below the true norm forces the top singular value past 1
    amplified, report = amplify_singular_values(be, s=0.5, delta=0.1, eps=1e-3)
    assert report.clamped == 1
    assert report.max_excess > 0


def test_amplification_query_formula_at_marching_scale():
    # the per-step query count at the one-step map's normalization
    from qlbm.encodings import scaled_marching_alpha
    alpha = scaled_marching_alpha(0.5)
    num_steps = 20
    delta = 1.0 / num_steps
    eps = 0.01 / (np.e * num_steps)
    be = encode_identity(alpha, 1, 2)
    _, report = amplify_singular_values(be, s=1.0, delta=delta, eps=eps)
    assert report.query_count == pytest.approx(
        (alpha / delta) * np.log(alpha / eps), rel=1e-12)


# ---------------------------------------------------------------------------
# analytic complexity

def test_marching_complexity_values():
    report = marching_query_complexity(10, 0.01, 1.0)
    assert report.queries_per_step == pytest.approx(10 * np.log(1000.0), rel=1e-12)
    assert report.repetitions == 1.0
    assert report.total_queries == pytest.approx(10 * report.queries_per_step, rel=1e-12)
    assert report.parameters["delta"] == pytest.approx(0.1)


def test_marching_complexity_eps_to_one_limit():
    report = marching_query_complexity(50, 1.0 - 1e-12, 1.0)
    assert report.queries_per_step == pytest.approx(50 * np.log(50.0), rel=1e-9)


def test_decay_inequality_full_range():
    assert decay_bound_holds(10**6)


def test_marching_complexity_rejects_bad_input():
    with pytest.raises(ValueError):
        marching_query_complexity(1, 0.01, 1.0)
    with pytest.raises(ValueError):
        marching_query_complexity(10, 2.0, 1.0)
