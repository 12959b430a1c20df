import numpy as np
import pytest

from qlbm.bench import (
    BenchCase,
    case_fields_csv,
    gauss_analytic,
    gauss_init,
    paper_1d_cases,
    paper_2d_cases,
    run_case,
    summary_csv,
    summary_rows,
)
from qlbm.lattice import GridSpec, d1q3, d2q5, diffusion_coefficient


def small_1d_case(path="marching", steps=(5, 10), tau=0.8, u=0.2):
    return BenchCase(
        name="small-1d", vs=d1q3(), grid=GridSpec(64), phi0=0.3, sigma0=8.0,
        center=(32.0,), u=(u,), tau_star=tau, steps=tuple(steps), path=path,
    )


def small_2d_case(path="marching", steps=(4,), tau=1.0):
    return BenchCase(
        name="small-2d", vs=d2q5(), grid=GridSpec(16, 16), phi0=0.3, sigma0=3.0,
        center=(8.0, 8.0), u=(0.2, 0.2), tau_star=tau, steps=tuple(steps), path=path,
    )


def test_gauss_init_peak_value():
    case = paper_1d_cases()[0]
    phi = gauss_init(case)
    assert phi[64] == pytest.approx(0.3)


def test_gauss_init_one_sigma_point():
    case = paper_1d_cases()[0]
    phi = gauss_init(case)
    expected = 0.3 * np.exp(-0.5)
    assert phi[64 + 15] == pytest.approx(expected, rel=1e-12)
    assert phi[64 - 15] == pytest.approx(expected, rel=1e-12)


def test_gauss_init_wide_limit():
    case = BenchCase(
        name="wide", vs=d1q3(), grid=GridSpec(32), phi0=0.3, sigma0=1e9,
        center=(16.0,), u=(0.0,), tau_star=1.0, steps=(1,),
    )
    np.testing.assert_allclose(gauss_init(case), np.full(32, 0.3), rtol=1e-12)


def test_analytic_at_time_zero_matches_init():
    for case in (small_1d_case(), small_2d_case()):
        for mode in ("paper", "corrected"):
            np.testing.assert_allclose(gauss_analytic(case, 0.0, mode),
                                       gauss_init(case), atol=1e-15)


def test_analytic_peak_after_forty_steps():
    case = paper_1d_cases(tau_stars=(0.8,), path="classical")[0]
    # D = 0.1 at tau* = 0.8, so the variance grows by 2 * 0.1 * 40 = 8
    assert diffusion_coefficient(0.8, case.grid) == pytest.approx(0.1)
    exact = gauss_analytic(case, 40.0, "paper")
    assert exact.max() == pytest.approx(0.3 * 225.0 / 233.0, rel=1e-6)


def test_analytic_modes_coincide_in_2d():
    case = small_2d_case()
    np.testing.assert_allclose(gauss_analytic(case, 7.0, "paper"),
                               gauss_analytic(case, 7.0, "corrected"), atol=1e-15)


def test_analytic_solves_advection_diffusion():
    # central-difference residual of the corrected closed form, halving steps
    case = small_1d_case()
    d_coeff = diffusion_coefficient(case.tau_star, case.grid)
    u = case.u[0]

    def phi(x, t):
        var = case.sigma0**2 + 2.0 * d_coeff * t
        amp = (case.sigma0**2 / var) ** 0.5
        return case.phi0 * amp * np.exp(-((x - case.center[0] - u * t) ** 2) / (2 * var))

    def residual(h):
        x = np.linspace(20.0, 44.0, 9)
        t = 6.0
        phi_t = (phi(x, t + h) - phi(x, t - h)) / (2 * h)
        phi_x = (phi(x + h, t) - phi(x - h, t)) / (2 * h)
        phi_xx = (phi(x + h, t) - 2 * phi(x, t) + phi(x - h, t)) / h**2
        return np.max(np.abs(phi_t + u * phi_x - d_coeff * phi_xx))

    r1, r2 = residual(0.2), residual(0.1)
    assert r2 < r1 / 3.0  # second-order convergence of the residual


def test_run_case_zero_steps_exact():
    case = small_1d_case(steps=(0,))
    report = run_case(case)
    m = report.metrics[0]
    assert m.rel_l2_paper < 1e-12 and m.rel_l2_corrected < 1e-12
    assert m.path_vs_classical_max < 1e-14


@pytest.mark.parametrize("path", ["marching", "dilated", "qlsa"])
def test_path_equivalence_small_1d(path):
    report = run_case(small_1d_case(path=path))
    for m in report.metrics:
        assert m.path_vs_classical_max <= 1e-9
        assert m.mass_drift <= 1e-10


@pytest.mark.parametrize("path", ["marching", "qlsa"])
def test_path_equivalence_small_2d(path):
    report = run_case(small_2d_case(path=path))
    for m in report.metrics:
        assert m.path_vs_classical_max <= 1e-9
        assert m.mass_drift <= 1e-10


def test_dilated_path_small_2d():
    report = run_case(small_2d_case(path="dilated", steps=(3,)))
    assert report.metrics[0].path_vs_classical_max <= 1e-9


def test_accuracy_against_analytic_small():
    report = run_case(small_1d_case(steps=(10,), tau=1.0))
    assert report.metrics[0].rel_l2_corrected <= 0.05


def test_classical_path_has_zero_deviation():
    report = run_case(small_1d_case(path="classical", steps=(5,)))
    assert report.metrics[0].path_vs_classical_max == 0.0


def test_paper_case_builders():
    cases_1d = paper_1d_cases()
    assert len(cases_1d) == 3
    assert cases_1d[0].grid.nx == 128 and cases_1d[0].sigma0 == 15.0
    cases_2d = paper_2d_cases()
    assert cases_2d[0].grid.ny == 64 and cases_2d[0].u == (0.2, 0.2)
    assert cases_2d[0].steps == (10, 30)


def test_csv_outputs(tmp_path):
    report = run_case(small_1d_case(steps=(2,)))
    fields_path = tmp_path / "fields.csv"
    case_fields_csv(report, fields_path)
    lines = fields_path.read_text().strip().splitlines()
    assert lines[0].startswith("step,ix,iy,phi_numeric")
    assert len(lines) == 1 + 64

    summary_path = tmp_path / "summary.csv"
    summary_csv([report], summary_path)
    rows = summary_rows([report])
    assert rows[0]["case"] == "small-1d"
    assert summary_path.read_text().startswith("case,path,tau_star")


def test_bench_case_validation():
    with pytest.raises(ValueError, match="path"):
        small_1d_case(path="teleport")
