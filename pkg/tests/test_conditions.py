"""Condition reports, spectral norms, and power-law fits."""

import numpy as np
import pytest

import biaffine_design as bd
from biaffine_design.conditions import aggregate_and_fit, power_iteration_norm
from biaffine_design.ensembles import DenseInverseHandle, substream
from biaffine_design.errors import InsufficientData


def test_spectral_norm_identity_and_diag():
    assert bd.spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert bd.spectral_norm(np.diag([1.0, 3.0])) == pytest.approx(3.0)


def test_power_iteration_matches_svd_oracle():
    rng = np.random.default_rng(12)
    M = rng.standard_normal((20, 20))
    oracle = float(np.linalg.svd(M, compute_uv=False)[0])
    assert abs(power_iteration_norm(M) - oracle) <= 1e-8 * oracle


def test_check_conditions_identity_physics():
    sys = bd.PhysicalSystem(A=np.eye(4), b=np.eye(4)[0])
    prob = bd.GeneratedProblem(system=sys, c=np.eye(4)[0], meta={})
    report = bd.check_conditions(prob, DenseInverseHandle(sys.A))
    assert report.grad_core_sq == pytest.approx(1.0)
    assert report.overlap0 == pytest.approx(1.0)
    assert report.inv_norm2 == pytest.approx(1.0)
    assert report.B_norm_inf == report.B_norm_1 == report.B_norm_2 == 1.0


def test_check_conditions_gaussian_two_paths_agree():
    prob = bd.generate_problem(bd.EnsembleSpec(kind="gaussian", n=24, seed=9, k=2))
    exact = bd.check_conditions(prob)  # G-handle path
    dense = bd.check_conditions(prob, DenseInverseHandle(prob.system.A))
    assert abs(exact.grad_core_sq - dense.grad_core_sq) <= 1e-8 * max(exact.grad_core_sq, 1.0)
    assert abs(exact.overlap0 - dense.overlap0) <= 1e-8 * (1.0 + exact.overlap0)
    assert abs(exact.inv_norm2 - dense.inv_norm2) <= 1e-8 * exact.inv_norm2


def test_check_conditions_svd_exact_norm():
    prob = bd.generate_problem(bd.EnsembleSpec(kind="svd", n=64, seed=2, gamma=0.5, k=2))
    report = bd.check_conditions(prob)
    assert report.inv_norm2 == pytest.approx(8.0, abs=0)  # sqrt(64) exactly by construction


def test_fit_scaling_exact_power_law():
    fit = bd.fit_scaling([(8, 64.0), (16, 256.0), (32, 1024.0)])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_scaling_constant_series_convention():
    fit = bd.fit_scaling([(8, 7.0), (16, 7.0), (32, 7.0)])
    assert abs(fit.slope) <= 1e-12
    assert fit.r_squared == 1.0


def test_fit_scaling_noisy_half_power():
    rng = np.random.default_rng(31)
    points = [(n, n**0.5 * (1.0 + 0.01 * rng.standard_normal())) for n in (8, 16, 32, 64, 128)]
    fit = bd.fit_scaling(points)
    assert abs(fit.slope - 0.5) <= 0.05


def test_fit_scaling_rescale_invariance():
    points = [(8, 3.0), (16, 5.5), (32, 9.1), (64, 20.0)]
    base = bd.fit_scaling(points)
    scaled = bd.fit_scaling([(n, 7.3 * v) for n, v in points])
    assert scaled.slope == pytest.approx(base.slope, abs=1e-12)
    assert scaled.intercept == pytest.approx(base.intercept + np.log(7.3), abs=1e-12)


def test_fit_scaling_insufficient_data():
    with pytest.raises(InsufficientData):
        bd.fit_scaling([(8, 1.0), (16, 2.0)])
    with pytest.raises(InsufficientData):
        bd.fit_scaling([(8, 1.0), (16, -2.0), (32, 0.0)])


def test_aggregate_and_fit_excludes_nonpositive():
    fit = aggregate_and_fit(
        "q", [(8, 2.0), (8, 0.0), (16, 4.0), (16, 4.0), (32, 8.0), (32, 8.0)]
    )
    assert fit.n_excluded == 1
    assert fit.slope == pytest.approx(1.0, abs=1e-12)


def test_condition_study_output_shape_and_fits():
    template = bd.EnsembleSpec(kind="gaussian", n=32, seed=17, k=2)
    rows, fits = bd.condition_study(template, (8, 16, 32), 3)
    assert len(rows) == 9
    names = {f.quantity for f in fits}
    assert names == {"inv_norm2", "grad_core_sq", "overlap0", "inv_max", "adj0_inf"}
    for f in fits:
        assert np.isfinite(f.slope)


def test_overlap_second_moment_consistent_with_vector_norms():
    # E|c^T G b|^2 = ||b||^2 ||c||^2; sample mean across seeds within 4 SE per n
    for n in (16, 64):
        vals = []
        for seed_idx in range(8):
            prob = bd.generate_problem(
                bd.EnsembleSpec(kind="gaussian", n=n, seed=bd.mix_seed(1234567, n, seed_idx), k=2)
            )
            report = bd.check_conditions(prob)
            expected = float(
                (prob.system.b @ prob.system.b) * (prob.c @ prob.c)
            )
            vals.append(report.overlap0**2 / expected)
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
        assert abs(mean - 1.0) <= 4 * se


def test_grad_core_positive_on_nondegenerate_draws():
    for seed in range(5):
        prob = bd.generate_problem(bd.EnsembleSpec(kind="gaussian", n=16, seed=seed, k=2))
        assert bd.check_conditions(prob).grad_core_sq > 0.0


def test_condition_csv_roundtrip(tmp_path):
    template = bd.EnsembleSpec(kind="gaussian", n=16, seed=1, k=2)
    rows, fits = bd.condition_study(template, (4, 8, 16), 2)
    csv_path = tmp_path / "conditions.csv"
    json_path = tmp_path / "fits.json"
    from biaffine_design.conditions import fits_to_json, write_condition_csv

    write_condition_csv(rows, csv_path)
    fits_to_json(fits, json_path)
    lines = csv_path.read_text().strip().split("\n")
    assert lines[0] == (
        "n,seed,inv_norm2,B_norm_inf,B_norm_1,B_norm_2,b_inf,b_1,c_inf,c_1,"
        "grad_core_sq,overlap0,inv_max,adj0_inf"
    )
    assert len(lines) == 1 + 6
    import json

    payload = json.loads(json_path.read_text())
    assert set(payload) == {f.quantity for f in fits}
    assert "slope" in payload["inv_norm2"]
