import numpy as np
import pytest

from mtcbi import (
    PreconditionError,
    SimConfig,
    convergence_series,
    default_limit_grid,
    direction_residual,
    laplace_check,
    martingale_defect,
    moment_check,
)

from conftest import make_params, spectral_of


def cfg_for(paths, seed, dt=1e-3, workers=1):
    # horizon/record_grid are replaced by each check's own grid
    return SimConfig(dt=dt, horizon=1.0, paths=paths, seed=seed, workers=workers)


@pytest.fixture(scope="module")
def window_pair_model():
    # eigenvalues 0.52 and 0.48: the non-dominant one lies inside (s/2, s]
    params = make_params(2, [0.05, 0.05], [0.1, 0.05], [[0.5, 0.02], [0.02, 0.5]], [1.0, 0.5])
    return params, spectral_of(params)


def test_martingale_r1_deterministic(r1, spec_r1):
    res = martingale_defect(r1, spec_r1, cfg_for(3, 1), [0.25, 0.5, 1.0])
    assert res.passed
    assert res.standard_error <= 1e-12  # identical paths up to float summation
    assert res.estimate <= 2e-3


def test_martingale_r2_statistical(r2, spec_r2):
    res = martingale_defect(r2, spec_r2, cfg_for(5000, 11), [0.25, 0.5, 1.0])
    assert res.passed
    assert res.tolerance == pytest.approx(3 * res.standard_error + 5e-3)


def test_martingale_reproducible_bitwise(r2, spec_r2):
    a = martingale_defect(r2, spec_r2, cfg_for(500, 42), [0.5, 1.0])
    b = martingale_defect(r2, spec_r2, cfg_for(500, 42), [0.5, 1.0])
    assert a.estimate == b.estimate
    assert a.details["per_time"] == b.details["per_time"]


def test_moment_check_passes_and_null_fails(r2, spec_r2):
    cfg = cfg_for(5000, 23)
    good = moment_check(r2, spec_r2, cfg, 0, [0.5, 1.0])
    assert good.passed and good.estimate <= 1.0
    null = moment_check(r2, spec_r2, cfg, 0, [0.5, 1.0], reference_scale=1.5)
    assert not null.passed
    assert null.estimate > 3.0  # wrong references are loudly wrong, not marginal


def test_moment_check_se_scaling(r2, spec_r2):
    """Quadrupling the ensemble shrinks every standard error by about 2."""
    small = moment_check(r2, spec_r2, cfg_for(2000, 5), 0, [1.0])
    large = moment_check(r2, spec_r2, cfg_for(8000, 5), 0, [1.0])

    def ses(res):
        out = []
        for entry in res.details["per_time"]:
            out.extend(item["se"] for item in entry["mean"])
            out.append(entry["second_moment"]["se"])
        return np.array(out)

    ratio = ses(small) / ses(large)
    assert np.all(ratio >= 1.8) and np.all(ratio <= 2.2)


def test_laplace_zero_argument_exact(r2, spec_r2):
    res = laplace_check(r2, spec_r2, cfg_for(50, 2), None, [[0.0]], 1.0)
    row = res.details["per_lambda"][0]
    assert row["empirical"] == 1.0 and row["reference"] == 1.0
    assert res.passed


def test_laplace_r2_reference(r2, spec_r2):
    res = laplace_check(r2, spec_r2, cfg_for(20000, 17), None, [[1.0]], 2.0)
    assert res.passed
    assert res.details["per_lambda"][0]["reference"] == pytest.approx(np.exp(-3), rel=1e-9)


def test_laplace_initial_state_override(r2, spec_r2):
    res = laplace_check(r2, spec_r2, cfg_for(2000, 19), [0.0], [[1.0]], 0.5)
    assert res.passed
    # started from zero, only the immigration factor remains: exp(-t) at the
    # fixed point of the flow
    assert res.details["per_lambda"][0]["reference"] == pytest.approx(np.exp(-0.5), rel=1e-9)


def test_convergence_requires_supercritical():
    params = make_params(2, [0.1, 0.1], [0.1, 0.1], [[-1.0, 0.1], [0.1, -1.0]], [1.0, 1.0])
    spec = spectral_of(params)
    with pytest.raises(PreconditionError, match="supercritical"):
        convergence_series(params, spec, cfg_for(10, 1), 0, [1.0, 2.0], "L1")
    with pytest.raises(PreconditionError, match="supercritical"):
        direction_residual(params, spec, cfg_for(10, 1), [1.0, 2.0])
    with pytest.raises(PreconditionError):
        default_limit_grid(spec)


def test_convergence_rejects_pair_outside_window(r3, spec_r3):
    # second eigenvalue of the R3 mean matrix is far below s/2
    with pytest.raises(PreconditionError, match=r"Re\(lambda\)"):
        convergence_series(r3, spec_r3, cfg_for(10, 1), 1, [1.0, 2.0], "L1")


def test_convergence_rejects_bad_mode(r2, spec_r2):
    with pytest.raises(ValueError, match="mode"):
        convergence_series(r2, spec_r2, cfg_for(10, 1), 0, [1.0], "L3")


def test_convergence_l1_deterministic_model():
    params = make_params(1, [0.0], [0.0], [[1.0]], [1.0])
    spec = spectral_of(params)
    res = convergence_series(params, spec, cfg_for(2, 1), 0, [2.0, 4.0, 6.0], "L1")
    assert res.standard_error == 0.0
    assert res.passed  # discretization allowance absorbs the O(dt) bias


def test_convergence_l1_r2_small(r2, spec_r2):
    res = convergence_series(r2, spec_r2, cfg_for(8000, 29), 0, [1.5, 3.0, 4.5, 6.0], "L1")
    assert res.passed
    w = res.details["limit_mean"]
    assert complex(w[0], w[1]) == pytest.approx(2.0)


def test_convergence_l2_r2_small(r2, spec_r2):
    res = convergence_series(r2, spec_r2, cfg_for(8000, 37), 0, [1.0, 2.5, 4.0, 6.0], "L2")
    assert res.reference == pytest.approx(7.0)
    assert res.details["cauchy_decreasing"]
    assert res.passed


def test_convergence_non_dominant_pair(window_pair_model):
    params, spec = window_pair_model
    lam = spec.eigen[1][0]
    assert 0.5 * spec.s < lam.real <= spec.s
    grid = [4.0, 6.0, 8.0, 10.0]
    l1 = convergence_series(params, spec, cfg_for(4000, 41), 1, grid, "L1")
    assert l1.passed
    l2 = convergence_series(params, spec, cfg_for(4000, 43), 1, grid, "L2")
    assert l2.passed


def test_direction_residual_r1_deterministic(r1, spec_r1):
    res = direction_residual(r1, spec_r1, cfg_for(2, 1), [0.5, 1.0, 2.5])
    assert res.details["non_increasing"]
    assert res.passed
    series = [e["residual_mean"] for e in res.details["per_time"]]
    np.testing.assert_allclose(
        series, [np.exp(-2 * t) / np.sqrt(2) for t in (0.5, 1.0, 2.5)], rtol=5e-3
    )


def test_direction_residual_r3_mechanics(r3, spec_r3):
    """Small-scale run: the residual decreases but sits far above its noise floor."""
    res = direction_residual(r3, spec_r3, cfg_for(2000, 53), [2.0, 4.0, 8.0])
    series = [e["residual_mean"] for e in res.details["per_time"]]
    assert res.details["non_increasing"]
    assert res.estimate == series[-1]
    assert all(se > 0 for se in (e["se"] for e in res.details["per_time"]))


def test_direction_residual_zero_start_runs(r3, spec_r3):
    """Starting from the origin the check still runs: immigration repopulates.

    Over short horizons the off-direction content is still building up from
    zero, so no monotonicity is expected here, only clean mechanics.
    """
    from dataclasses import replace

    params = replace(r3, x0=np.zeros(2))
    res = direction_residual(params, spectral_of(params), cfg_for(2000, 59), [2.0, 4.0, 8.0])
    assert np.isfinite(res.estimate) and res.estimate > 0
    assert all(np.isfinite(e["se"]) for e in res.details["per_time"])


def test_default_limit_grid(spec_r2):
    grid = default_limit_grid(spec_r2)
    assert grid[-1] == pytest.approx(6.0)
    assert len(grid) == 4 and all(a < b for a, b in zip(grid, grid[1:]))


def test_report_serialization(r2, spec_r2):
    import json

    from mtcbi import VerificationReport

    res = martingale_defect(r2, spec_r2, cfg_for(200, 3), [0.5])
    report = VerificationReport(
        model=r2.to_dict(),
        spectral={"s": spec_r2.s},
        checks=(res,),
        seed=3,
        config={"paths": 200},
    )
    text = json.dumps(report.to_jsonable())
    parsed = json.loads(text)
    assert parsed["all_passed"] == report.all_passed
    assert parsed["checks"][0]["name"] == "martingale_defect"
    rendered = report.render_text()
    assert "martingale_defect" in rendered and "overall" in rendered
