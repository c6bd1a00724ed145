import numpy as np
import pytest

from mtcbi import mean_vector, second_moment_limit, second_moment_projection

from _oracles import mean_closed, second_moment_closed
from conftest import make_params, spectral_of


def r2_total(t):
    """Analytic projected second moment of the scalar reference model."""
    return 7 * np.exp(2 * t) - 8 * np.exp(t) + 2


@pytest.fixture(scope="module")
def at_half():
    # symmetric mean matrix with eigenvalues exactly (1, 1/2): the second
    # eigenvalue sits precisely on the s/2 regime boundary
    params = make_params(2, [0.1, 0.1], [0.2, 0.1], [[0.75, 0.25], [0.25, 0.75]], [1.0, 0.5])
    return params, spectral_of(params)


@pytest.fixture(scope="module")
def below_half():
    params = make_params(2, [1.0, 1.0], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]], [1.0, 2.0])
    return params, spectral_of(params)


@pytest.fixture(scope="module")
def cyclic3():
    # rotation-coupled three-type model: the non-dominant eigenvalues are a
    # genuine complex pair with real part 0.55 inside (s/2, s] = (0.5, 1]
    b = [[0.7, 0.3, 0.0], [0.0, 0.7, 0.3], [0.3, 0.0, 0.7]]
    params = make_params(3, [0.2, 0.2, 0.2], [0.1, 0.0, 0.0], b, [1.0, 0.5, 0.25])
    return params, spectral_of(params)


def test_mean_r1_closed_form(r1, spec_r1):
    got = mean_vector(r1, spec_r1, 1.0)
    np.testing.assert_allclose(got, [np.cosh(1), np.sinh(1)], rtol=1e-12)


def test_mean_r2_closed_form(r2, spec_r2):
    assert mean_vector(r2, spec_r2, 1.0)[0] == pytest.approx(2 * np.e - 1, rel=1e-10)


def test_mean_zero_time(r3, spec_r3):
    np.testing.assert_array_equal(mean_vector(r3, spec_r3, 0.0), r3.x0)


def test_mean_r3_high_precision_oracle(r3, spec_r3):
    got = mean_vector(r3, spec_r3, 1.0)
    ref = mean_closed(spec_r3.b_tilde, spec_r3.beta_tilde, r3.x0, 1.0)
    np.testing.assert_allclose(got, ref, rtol=1e-9)


def test_mean_no_immigration_reduces_to_homogeneous(r1, spec_r1):
    # beta~ = 0: no quadrature runs, result is the pure matrix-exponential map
    got = mean_vector(r1, spec_r1, 2.0)
    ref = np.array([np.cosh(2), np.sinh(2)])
    np.testing.assert_allclose(got, ref, rtol=1e-12)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_second_moment_r2_closed_form(r2, spec_r2, t):
    b = second_moment_projection(r2, spec_r2, 0, t)
    assert b.total == pytest.approx(r2_total(t), rel=1e-6)
    # per-part closed forms of the scalar model
    assert b.e_term == pytest.approx((2 * np.exp(t) - 1) ** 2, rel=1e-12)
    assert b.i_terms[0] == pytest.approx(2 * (1.5 * np.exp(2 * t) - 2 * np.exp(t) + 0.5), rel=1e-6)
    assert b.nu_term == 0.0
    assert b.c_coeffs[0] == pytest.approx(2.0)


def test_second_moment_zero_time(r2, spec_r2):
    assert second_moment_projection(r2, spec_r2, 0, 0.0).total == pytest.approx(1.0, abs=1e-14)


def test_second_moment_breakdown_additivity(r3, spec_r3):
    for pair in (0, 1):
        b = second_moment_projection(r3, spec_r3, pair, 1.0)
        parts = b.e_term + b.i_terms.sum() + b.nu_term
        assert b.total == pytest.approx(parts, rel=1e-12)
        assert b.e_term >= 0 and b.nu_term >= 0 and np.all(b.i_terms >= 0)


def test_second_moment_r3_high_precision_oracle(r3, spec_r3):
    lam, v = spec_r3.eigen[0]
    got = second_moment_projection(r3, spec_r3, 0, 1.0).total
    ref = second_moment_closed(
        spec_r3.b_tilde,
        spec_r3.beta_tilde,
        r3.x0,
        r3.c,
        [list(m.atoms) for m in r3.mu],
        list(r3.nu.atoms),
        complex(lam),
        v,
        1.0,
    )
    assert got == pytest.approx(ref, rel=2e-6)


def test_second_moment_complex_pair_oracle(cyclic3):
    params, spec = cyclic3
    lam, v = spec.eigen[1]
    assert abs(lam.imag) > 0.1  # genuinely complex pair
    b = second_moment_projection(params, spec, 1, 1.0)
    ref = second_moment_closed(
        spec.b_tilde,
        spec.beta_tilde,
        params.x0,
        params.c,
        [list(m.atoms) for m in params.mu],
        list(params.nu.atoms),
        complex(lam),
        v,
        1.0,
    )
    assert b.total == pytest.approx(ref, rel=2e-6)
    assert b.total == pytest.approx(b.e_term + b.i_terms.sum() + b.nu_term, rel=1e-12)


def test_second_moment_deterministic_model_matches_mean_square():
    params = make_params(2, [0.0, 0.0], [0.3, 0.1], [[-0.2, 0.4], [0.5, -0.3]], [1.0, 2.0])
    spec = spectral_of(params)
    _, v = spec.eigen[0]
    b = second_moment_projection(params, spec, 0, 1.5)
    mean_proj = abs(np.dot(v, mean_vector(params, spec, 1.5))) ** 2
    assert b.total == pytest.approx(mean_proj, rel=1e-6)
    assert b.i_terms.sum() == 0.0 and b.nu_term == 0.0


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_cauchy_schwarz(r2, spec_r2, r3, spec_r3, t):
    for params, spec in ((r2, spec_r2), (r3, spec_r3)):
        _, v = spec.eigen[0]
        total = second_moment_projection(params, spec, 0, t).total
        mean_sq = abs(np.dot(v, mean_vector(params, spec, t))) ** 2
        assert total >= mean_sq * (1 - 1e-9)


def test_limit_r2_value_and_regime(r2, spec_r2):
    lim = second_moment_limit(r2, spec_r2, 0)
    assert lim.regime == "above_half"
    assert lim.h_description == "exp(-2 Re(lam) t)"
    assert lim.m2 == pytest.approx(7.0, rel=1e-12)


def test_limit_r2_convergence(r2, spec_r2):
    lim = second_moment_limit(r2, spec_r2, 0)
    errs = [
        abs(np.exp(-2 * t) * second_moment_projection(r2, spec_r2, 0, t).total - lim.m2)
        for t in (4.0, 8.0, 12.0)
    ]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 0.01 * lim.m2


def test_limit_deterministic_exponential():
    params = make_params(1, [0.0], [0.0], [[1.0]], [1.0])
    spec = spectral_of(params)
    lim = second_moment_limit(params, spec, 0)
    assert lim.regime == "above_half" and lim.m2 == pytest.approx(1.0)
    for t in (1.0, 5.0):
        scaled = np.exp(-2 * t) * second_moment_projection(params, spec, 0, t).total
        assert scaled == pytest.approx(1.0, rel=1e-9)


def test_limit_below_half_regime(below_half):
    params, spec = below_half
    lim = second_moment_limit(params, spec, 1)
    assert spec.eigen[1][0].real == pytest.approx(-1.0, abs=1e-12)
    assert lim.regime == "below_half"
    assert lim.h_description == "exp(-s t)"
    for t_lo, t_hi in ((6.0, 10.0),):
        e_lo = abs(np.exp(-spec.s * t_lo) * second_moment_projection(params, spec, 1, t_lo).total - lim.m2)
        e_hi = abs(np.exp(-spec.s * t_hi) * second_moment_projection(params, spec, 1, t_hi).total - lim.m2)
        assert e_hi < e_lo
        assert e_hi <= 1e-4 * lim.m2


def test_limit_at_half_regime(at_half):
    params, spec = at_half
    lam2 = spec.eigen[1][0]
    assert lam2.real == pytest.approx(0.5 * spec.s, abs=1e-12)
    lim = second_moment_limit(params, spec, 1)
    assert lim.regime == "at_half"
    assert lim.h_description == "t^-1 exp(-s t)"
    vals = [
        second_moment_projection(params, spec, 1, t).total * np.exp(-spec.s * t) / t
        for t in (25.0, 50.0)
    ]
    assert abs(vals[1] - lim.m2) < abs(vals[0] - lim.m2)
    assert vals[1] == pytest.approx(lim.m2, rel=0.15)


def test_limit_requires_supercritical():
    params = make_params(2, [0.1, 0.1], [0.0, 0.0], [[-1.0, 0.1], [0.1, -1.0]], [1.0, 1.0])
    spec = spectral_of(params)
    with pytest.raises(ValueError, match="supercritical"):
        second_moment_limit(params, spec, 0)


def test_negative_time_rejected(r2, spec_r2):
    with pytest.raises(ValueError):
        mean_vector(r2, spec_r2, -1.0)
    with pytest.raises(ValueError):
        second_moment_projection(r2, spec_r2, 0, -0.5)
