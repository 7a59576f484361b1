import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjparisi.errors import NumericalFailure
from hjparisi.measures import DiscreteMeasure
from hjparisi.parisi_pde import (
    BaseMeasure,
    PdeConfig,
    gauss_hermite,
    parisi_value,
    parisi_value_extended,
    parisi_value_recursive,
    psi,
    psi_capital,
    terminal_condition,
    time_steps,
)

ISING = BaseMeasure.ising()
SOFT = BaseMeasure.uniform([-1.0, 0.0, 1.0])
D0 = DiscreteMeasure.dirac(0.0)

# arbitrary-precision quadrature (mpmath, 30 digits)
E_LOG_COSH_HALF_G = 0.112912002787494475110996710046
TWO_ATOM_LAMBDA_M03 = -0.033419423193131126849


def test_terminal_condition_examples():
    x = np.array([0.0, 0.7, -2.0])
    np.testing.assert_allclose(terminal_condition(ISING, 0.0, x), np.log(np.cosh(x)), atol=1e-15)
    assert terminal_condition(ISING, 0.37, 0.0) == pytest.approx(0.37)
    assert terminal_condition(SOFT, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_gauss_hermite_moments():
    g, w = gauss_hermite(20)
    assert w.sum() == pytest.approx(1.0)
    assert w @ g**2 == pytest.approx(1.0)
    assert w @ g**4 == pytest.approx(3.0)


def test_time_schedule():
    nu = DiscreteMeasure([0.2, 0.6], [0.5, 0.5])
    np.testing.assert_allclose(time_steps(nu), [(0.4, 0.5), (0.2, 0.0)])
    np.testing.assert_allclose(time_steps(nu, a=1.0), [(0.4, 1.0), (0.4, 0.5), (0.2, 0.0)])
    assert time_steps(D0) == []
    with pytest.raises(ValueError):
        time_steps(nu, a=0.5)


def test_dirac_at_zero_gives_terminal_value():
    assert parisi_value(D0, 0.0, ISING).value == 0.0
    assert parisi_value(D0, 0.25, ISING).value == pytest.approx(0.25)


def test_dirac_closed_form():
    pv = parisi_value(DiscreteMeasure.dirac(0.25), 0.0, ISING)
    assert pv.value == pytest.approx(E_LOG_COSH_HALF_G, abs=1e-8)
    assert pv.err_estimate < 1e-6
    rec = parisi_value_recursive(DiscreteMeasure.dirac(0.25), 0.0, ISING, order=64)
    assert rec == pytest.approx(E_LOG_COSH_HALF_G, abs=1e-12)


def test_two_atom_value_matches_high_precision():
    nu = DiscreteMeasure([0.2, 0.6], [0.5, 0.5])
    assert parisi_value(nu, -0.3, ISING).value == pytest.approx(TWO_ATOM_LAMBDA_M03, abs=1e-7)
    assert parisi_value_recursive(nu, -0.3, ISING) == pytest.approx(TWO_ATOM_LAMBDA_M03, abs=1e-10)


def test_extension_beyond_top():
    # log E cosh(sqrt(0.3) G) = 0.15, so the extended value is exactly zero
    assert parisi_value_extended(D0, -0.15, 0.3, ISING) == pytest.approx(0.0, abs=1e-8)
    assert parisi_value_recursive(D0, -0.15, ISING, a=0.3) == pytest.approx(0.0, abs=1e-12)
    nu = DiscreteMeasure([0.1, 0.4], [0.3, 0.7])
    assert parisi_value_extended(nu, 0.2, nu.top, ISING) == pytest.approx(parisi_value(nu, 0.2, ISING).value, abs=1e-14)


def test_psi_values():
    assert psi(D0, ISING) == 0.0
    assert psi(DiscreteMeasure.dirac(0.25), ISING) == pytest.approx(E_LOG_COSH_HALF_G - 0.125, abs=1e-8)
    for h in (-0.4, 0.0, 0.3):
        assert psi_capital(D0, h, ISING) == pytest.approx(h, abs=1e-14)


@pytest.mark.parametrize("base", [ISING, SOFT])
def test_psi_independent_of_extension_time(base):
    nu = DiscreteMeasure([0.05, 0.3, 0.45], [0.2, 0.5, 0.3])
    h = 0.1
    ref = parisi_value(nu, h - 0.5 * nu.top, base)
    for extra in (0.25, 0.5):
        a = nu.top + extra
        assert parisi_value_extended(nu, h - 0.5 * a, a, base) == pytest.approx(ref.value, abs=2 * ref.err_estimate + 1e-12)


def test_error_budget_enforced():
    nu = DiscreteMeasure([0.2, 0.6], [0.5, 0.5])
    with pytest.raises(NumericalFailure):
        parisi_value(nu, 0.0, ISING, PdeConfig(quad_order=16, x_grid_step=0.4), max_err=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        PdeConfig(quad_order=4)
    with pytest.raises(ValueError):
        PdeConfig(x_grid_step=0.0)
    with pytest.raises(ValueError):
        PdeConfig(interpolation="linear")
    with pytest.raises(ValueError):
        parisi_value(DiscreteMeasure.dirac(1.0), 0.0, ISING, PdeConfig(x_grid_halfwidth=1.0))
    with pytest.raises(ValueError):
        parisi_value_recursive(DiscreteMeasure([0.1, 0.2, 0.3, 0.4], [0.25] * 4), 0.0, ISING)


def test_base_measure_basics():
    assert ISING.is_ising and (ISING.d, ISING.D) == (1.0, 1.0)
    assert not SOFT.is_ising and (SOFT.d, SOFT.D) == (0.0, 1.0)
    assert BaseMeasure.from_config({"preset": "ising"}).is_ising
    back = BaseMeasure.from_config(SOFT.to_config())
    np.testing.assert_array_equal(back.points, SOFT.points)
    with pytest.raises(ValueError):
        BaseMeasure.from_config({"preset": "gaussian"})
    with pytest.raises(ValueError):
        BaseMeasure([1.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        BaseMeasure([0.0, 1.0], [0.5, 0.4])


def test_tilted_base_measure():
    tilted, log_z = SOFT.tilted(0.7)
    assert log_z == pytest.approx(np.log((1 + 2 * np.exp(0.7)) / 3))
    np.testing.assert_allclose(tilted.probs, np.array([np.exp(0.7), 1, np.exp(0.7)]) / (1 + 2 * np.exp(0.7)))
    # tilting is the same as adding h to lambda
    nu = DiscreteMeasure([0.1, 0.5], [0.4, 0.6])
    assert parisi_value(nu, 0.1, tilted).value + log_z == pytest.approx(parisi_value(nu, 0.8, SOFT).value, abs=1e-10)


nus = st.integers(1, 3).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n, unique=True),
        st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n),
    )
).map(lambda aw: DiscreteMeasure(aw[0], np.array(aw[1]) / sum(aw[1])))


@settings(max_examples=15, deadline=None)
@given(nus, st.floats(-0.5, 0.5), st.sampled_from([ISING, SOFT]))
def test_grid_solver_matches_nested_quadrature(nu, lam, base):
    assert parisi_value(nu, lam, base).value == pytest.approx(parisi_value_recursive(nu, lam, base), abs=1e-5)


@settings(max_examples=15, deadline=None)
@given(nus, st.floats(-0.5, 0.5), st.floats(0.01, 0.5))
def test_lambda_derivative_lies_between_d_and_D(nu, lam, dl):
    cfg = PdeConfig(quad_order=24, x_grid_step=0.05)
    lo = parisi_value(nu, lam, SOFT, cfg).value
    hi = parisi_value(nu, lam + dl, SOFT, cfg).value
    assert -1e-7 <= hi - lo <= dl + 1e-7
    shift = parisi_value(nu, lam + dl, ISING, cfg).value - parisi_value(nu, lam, ISING, cfg).value
    assert shift == pytest.approx(dl, abs=1e-10)
