import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjparisi.measures import (
    DiscreteMeasure,
    cdf_l1_distance,
    dominate_truncate,
    from_pairs,
    integral_cdf_dtheta,
    quantile_interpolate,
    random_measure,
    stochastically_dominates,
    transport_cost,
    truncate_support,
    zeta_mu,
)
from hjparisi.mixture import MixtureFunction

SK1 = MixtureFunction.sk(1.0)


@st.composite
def measures(draw, max_atoms=4, scale=1.5):
    n = draw(st.integers(1, max_atoms))
    atoms = draw(st.lists(st.floats(0.0, scale), min_size=n, max_size=n, unique=True))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    w = np.array(raw) / sum(raw)
    return DiscreteMeasure(atoms, w)


def test_quantile_is_left_continuous():
    mu = DiscreteMeasure([0.2, 0.5], [0.3, 0.7])
    assert mu.quantile(0.3) == 0.2
    assert mu.quantile(0.31) == 0.5
    assert mu.quantile(1.0) == 0.5
    assert DiscreteMeasure.dirac(0.4).quantile(1.0) == 0.4
    assert DiscreteMeasure.dirac(0.4).quantile(0.0) == 0.0


def test_cdf_is_right_continuous():
    mu = DiscreteMeasure([0.2, 0.5], [0.3, 0.7])
    assert mu.cdf(0.19) == 0.0
    assert mu.cdf(0.2) == pytest.approx(0.3)
    assert mu.cdf(0.5) == 1.0


def test_construction_sorts_and_merges():
    mu = DiscreteMeasure([0.5, 0.1, 0.1 + 1e-15], [0.5, 0.25, 0.25])
    np.testing.assert_allclose(mu.atoms, [0.1, 0.5])
    np.testing.assert_allclose(mu.weights, [0.5, 0.5])
    assert mu.cum[-1] == 1.0
    assert mu.top == 0.5
    assert mu.mean() == pytest.approx(0.3)


@pytest.mark.parametrize(
    "atoms, weights",
    [([0.1, 0.2], [0.5, 0.4]), ([], []), ([-0.1], [1.0]), ([0.1, 0.2], [1.0, 0.0]), ([np.nan], [1.0])],
)
def test_invalid_measures_rejected(atoms, weights):
    with pytest.raises(ValueError):
        DiscreteMeasure(atoms, weights)


def test_weight_sum_message_is_readable():
    with pytest.raises(ValueError, match="sum to 0.9,"):
        DiscreteMeasure([0.0, 0.3], [0.5, 0.4])


def test_from_unnormalized_drops_negligible_atoms():
    mu = DiscreteMeasure.from_unnormalized([0.1, 0.9], [2.0, 1e-14])
    assert mu == DiscreteMeasure.dirac(0.1)


def test_config_roundtrip():
    mu = from_pairs([(0.1, 0.25), (0.7, 0.75)])
    assert DiscreteMeasure.from_config(mu.to_config()) == mu
    assert hash(mu) == hash(from_pairs([(0.1, 0.25), (0.7, 0.75)]))


def test_zeta_mu_examples():
    got = zeta_mu(SK1, DiscreteMeasure.dirac(0.5), DiscreteMeasure.dirac(0.1))
    assert got.allclose(DiscreteMeasure.dirac(1.1))
    d0 = DiscreteMeasure.dirac(0.0)
    assert zeta_mu(SK1, d0, d0) == d0


def test_zeta_mu_against_fine_level_grid():
    zeta = DiscreteMeasure([0.2, 0.6], [0.5, 0.5])
    mu = DiscreteMeasure([0.0, 0.1], [0.25, 0.75])
    got = zeta_mu(SK1, zeta, mu)
    assert got.allclose(DiscreteMeasure([0.4, 0.5, 1.3], [0.25, 0.25, 0.5]))
    # empirical quantile of xi'(zeta^{-1}) + mu^{-1} on a uniform level grid
    r = (np.arange(10_000) + 0.5) / 10_000
    sample = SK1.xi_prime(zeta.quantile(r)) + mu.quantile(r)
    np.testing.assert_allclose(got.quantile(r), sample, atol=1e-12)


def test_transport_cost_examples():
    d0 = DiscreteMeasure.dirac(0.0)
    assert transport_cost(SK1, d0, d0, 0.7) == 0.0
    assert transport_cost(SK1, DiscreteMeasure.dirac(0.5), d0, 1.0) == pytest.approx(0.0625)
    nu = DiscreteMeasure([0.0, 0.8], [0.5, 0.5])
    assert transport_cost(SK1, nu, d0, 1.0) == pytest.approx(0.08, abs=1e-12)
    with pytest.raises(ValueError):
        transport_cost(SK1, nu, d0, 0.0)


def test_transport_cost_matches_uniform_sampling():
    nu = DiscreteMeasure([0.0, 0.8], [0.5, 0.5])
    mu = DiscreteMeasure.dirac(0.0)
    u = np.random.default_rng(0).uniform(size=1_000_000)
    d = nu.quantile(u) - mu.quantile(u)
    mc = np.mean(np.where(d > 0, d**2 / 4, 0.0))
    assert transport_cost(SK1, nu, mu, 1.0) == pytest.approx(mc, abs=1e-3)


def test_integral_of_cdf_against_theta():
    zeta = DiscreteMeasure([0.3, 0.8], [0.5, 0.5])
    # 0.5 (theta(0.8) - theta(0.3)) for SK with beta = 1
    assert integral_cdf_dtheta(SK1, zeta, 0.8) == pytest.approx(0.5 * (0.64 - 0.09))
    with pytest.raises(ValueError):
        integral_cdf_dtheta(SK1, zeta, 0.5)


@settings(max_examples=60, deadline=None)
@given(measures(), st.floats(0.0, 1.0))
def test_quantile_cdf_galois_connection(mu, r):
    q = mu.quantile(r)
    assert mu.cdf(q) >= r - 1e-12
    if r > 1e-9:
        assert mu.cdf(q - 1e-9) < r + 1e-9


@settings(max_examples=60, deadline=None)
@given(measures(), measures())
def test_l1_distance_is_integral_of_cdf_gap(mu, nu):
    s = np.linspace(0, 2.0, 200_001)
    gap = np.abs(mu.cdf(s) - nu.cdf(s))
    integral = float(np.sum(0.5 * (gap[1:] + gap[:-1]) * np.diff(s)))
    assert cdf_l1_distance(mu, nu) == pytest.approx(integral, abs=2e-4)


@settings(max_examples=60, deadline=None)
@given(measures(), measures(), st.floats(0.2, 2.0))
def test_transport_cost_nonnegative_and_zero_on_diagonal(mu, nu, t):
    assert transport_cost(SK1, nu, mu, t) >= 0.0
    assert transport_cost(SK1, mu, mu, t) == 0.0


@settings(max_examples=60, deadline=None)
@given(measures(), measures())
def test_dominate_truncate_dominates_both(nu, mu):
    m = dominate_truncate(nu, mu)
    assert stochastically_dominates(m, mu)
    assert stochastically_dominates(m, nu)


@settings(max_examples=60, deadline=None)
@given(measures(), measures(), st.floats(0.0, 1.0))
def test_quantile_interpolation_is_linear_in_quantiles(a, b, lam):
    m = quantile_interpolate(a, b, lam)
    r = np.linspace(0.01, 0.99, 37)
    expected = lam * a.quantile(r) + (1 - lam) * b.quantile(r)
    # only compare away from level breakpoints
    far = np.all(np.abs(r[:, None] - np.concatenate([a.cum, b.cum])[None, :]) > 1e-6, axis=1)
    np.testing.assert_allclose(m.quantile(r)[far], expected[far], atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(measures(), st.floats(0.0, 1.0))
def test_truncation_caps_support(nu, cap):
    t = truncate_support(nu, cap)
    assert t.top <= cap + 1e-15
    assert cdf_l1_distance(nu, t) == pytest.approx(float(np.sum(nu.weights * np.maximum(nu.atoms - cap, 0))))


@settings(max_examples=40, deadline=None)
@given(measures(), measures(), st.floats(0.01, 0.5))
def test_zeta_mu_quantile_is_sum_of_quantiles(zeta, mu, beta):
    mix = MixtureFunction.sk(beta)
    zm = zeta_mu(mix, zeta, mu)
    r = np.linspace(0.013, 0.987, 29)
    far = np.all(np.abs(r[:, None] - np.concatenate([zeta.cum, mu.cum])[None, :]) > 1e-6, axis=1)
    expected = mix.xi_prime(zeta.quantile(r)) + mu.quantile(r)
    np.testing.assert_allclose(zm.quantile(r)[far], expected[far], atol=1e-9)


def test_random_measure_is_valid():
    mu = random_measure(np.random.default_rng(3), 3, scale=0.5)
    assert mu.n_atoms <= 3
    assert mu.top <= 0.5
    assert mu.cdf_breakpoints()[-1][1] == 1.0
