import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjparisi.measures import DiscreteMeasure, cdf_l1_distance, coupling, random_measure, truncate_support
from hjparisi.mixture import MixtureFunction
from hjparisi.parisi_pde import BaseMeasure, gauss_hermite, psi
from hjparisi.variational import (
    MeasureChart,
    OptimizerConfig,
    classical_parisi_value,
    constrained_parisi_value,
    corollary_value,
    gamma_u,
    hj_check,
    hopf_lax_objective,
    hopf_lax_value,
    minimax_values,
    theorem2_value,
)

ISING = BaseMeasure.ising()
SOFT = BaseMeasure.uniform([-1.0, 0.0, 1.0])
D0 = DiscreteMeasure.dirac(0.0)


def replica_symmetric_overlap(mix, iterations=500):
    g, w = gauss_hermite(80)
    q = 0.5
    for _ in range(iterations):
        q = float(w @ np.tanh(np.sqrt(mix.xi_prime(q)) * g) ** 2)
    return q


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10**6))
def test_chart_roundtrip(k, seed):
    m = random_measure(np.random.default_rng(seed), k, scale=2.0)
    chart = MeasureChart(k)
    back = chart.decode(chart.encode(m))
    assert cdf_l1_distance(back, m) < 1e-6 * k


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=5, max_size=5), st.floats(0.1, 2.0))
def test_capped_chart_stays_below_cap(theta, cap):
    m = MeasureChart(3, cap=cap).decode(np.array(theta))
    assert m.top <= cap
    assert m.weights.sum() == pytest.approx(1.0)


def test_high_temperature_hopf_lax_is_zero():
    mix = MixtureFunction.sk(0.3)
    assert replica_symmetric_overlap(mix) < 1e-12
    # one-atom grid search agrees that nu = delta_0 is optimal
    grid = [hopf_lax_objective(mix, D0, 1.0, ISING, DiscreteMeasure.dirac(q)) for q in np.linspace(0, 0.5, 11)]
    assert int(np.argmin(grid)) == 0
    res = hopf_lax_value(mix, D0, 1.0, ISING)
    assert abs(res.value) <= 1e-3
    assert res.measure.mean() < 1e-2
    assert res.converged


def test_small_beta_tends_to_zero():
    values = [hopf_lax_value(MixtureFunction.sk(b), D0, 1.0, ISING, OptimizerConfig(n_atoms=1)).value for b in (0.05, 0.2)]
    assert all(abs(v) < 1e-6 for v in values)


@pytest.mark.slow
def test_low_temperature_atom_count_stability():
    mix = MixtureFunction.sk(0.8)
    one = hopf_lax_value(mix, D0, 1.0, ISING, OptimizerConfig(n_atoms=1)).value
    two = hopf_lax_value(mix, D0, 1.0, ISING, OptimizerConfig(n_atoms=2)).value
    three = hopf_lax_value(mix, D0, 1.0, ISING, OptimizerConfig(n_atoms=3)).value
    assert two <= 0.0
    assert abs(one - two) <= 1e-3
    assert abs(two - three) <= 1e-3


@pytest.mark.slow
def test_domination_projection_is_harmless():
    mix = MixtureFunction.sk(0.8)
    mu = DiscreteMeasure([0.0, 0.2], [0.5, 0.5])
    free = hopf_lax_value(mix, mu, 1.0, ISING).value
    projected = hopf_lax_value(mix, mu, 1.0, ISING, project=True).value
    assert abs(free - projected) <= 1e-3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.floats(0.2, 1.5))
def test_support_truncation_lowers_cost_pointwise(seed, u, beta):
    rng = np.random.default_rng(seed)
    mix = MixtureFunction.sk(beta)
    nu, mu = random_measure(rng, 3, scale=3.0), random_measure(rng, 2, scale=0.5)
    cap = mix.xi_prime(u) + mu.top
    nt = truncate_support(nu, cap)
    _, (xn, xt, xm) = coupling(nu, nt, mu)
    lhs = mix.xi_star(xn - xm)
    rhs = mix.xi_star(xt - xm) + u * np.abs(xn - xt)
    assert np.all(lhs >= rhs - 1e-10)


def test_gamma_ising_is_psi():
    nu = DiscreteMeasure([0.1, 0.4], [0.3, 0.7])
    value, lam = gamma_u(MixtureFunction.sk(1.0), nu, 1.0, ISING)
    assert lam == 0.0
    assert value == pytest.approx(psi(nu, ISING), abs=1e-12)


def test_gamma_soft_spin_matches_dense_scan():
    value, lam = gamma_u(MixtureFunction.sk(1.0), D0, 0.5, SOFT)
    lams = np.linspace(-3, 3, 600_001)
    dense = np.min(-lams * 0.5 + np.log((1 + 2 * np.exp(lams)) / 3))
    assert value == pytest.approx(dense, abs=1e-6)
    assert lam == pytest.approx(np.log(0.5), abs=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_gamma_lipschitz_under_truncation(seed):
    rng = np.random.default_rng(seed)
    nu = random_measure(rng, 3, scale=1.0)
    nt = truncate_support(nu, 0.5 * nu.top)
    u = 0.7
    gap = abs(gamma_u(MixtureFunction.sk(1.0), nu, u, SOFT)[0] - gamma_u(MixtureFunction.sk(1.0), nt, u, SOFT)[0])
    assert gap <= 0.5 * u * cdf_l1_distance(nu, nt) + 1e-7


def test_classical_high_temperature_ising():
    res = classical_parisi_value(MixtureFunction.sk(0.3), D0, ISING)
    assert res.argmax == 1.0
    assert abs(res.value) <= 1e-3


def test_invalid_arguments():
    mix = MixtureFunction.sk(0.5)
    with pytest.raises(ValueError):
        OptimizerConfig(n_atoms=0)
    with pytest.raises(ValueError):
        OptimizerConfig(xatol=0.0)
    with pytest.raises(ValueError):
        hopf_lax_value(mix, D0, 0.0, ISING)
    with pytest.raises(ValueError):
        classical_parisi_value(mix, D0, ISING, t=0.0)
    with pytest.raises(ValueError):
        constrained_parisi_value(mix, D0, 1.5, SOFT)
    with pytest.raises(ValueError):
        gamma_u(mix, D0, 0.5, ISING)
    with pytest.raises(ValueError):
        theorem2_value(mix, D0, 0.0, 1.0, 0.0, ISING)
    with pytest.raises(ValueError):
        hj_check(mix, D0, 1.0, ISING, (0.2, 0.4), (0.0, 0.2), 0.1)


def test_result_serializes():
    res = hopf_lax_value(MixtureFunction.sk(0.3), D0, 1.0, ISING, OptimizerConfig(n_atoms=1, n_random_starts=1))
    doc = json.loads(json.dumps(res.to_dict()))
    assert set(doc) == {"value", "measure", "argmax", "lambda", "converged", "diagnostics"}


def test_enriched_ising_shift():
    mix = MixtureFunction.sk(0.5)
    base_value = hopf_lax_value(mix, D0, 1.0, ISING).value
    res = theorem2_value(mix, D0, 0.4, 1.0, -0.1, ISING)
    assert res.value == pytest.approx(base_value + 0.2 * mix.xi(1.0) - 0.1, abs=1e-9)
    assert not res.diagnostics["at_edge"]


def test_hj_residual_vanishes_for_ising():
    grid = hj_check(MixtureFunction.sk(0.6), D0, 1.0, ISING, (0.2, 0.4), (-0.1, 0.1), 0.05)
    assert grid.residual.shape == (3, 3)
    assert grid.max_abs_residual <= 1e-9
    assert not grid.flagged.any()


@pytest.mark.slow
def test_corollary_matches_enriched_formula():
    mix = MixtureFunction.sk(0.5)
    cor = corollary_value(mix, SOFT)
    thm = theorem2_value(mix, D0, 1.0, 1.0, 0.0, SOFT)
    assert cor.value == pytest.approx(thm.value, abs=1e-6)


@pytest.mark.slow
def test_minimax_orders_agree_for_soft_spins():
    mix = MixtureFunction.sk(1.2)
    rep = minimax_values(mix, D0, SOFT)
    assert -1e-6 <= rep.gap <= 2e-3
    hl = hopf_lax_value(mix, D0, 1.0, SOFT).value
    assert rep.inf_sup == pytest.approx(hl, abs=2e-3)
    assert 0.0 < rep.argmax_u < 1.0
