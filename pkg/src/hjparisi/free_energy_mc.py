"""Finite-N enriched free energies by exact enumeration of configurations.

The spin configurations are enumerated; the disorder ``H_N`` is sampled
jointly over all of them from the covariance ``N xi(sigma . tau / N)``,
and the cascade enters through its weights and hierarchical fields (see
``cascades``). The only randomness left is the disorder/cascade draw, so
standard errors come from independent replications.

For every configuration the exponent has a known mean under the Gaussian
randomness, so ``E Z`` is available in closed form and ``Z / E Z - 1``
serves as a control variate for ``log Z``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .cascades import Branching, CascadeTree, cascade_for_measure, hierarchical_fields, sample_cascade
from .errors import ConfigError, NumericalFailure
from .measures import DiscreteMeasure
from .mixture import MixtureFunction
from .parisi_pde import BaseMeasure

MAX_CONFIGURATIONS = 200_000
MAX_DENSE_COVARIANCE = 8192
CHOLESKY_JITTER = 1e-10


@dataclass
class ModelInstance:
    """Finite-volume model: ``N`` spins with law ``base``, mixture, ``mu``, ``t``, ``s``, ``h``."""

    N: int
    mixture: MixtureFunction
    base: BaseMeasure
    mu: DiscreteMeasure = field(default_factory=lambda: DiscreteMeasure.dirac(0.0))
    t: float = 1.0
    s: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if self.t < 0 or self.s < 0:
            raise ConfigError("t and s must be nonnegative")
        n_conf = len(self.base.points) ** self.N
        if n_conf > MAX_CONFIGURATIONS:
            raise ConfigError(f"{n_conf} configurations exceed the enumeration limit {MAX_CONFIGURATIONS}")

    def params(self) -> dict:
        return {
            "N": self.N,
            "mixture": self.mixture.to_config(),
            "base_measure": self.base.to_config(),
            "mu": self.mu.to_config(),
            "t": self.t,
            "s": self.s,
            "h": self.h,
        }

    @cached_property
    def configurations(self) -> np.ndarray:
        """All configurations, shape ``(|supp|^N, N)``."""
        return np.array(list(itertools.product(self.base.points, repeat=self.N)), dtype=float)

    @cached_property
    def log_prior(self) -> np.ndarray:
        idx = itertools.product(range(len(self.base.points)), repeat=self.N)
        lp = self.base.log_probs
        return np.array([sum(lp[j] for j in row) for row in idx])

    @cached_property
    def self_overlap(self) -> np.ndarray:
        """``|sigma|^2 / N`` per configuration."""
        return np.einsum("ij,ij->i", self.configurations, self.configurations) / self.N

    def overlap_matrix(self) -> np.ndarray:
        s = self.configurations
        return s @ s.T / self.N

    @cached_property
    def disorder_factor(self) -> np.ndarray:
        """Matrix ``L`` with ``L L^T = N xi(R)`` over the configurations."""
        n_conf = self.configurations.shape[0]
        if n_conf > MAX_DENSE_COVARIANCE:
            raise ConfigError(
                f"{n_conf} configurations exceed the dense covariance limit {MAX_DENSE_COVARIANCE}"
            )
        cov = self.N * self.mixture.xi(self.overlap_matrix())
        jitter = CHOLESKY_JITTER * max(float(np.max(np.diag(cov))), 1.0)
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n_conf))
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(cov)
            if vals.min() < -1e-8 * max(vals.max(), 1.0):
                raise NumericalFailure("disorder covariance is not positive semidefinite")
            return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class FreeEnergyEstimate:
    mean: float
    stderr: float
    n_replications: int
    N: int
    params: dict
    plain_mean: float
    plain_stderr: float


@dataclass
class _Draw:
    """Random part of one replication, restricted to a set of configurations."""

    hamiltonian: np.ndarray
    tree: CascadeTree
    leaf_field: np.ndarray
    dust_field: Optional[np.ndarray]
    dust_shift: Optional[np.ndarray]

    def mirrored(self) -> "_Draw":
        """Same cascade with every Gaussian sign-flipped, an equally likely draw."""
        dust = None if self.dust_field is None else -self.dust_field
        return _Draw(-self.hamiltonian, self.tree, -self.leaf_field, dust, self.dust_shift)


def _draw(model: ModelInstance, rng: np.random.Generator, branching: Branching, mask=None) -> _Draw:
    sig = model.configurations
    ham = model.disorder_factor @ rng.standard_normal(sig.shape[0])
    zetas, spec = cascade_for_measure(model.mu)
    tree = sample_cascade(zetas, branching, rng)
    fields = hierarchical_fields(tree.branching, spec, rng, copies=(model.N,))
    if mask is not None:
        sig, ham = sig[mask], ham[mask]
    leaf = sig @ fields[-1].reshape(model.N, -1)
    dust = shift = None
    if tree.dust is not None:
        # the last increment under the dust is integrated out exactly
        dust = sig @ fields[-2].reshape(model.N, -1)
        shift = 0.5 * spec.increments[-1] * np.einsum("ij,ij->i", sig, sig)
    return _Draw(ham, tree, leaf, dust, shift)


def _joint_log_weights(draw: _Draw, base_energy: np.ndarray, scale_h: float):
    """Unnormalized log Gibbs weights on leaves and dust, ``(n_conf, n_nodes)`` each."""
    e = base_energy + scale_h * draw.hamiltonian
    leaf = e[:, None] + draw.leaf_field + draw.tree.log_weights().ravel()[None, :]
    dust = None
    if draw.dust_field is not None:
        dust = (e + draw.dust_shift)[:, None] + draw.dust_field + draw.tree.log_dust().ravel()[None, :]
    return leaf, dust


def _log_partition(leaf, dust) -> float:
    parts = [leaf.ravel()] if dust is None else [leaf.ravel(), dust.ravel()]
    return float(logsumexp(np.concatenate(parts)))


def _energy_terms(model: ModelInstance, s: float, h: float):
    """Deterministic exponent and log of its mean-corrected counterpart per configuration."""
    x = model.self_overlap
    n, q_top = model.N, model.mu.top
    xi_x = model.mixture.xi(x)
    base = model.log_prior - 0.5 * n * (model.t - s) * xi_x - 0.5 * q_top * n * x + h * n * x
    log_mean = model.log_prior + 0.5 * n * s * xi_x + h * n * x
    return base, log_mean


def _run(model, n_replications, branching, seed, base_energy, log_mean, mask, opts) -> FreeEnergyEstimate:
    control_variate, antithetic = opts
    if n_replications < 2:
        raise ValueError("need at least two replications")
    log_z_mean = float(logsumexp(log_mean))
    scale_h = np.sqrt(model.t)
    children = np.random.SeedSequence(seed).spawn(n_replications)
    vals = np.empty(n_replications)
    ratio = np.empty(n_replications)
    for i, ss in enumerate(children):
        draw = _draw(model, np.random.default_rng(ss), branching, mask)
        draws = (draw, draw.mirrored()) if antithetic else (draw,)
        log_z = np.array([_log_partition(*_joint_log_weights(d, base_energy, scale_h)) for d in draws])
        vals[i] = log_z.mean() / model.N
        ratio[i] = np.exp(log_z - log_z_mean).mean()
    plain_se = float(vals.std(ddof=1) / np.sqrt(n_replications))
    mean, se = float(vals.mean()), plain_se
    if control_variate and np.all(np.isfinite(ratio)) and np.var(ratio) > 0:
        c = ratio - 1.0
        cov = np.cov(vals, c)
        adjusted = vals - (cov[0, 1] / cov[1, 1]) * c
        mean = float(adjusted.mean())
        se = float(adjusted.std(ddof=1) / np.sqrt(n_replications))
    return FreeEnergyEstimate(mean, se, n_replications, model.N, model.params(), float(vals.mean()), plain_se)


def estimate_F(
    model: ModelInstance,
    n_replications: int = 200,
    branching: Branching = 1000,
    seed=None,
    control_variate: bool = True,
    antithetic: bool = True,
) -> FreeEnergyEstimate:
    """Monte Carlo ``F_N(t, mu)``; ``model.s`` and ``model.h`` are ignored."""
    base, log_mean = _energy_terms(model, 0.0, 0.0)
    return _run(model, n_replications, branching, seed, base, log_mean, None, (control_variate, antithetic))


def estimate_F_sth(
    model: ModelInstance,
    n_replications: int = 200,
    branching: Branching = 1000,
    seed=None,
    control_variate: bool = True,
    antithetic: bool = True,
) -> FreeEnergyEstimate:
    """Monte Carlo of the free energy with the extra ``(s, h)`` terms of ``model``."""
    base, log_mean = _energy_terms(model, model.s, model.h)
    return _run(model, n_replications, branching, seed, base, log_mean, None, (control_variate, antithetic))


def band_mask(model: ModelInstance, u: float, eps: float) -> np.ndarray:
    """Configurations with ``|sigma|^2 / N`` in the open band ``(u - eps, u + eps)``."""
    return np.abs(model.self_overlap - u) < eps


def estimate_p_eps(
    model: ModelInstance,
    u: float,
    eps: float,
    n_replications: int = 200,
    branching: Branching = 1000,
    seed=None,
    control_variate: bool = True,
    antithetic: bool = True,
) -> FreeEnergyEstimate:
    """Free energy restricted to a self-overlap band, without the ``xi``/``mu`` corrections.

    The disorder enters as ``sqrt(t) H_N``; the usual definition is ``t = 1``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mask = band_mask(model, u, eps)
    if not mask.any():
        raise ValueError(f"no configuration has |sigma|^2/N in ({u - eps}, {u + eps})")
    x = model.self_overlap[mask]
    n = model.N
    base = model.log_prior[mask]
    log_mean = base + 0.5 * n * model.t * model.mixture.xi(x) + 0.5 * model.mu.top * n * x
    return _run(model, n_replications, branching, seed, base, log_mean, mask, (control_variate, antithetic))


@dataclass(frozen=True)
class HjResidual:
    """Residual ``E<xi(R)> - sum_l p_l xi(E<R 1{a^a'=l}> / p_l)`` and its parts."""

    residual: float
    stderr: float
    xi_overlap: float
    level_overlaps: np.ndarray
    level_probs: np.ndarray
    n_replications: int


def _gibbs_masses(leaf, dust):
    log_z = _log_partition(leaf, dust)
    m_leaf = np.exp(leaf - log_z)
    m_dust = None if dust is None else np.exp(dust - log_z)
    return m_leaf, m_dust


def _level_overlaps(sig, tree: CascadeTree, m_leaf, m_dust, n: int) -> np.ndarray:
    """``<R 1{a ^ a' >= l}>`` for ``l = 0..k`` on one draw."""
    k = tree.depth
    n_conf = sig.shape[0]
    leaf = m_leaf.reshape((n_conf,) + tree.branching)
    out = np.empty(k + 1)
    for depth in range(k + 1):
        mass = leaf
        if depth < k:
            mass = leaf.sum(axis=-1)
            if m_dust is not None:
                mass = mass + m_dust.reshape((n_conf,) + tree.branching[:-1])
            for _ in range(k - 1 - depth):
                mass = mass.sum(axis=-1)
        mass = mass.reshape(n_conf, -1)
        proj = sig.T @ mass
        out[depth] = float(np.sum(proj * proj)) / n
    return out


def hj_residual(
    model: ModelInstance,
    n_replications: int = 200,
    branching: Branching = 1000,
    seed=None,
) -> HjResidual:
    """Synchronization residual from exact Gibbs averages over the enumeration.

    Pair averages are computed exactly on each draw (no replica sampling);
    the standard error linearizes the plug-in estimator.
    """
    sig = model.configurations
    xi_mat = model.mixture.xi(model.overlap_matrix())
    base, _ = _energy_terms(model, 0.0, 0.0)
    k = model.mu.n_atoms - 1
    p = np.asarray(model.mu.weights)
    scale_h = np.sqrt(model.t)
    children = np.random.SeedSequence(seed).spawn(n_replications)
    xi_vals = np.empty(n_replications)
    at_least = np.empty((n_replications, k + 1))
    for i, ss in enumerate(children):
        draw = _draw(model, np.random.default_rng(ss), branching)
        m_leaf, m_dust = _gibbs_masses(*_joint_log_weights(draw, base, scale_h))
        g = m_leaf.sum(axis=1) + (0.0 if m_dust is None else m_dust.sum(axis=1))
        xi_vals[i] = g @ xi_mat @ g
        at_least[i] = _level_overlaps(sig, draw.tree, m_leaf, m_dust, model.N)
    exact_level = at_least - np.concatenate([at_least[:, 1:], np.zeros((n_replications, 1))], axis=1)
    a_bar = exact_level.mean(axis=0)
    residual = float(xi_vals.mean() - np.sum(p * model.mixture.xi(a_bar / p)))
    grad = model.mixture.xi_prime(a_bar / p)
    linear = xi_vals - exact_level @ grad
    se = float(linear.std(ddof=1) / np.sqrt(n_replications))
    return HjResidual(residual, se, float(xi_vals.mean()), a_bar, p, n_replications)


@dataclass(frozen=True)
class DerivativeReport:
    """Finite differences of the single-draw free energy vs Gibbs formulas."""

    dh_fd: float
    dh_gibbs: float
    d2h_fd: float
    d2h_gibbs: float
    ds_fd: float
    ds_gibbs: float
    hj_gap: float
    mean_abs_deviation_bound: float
    variance_bound: float
    lipschitz_constant: float

    @property
    def max_disagreement(self) -> float:
        return max(
            abs(self.dh_fd - self.dh_gibbs),
            abs(self.d2h_fd - self.d2h_gibbs),
            abs(self.ds_fd - self.ds_gibbs),
        )

    @property
    def chain_holds(self) -> bool:
        tol = 1e-12
        return (
            self.hj_gap <= self.mean_abs_deviation_bound + tol
            and self.mean_abs_deviation_bound <= self.variance_bound + tol
        )


def h_derivative_checks(
    model: ModelInstance,
    delta_h: float = 1e-3,
    branching: Branching = 1000,
    seed=None,
) -> DerivativeReport:
    """Compare difference quotients in ``h`` and ``s`` with Gibbs averages on one draw.

    On a fixed draw the second ``h``-derivative equals ``N`` times the
    Gibbs variance of ``|sigma|^2 / N``.
    """
    n = model.N
    draw = _draw(model, np.random.default_rng(seed), branching)
    scale_h = np.sqrt(model.t)
    x = model.self_overlap

    def free_energy(s: float, h: float) -> float:
        base, _ = _energy_terms(model, s, h)
        return _log_partition(*_joint_log_weights(draw, base, scale_h)) / n

    s0, h0 = model.s, model.h
    f0 = free_energy(s0, h0)
    fp, fm = free_energy(s0, h0 + delta_h), free_energy(s0, h0 - delta_h)
    dh_fd = (fp - fm) / (2 * delta_h)
    d2h_fd = (fp - 2 * f0 + fm) / delta_h**2
    if s0 >= delta_h:
        ds_fd = (free_energy(s0 + delta_h, h0) - free_energy(s0 - delta_h, h0)) / (2 * delta_h)
    else:
        ds_fd = (-3 * f0 + 4 * free_energy(s0 + delta_h, h0) - free_energy(s0 + 2 * delta_h, h0)) / (2 * delta_h)

    base, _ = _energy_terms(model, s0, h0)
    m_leaf, m_dust = _gibbs_masses(*_joint_log_weights(draw, base, scale_h))
    g = m_leaf.sum(axis=1) + (0.0 if m_dust is None else m_dust.sum(axis=1))
    mean_x = float(g @ x)
    var_x = float(g @ (x - mean_x) ** 2)
    mean_xi = float(g @ model.mixture.xi(x))
    lip = float(model.mixture.xi_prime(model.base.D))
    return DerivativeReport(
        dh_fd=dh_fd,
        dh_gibbs=mean_x,
        d2h_fd=d2h_fd,
        d2h_gibbs=n * var_x,
        ds_fd=ds_fd,
        ds_gibbs=0.5 * mean_xi,
        hj_gap=abs(mean_xi - model.mixture.xi(mean_x)),
        mean_abs_deviation_bound=lip * float(g @ np.abs(x - mean_x)),
        variance_bound=lip * np.sqrt(var_x),
        lipschitz_constant=lip,
    )
