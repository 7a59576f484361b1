"""Numerical tools for mixed p-spin free energies: Parisi PDE, cascades, Monte Carlo and variational formulas."""

from .cascades import (
    CascadeTree,
    HierGaussianSpec,
    cascade_log_partition,
    overlap_frequencies,
    psi_via_cascade,
    sample_cascade,
)
from .config import ModelConfig, load_config, parse_config
from .errors import ConfigError, NumericalFailure
from .free_energy_mc import (
    FreeEnergyEstimate,
    ModelInstance,
    estimate_F,
    estimate_F_sth,
    estimate_p_eps,
    h_derivative_checks,
    hj_residual,
)
from .measures import DiscreteMeasure, transport_cost, zeta_mu
from .mixture import MixtureFunction
from .parisi_pde import BaseMeasure, PdeConfig, parisi_value, parisi_value_recursive, psi, psi_capital
from .variational import (
    OptimizerConfig,
    VariationalResult,
    classical_parisi_value,
    corollary_value,
    hj_check,
    hopf_lax_value,
    theorem2_value,
)

__all__ = [
    "BaseMeasure",
    "CascadeTree",
    "ConfigError",
    "DiscreteMeasure",
    "FreeEnergyEstimate",
    "HierGaussianSpec",
    "MixtureFunction",
    "ModelConfig",
    "ModelInstance",
    "NumericalFailure",
    "OptimizerConfig",
    "PdeConfig",
    "VariationalResult",
    "cascade_log_partition",
    "classical_parisi_value",
    "corollary_value",
    "estimate_F",
    "estimate_F_sth",
    "estimate_p_eps",
    "h_derivative_checks",
    "hj_check",
    "hj_residual",
    "hopf_lax_value",
    "load_config",
    "overlap_frequencies",
    "parisi_value",
    "parisi_value_recursive",
    "parse_config",
    "psi",
    "psi_capital",
    "psi_via_cascade",
    "sample_cascade",
    "theorem2_value",
    "transport_cost",
    "zeta_mu",
]
