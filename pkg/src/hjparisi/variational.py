"""Variational formulas for the limiting free energy.

* ``hopf_lax_value``: ``inf_nu psi(nu) + (t/2) E xi*((X_nu - X_mu)/t)``.
* ``classical_parisi_value``: ``sup_u inf_{zeta, lambda}`` of the Parisi
  functional evaluated at ``zeta_mu``.
* ``theorem2_value`` / ``hj_check``: the ``(s, h)``-enriched formula and
  its Hamilton-Jacobi residual.

Candidate measures have a fixed number of atoms and are searched by
Nelder-Mead over an unconstrained chart (softmax weights, increasing
locations built from softplus increments). PDE solves inside the search
use a coarser grid; reported values are recomputed at full resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize, minimize_scalar

from .measures import (
    DiscreteMeasure,
    dominate_truncate,
    integral_cdf_dtheta,
    transport_cost,
    zeta_mu,
)
from .mixture import MixtureFunction
from .parisi_pde import BaseMeasure, PdeConfig, parisi_value, solve_parisi

TINY_ATOM = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    n_atoms: int = 2
    n_random_starts: int = 5
    xatol: float = 1e-6
    fatol: float = 1e-10
    max_evals: int = 3000
    scalar_tol: float = 1e-8
    u_grid: int = 33
    u_refinements: int = 2
    u_refine_factor: int = 4
    u_starts: int = 1
    h_bracket_pad: float = 1.0
    seed: int = 0
    search_pde: PdeConfig = field(default_factory=lambda: PdeConfig(quad_order=24, x_grid_step=0.05))
    final_pde: PdeConfig = field(default_factory=PdeConfig)

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be at least 1")
        if min(self.xatol, self.fatol, self.scalar_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.u_grid < 2 or self.u_refine_factor < 2:
            raise ValueError("u_grid and u_refine_factor must be at least 2")


@dataclass
class VariationalResult:
    value: float
    measure: Optional[DiscreteMeasure] = None
    argmax: Optional[float] = None
    lam: Optional[float] = None
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "measure": None if self.measure is None else self.measure.to_config(),
            "argmax": self.argmax,
            "lambda": self.lam,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    y = np.maximum(np.asarray(y, dtype=float), 1e-300)
    return np.where(y > 30, y, np.log(np.expm1(np.minimum(y, 30))))


class MeasureChart:
    """Smooth map from ``R^{2k-1}`` onto ``k``-atom measures.

    Locations are ``cumsum(softplus(a))`` (unbounded) or
    ``cap * (1 - exp(-cumsum(softplus(a))))`` when a cap is given.
    """

    def __init__(self, k: int, cap: Optional[float] = None):
        self.k = k
        self.cap = cap

    @property
    def dim(self) -> int:
        return 2 * self.k - 1

    def locations(self, theta: np.ndarray) -> np.ndarray:
        run = np.cumsum(_softplus(theta[: self.k]))
        if self.cap is None:
            return run
        return self.cap * -np.expm1(-run)

    def decode(self, theta) -> DiscreteMeasure:
        theta = np.asarray(theta, dtype=float)
        logits = np.concatenate([[0.0], theta[self.k :]])
        w = np.exp(logits - logits.max())
        return DiscreteMeasure.from_unnormalized(self.locations(theta), w / w.sum())

    def encode(self, m: DiscreteMeasure) -> np.ndarray:
        q, w = _split_to(m, self.k)
        if self.cap is not None:
            q = np.clip(q, 0.0, self.cap * (1 - 1e-9))
            run = -np.log1p(-q / self.cap) if self.cap > 0 else q
        else:
            run = q
        incr = np.diff(np.concatenate([[0.0], run]))
        a = _softplus_inv(np.maximum(incr, TINY_ATOM))
        return np.concatenate([a, np.log(w[1:]) - np.log(w[0])])


def _split_to(m: DiscreteMeasure, k: int) -> tuple[np.ndarray, np.ndarray]:
    """``k`` strictly increasing atoms whose law is close to ``m``."""
    q, w = list(m.atoms), list(m.weights)
    while len(q) > k:
        j = int(np.argmin(np.array(w[:-1]) + np.array(w[1:])))
        tot = w[j] + w[j + 1]
        q[j : j + 2] = [(q[j] * w[j] + q[j + 1] * w[j + 1]) / tot]
        w[j : j + 2] = [tot]
    while len(q) < k:
        j = int(np.argmax(w))
        q.insert(j + 1, q[j] + 1e-4)
        w[j : j + 1] = [w[j] / 2, w[j] / 2]
    q = np.maximum.accumulate(np.maximum(np.array(q), 0.0) + TINY_ATOM * np.arange(1, k + 1))
    return q, np.array(w)


def _nelder_mead(fun: Callable, x0: np.ndarray, cfg: OptimizerConfig, step: float = 0.5, passes: int = 2):
    """Nelder-Mead, restarted from the returned vertex ``passes - 1`` times."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    total_evals = 0
    converged = False
    for _ in range(passes):
        simplex = np.vstack([x0] + [x0 + step * np.eye(n)[i] for i in range(n)])
        res = minimize(
            fun,
            x0,
            method="Nelder-Mead",
            options={
                "xatol": cfg.xatol,
                "fatol": cfg.fatol,
                "maxfev": cfg.max_evals,
                "adaptive": n > 2,
                "initial_simplex": simplex,
            },
        )
        total_evals += res.nfev
        converged = bool(res.success)
        x0 = res.x
        step = 0.1
    return res.x, float(res.fun), converged, total_evals


def _convex_argmin(
    fun: Callable[[float], float], x0: float, step: float, tol: float, limit: float = 60.0
) -> tuple[float, float]:
    """Minimize a convex scalar function: expand a bracket, then bounded Brent.

    The bracket never leaves ``[x0 - limit, x0 + limit]``; at the endpoints
    of ``[d, D]`` the infimum over lambda is only approached at infinity,
    and the value there is within ``exp(-limit)``-type error of the limit.
    """
    f0 = fun(x0)
    lo, s = x0 - step, step
    while lo > x0 - limit and fun(lo) < f0:
        s *= 2
        lo = max(x0 - s, x0 - limit)
    hi, s = x0 + step, step
    while hi < x0 + limit and fun(hi) < f0:
        s *= 2
        hi = min(x0 + s, x0 + limit)
    res = minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x), float(res.fun)


def _transport_upper(mix: MixtureFunction, mu: DiscreteMeasure, t: float, base: BaseMeasure) -> float:
    return t * float(mix.xi_prime(base.D)) + mu.top


def _starts(chart: MeasureChart, anchors: Sequence[DiscreteMeasure], scale: float, n_random: int, seed: int):
    rng = np.random.default_rng(seed)
    k = chart.k
    out = [chart.encode(m) for m in anchors]
    tiny = DiscreteMeasure(1e-6 * np.arange(1, k + 1), np.full(k, 1.0 / k))
    spread = DiscreteMeasure(scale * np.arange(1, k + 1) / (k + 1), np.full(k, 1.0 / k))
    out += [chart.encode(tiny), chart.encode(spread)]
    for _ in range(n_random):
        q = np.sort(rng.uniform(0.0, scale, size=k)) + TINY_ATOM * np.arange(1, k + 1)
        out.append(chart.encode(DiscreteMeasure(q, rng.dirichlet(np.ones(k)))))
    return out


def _multistart(objective, chart, starts, cfg, passes: int = 2):
    runs = []
    for x0 in starts:
        runs.append(_nelder_mead(objective, x0, cfg, passes=passes))
    best = min(runs, key=lambda r: r[1])
    diag = {
        "start_values": [r[1] for r in runs],
        "n_evals": int(sum(r[3] for r in runs)),
        "all_converged": all(r[2] for r in runs),
    }
    return best, diag


# ---------------------------------------------------------------- Hopf-Lax


def hopf_lax_objective(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    t: float,
    base: BaseMeasure,
    nu: DiscreteMeasure,
    pde: PdeConfig = PdeConfig(),
    project: bool = False,
) -> float:
    """``psi(nu) + (t/2) E xi*((X_nu - X_mu)/t)``, optionally after ``nu <- max(nu, mu)``."""
    if project:
        nu = dominate_truncate(nu, mu)
    return solve_parisi(nu, -0.5 * nu.top, base, pde) + 0.5 * t * transport_cost(mix, nu, mu, t)


def hopf_lax_value(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    t: float,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
    project: bool = False,
    warm_start: Optional[DiscreteMeasure] = None,
) -> VariationalResult:
    """Minimize the Hopf-Lax functional over ``cfg.n_atoms``-atom measures."""
    if not t > 0:
        raise ValueError("hopf_lax_value needs t > 0")
    chart = MeasureChart(cfg.n_atoms)

    def objective(theta):
        return hopf_lax_objective(mix, mu, t, base, chart.decode(theta), cfg.search_pde, project)

    anchors = [mu] + ([warm_start] if warm_start is not None else [])
    starts = _starts(chart, anchors, _transport_upper(mix, mu, t, base), cfg.n_random_starts, cfg.seed)
    (x, _, _, _), diag = _multistart(objective, chart, starts, cfg)
    nu = chart.decode(x)
    if project:
        nu = dominate_truncate(nu, mu)
    fine = parisi_value(nu, -0.5 * nu.top, base, cfg.final_pde)
    value = fine.value + 0.5 * t * transport_cost(mix, nu, mu, t)
    diag["pde_err_estimate"] = fine.err_estimate
    return VariationalResult(value, nu, converged=diag["all_converged"], diagnostics=diag)


# ---------------------------------------------------------- classical form


def _scaled(mix: MixtureFunction, t: float) -> MixtureFunction:
    return mix if t == 1.0 else MixtureFunction([(p, t * b2) for p, b2 in mix.coeffs])


def parisi_functional(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    u: float,
    zeta: DiscreteMeasure,
    lam: float,
    base: BaseMeasure,
    pde: PdeConfig = PdeConfig(),
) -> float:
    """Bracket of the constrained Parisi formula, without ``-xi(u)/2 - mu^{-1}(1) u / 2``."""
    zm = zeta_mu(mix, zeta, mu)
    # xi'(zeta^{-1}(1)) = zeta_mu^{-1}(1) - mu^{-1}(1); reading it off zm keeps the
    # shift consistent with the measure the PDE actually sees
    shift = 0.5 * (mix.xi_prime(u) - (zm.top - mu.top))
    p = solve_parisi(zm, lam + shift, base, pde)
    return -lam * u + p - 0.5 * integral_cdf_dtheta(mix, zeta, u)


def _lambda_free(base: BaseMeasure) -> bool:
    return base.d == base.D


def constrained_parisi_value(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    u: float,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
    warm: Optional[tuple[DiscreteMeasure, float]] = None,
    n_starts: Optional[int] = None,
    final: bool = True,
) -> VariationalResult:
    """``inf_{zeta in M([0,u]), lambda}`` of the Parisi bracket at self-overlap ``u``."""
    if not base.d - 1e-12 <= u <= base.D + 1e-12:
        raise ValueError(f"u = {u} outside [d, D] = [{base.d}, {base.D}]")
    fixed_lam = _lambda_free(base)
    pde = cfg.search_pde
    diag: dict = {}
    if u <= 0.0:
        zeta = DiscreteMeasure.dirac(0.0)
        lam0 = 0.0 if warm is None else warm[1]
        lam, _ = _convex_argmin(lambda l: parisi_functional(mix, mu, 0.0, zeta, l, base, pde), lam0, 0.5, cfg.scalar_tol)
    else:
        chart = MeasureChart(cfg.n_atoms, cap=u)
        kd = chart.dim

        if fixed_lam:

            def objective(theta):
                return parisi_functional(mix, mu, u, chart.decode(theta), 0.0, base, pde)

        else:

            def objective(theta):
                return parisi_functional(mix, mu, u, chart.decode(theta[:kd]), theta[kd], base, pde)

        anchors = [DiscreteMeasure.dirac(u * (1 - 1e-6))]
        lam0 = 0.0
        if warm is not None:
            anchors.insert(0, DiscreteMeasure(np.minimum(warm[0].atoms, u), warm[0].weights))
            lam0 = warm[1]
        n_rand = cfg.n_random_starts if n_starts is None else max(n_starts - len(anchors) - 2, 0)
        starts = _starts(chart, anchors, u, n_rand, cfg.seed)
        if n_starts is not None:
            starts = starts[:n_starts]
        if not fixed_lam:
            starts = [np.append(s, lam0) for s in starts]
        scan_cfg = cfg if final else replace(cfg, xatol=max(cfg.xatol, 1e-4), fatol=max(cfg.fatol, 1e-9))
        (x, _, _, _), diag = _multistart(objective, chart, starts, scan_cfg, passes=2 if final else 1)
        zeta = chart.decode(x[:kd])
        lam = 0.0
        if not fixed_lam:
            lam, _ = _convex_argmin(
                lambda l: parisi_functional(mix, mu, u, zeta, l, base, pde), float(x[kd]), 0.1, cfg.scalar_tol
            )
    fpde = cfg.final_pde if final else pde
    value = parisi_functional(mix, mu, u, zeta, lam, base, fpde)
    return VariationalResult(value, zeta, argmax=u, lam=lam, converged=diag.get("all_converged", True), diagnostics=diag)


def classical_parisi_value(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
    t: float = 1.0,
) -> VariationalResult:
    """``sup_{u in [d,D]}`` of the constrained value minus ``xi(u)/2 + mu^{-1}(1) u/2``.

    ``t`` rescales the mixture to ``t xi``, which gives the limit of
    ``F_N(t, mu)``.
    """
    if not t > 0:
        raise ValueError("classical_parisi_value needs t > 0")
    tmix = _scaled(mix, t)

    def outer(res: VariationalResult) -> float:
        u = res.argmax
        return res.value - 0.5 * float(tmix.xi(u)) - 0.5 * mu.top * u

    if _lambda_free(base):
        res = constrained_parisi_value(tmix, mu, base.D, base, cfg)
        res.value = outer(res)
        return res

    evaluated: dict[float, VariationalResult] = {}

    def scan(grid, warm_from=None):
        warm = warm_from
        for u in grid:
            key = round(float(u), 12)
            if key in evaluated:
                continue
            r = constrained_parisi_value(tmix, mu, float(u), base, cfg, warm=warm, n_starts=cfg.u_starts, final=False)
            evaluated[key] = r
            warm = (r.measure, r.lam)

    grid = np.linspace(base.d, base.D, cfg.u_grid)
    scan(grid)
    spacing = grid[1] - grid[0]
    for _ in range(cfg.u_refinements):
        best_u = max(evaluated, key=lambda k: outer(evaluated[k]))
        lo, hi = max(base.d, best_u - spacing), min(base.D, best_u + spacing)
        spacing /= cfg.u_refine_factor
        fine = np.arange(lo, hi + 0.5 * spacing, spacing)
        b = evaluated[best_u]
        scan(fine, warm_from=(b.measure, b.lam))
    best_u = max(evaluated, key=lambda k: outer(evaluated[k]))
    b = evaluated[best_u]
    res = constrained_parisi_value(tmix, mu, best_u, base, cfg, warm=(b.measure, b.lam))
    res.value = outer(res)
    res.diagnostics = {
        "u_values": sorted(evaluated),
        "outer_values": [outer(evaluated[k]) for k in sorted(evaluated)],
        "at_edge": bool(best_u in (round(base.d, 12), round(base.D, 12))),
        "inner": res.diagnostics,
    }
    res.converged = all(r.converged for r in evaluated.values()) and res.converged
    return res


def gamma_u(
    mix: MixtureFunction,
    nu: DiscreteMeasure,
    u: float,
    base: BaseMeasure,
    pde: PdeConfig = PdeConfig(),
    tol: float = 1e-8,
) -> tuple[float, float]:
    """``inf_lambda (-lambda u + Psi(nu, lambda))``; returns ``(value, argmin)``."""
    if not base.d - 1e-12 <= u <= base.D + 1e-12:
        raise ValueError(f"u = {u} outside [d, D]")

    def g(lam):
        return -lam * u + solve_parisi(nu, lam - 0.5 * nu.top, base, pde)

    if _lambda_free(base):
        return g(0.0), 0.0
    lam, val = _convex_argmin(g, 0.0, 0.5, tol)
    return val, lam


# ------------------------------------------------------------ minimax


@dataclass
class MinimaxReport:
    """Both orders of the ``u`` / ``(nu, lambda)`` optimization; ``gap >= 0`` up to solver error."""

    sup_inf: float
    inf_sup: float
    argmax_u: float
    lam: float
    measure: DiscreteMeasure

    @property
    def gap(self) -> float:
        return self.inf_sup - self.sup_inf


def _lifted_objective(mix, mu, t, base, chart, pde):
    """``(theta, lambda) -> Psi(nu, lambda) + (t/2) E xi*((X_nu - X_mu)/t)`` with ``nu >= mu``."""

    def value(theta, lam):
        nu = dominate_truncate(chart.decode(theta), mu)
        return solve_parisi(nu, lam - 0.5 * nu.top, base, pde) + 0.5 * t * transport_cost(mix, nu, mu, t)

    return value


def minimax_values(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
    t: float = 1.0,
) -> MinimaxReport:
    """``sup_u inf_{nu, lambda}`` and ``inf_{nu, lambda} sup_u`` of ``-lambda u + Psi(nu, lambda) + cost``.

    The inner supremum over ``u in [d, D]`` of the linear term is explicit,
    ``-lambda d`` for ``lambda >= 0`` and ``-lambda D`` otherwise. The
    outer supremum is a warm-started scan of the ``u`` grid with local
    refinements, as in ``classical_parisi_value``.
    """
    chart = MeasureChart(cfg.n_atoms)
    kd = chart.dim
    lifted = _lifted_objective(mix, mu, t, base, chart, cfg.search_pde)
    starts = [np.append(x, 0.0) for x in _starts(chart, [mu], _transport_upper(mix, mu, t, base), cfg.n_random_starts, cfg.seed)]

    def linear_sup(lam):
        return -lam * (base.d if lam >= 0 else base.D)

    (x_is, _, _, _), _ = _multistart(lambda x: lifted(x[:kd], x[kd]) + linear_sup(x[kd]), chart, starts, cfg)
    fine = _lifted_objective(mix, mu, t, base, chart, cfg.final_pde)
    inf_sup = fine(x_is[:kd], x_is[kd]) + linear_sup(x_is[kd])

    evaluated: dict[float, tuple[float, np.ndarray]] = {}
    scan_cfg = replace(cfg, xatol=max(cfg.xatol, 1e-4), fatol=max(cfg.fatol, 1e-9))

    def inner(u, x0s, final=False):
        (x, val, _, _), _ = _multistart(lambda x: lifted(x[:kd], x[kd]) - x[kd] * u, chart, x0s, cfg if final else scan_cfg)
        return val, x

    def scan(grid, x0):
        for u in grid:
            key = round(float(u), 12)
            if key not in evaluated:
                evaluated[key] = inner(key, [x0])
            x0 = evaluated[key][1]

    grid = np.linspace(base.d, base.D, cfg.u_grid) if base.d < base.D else np.array([base.D])
    scan(grid, x_is)
    spacing = grid[1] - grid[0] if grid.size > 1 else 0.0
    for _ in range(cfg.u_refinements if spacing > 0 else 0):
        best = max(evaluated, key=lambda k: evaluated[k][0])
        lo, hi = max(base.d, best - spacing), min(base.D, best + spacing)
        spacing /= cfg.u_refine_factor
        scan(np.arange(lo, hi + 0.5 * spacing, spacing), evaluated[best][1])
    best = max(evaluated, key=lambda k: evaluated[k][0])
    _, x = inner(best, [evaluated[best][1]] + starts, final=True)
    sup_inf = fine(x[:kd], x[kd]) - x[kd] * best
    return MinimaxReport(sup_inf, inf_sup, best, float(x[kd]), dominate_truncate(chart.decode(x[:kd]), mu))


# ------------------------------------------------------ (s, h) enrichment


def psi_hat(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    t: float,
    h: float,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
    warm_start: Optional[DiscreteMeasure] = None,
) -> VariationalResult:
    """Hopf-Lax value with ``Psi(nu, h)`` in place of ``psi(nu)``.

    ``Psi(nu, h)`` is ``psi`` for the base measure tilted by
    ``exp(h sigma^2)`` plus the log of the tilt's normalizer.
    """
    tilted, log_z = base.tilted(h)
    res = hopf_lax_value(mix, mu, t, tilted, cfg, warm_start=warm_start)
    res.value += log_z
    return res


def _penalty(mix: MixtureFunction, s: float, dh: float) -> float:
    return 0.5 * s * mix.xi_star(2.0 * dh / s)


def _h_bracket(mix: MixtureFunction, s: float, h: float, base: BaseMeasure, pad: float) -> tuple[float, float]:
    return h, h + 0.5 * s * float(mix.xi_prime(base.D)) + pad


def _sup_over_h(mix, s, h, base, pad, fn, tol) -> tuple[float, float, bool]:
    lo, hi = _h_bracket(mix, s, h, base, pad)
    res = minimize_scalar(lambda hp: -(fn(hp) - _penalty(mix, s, hp - h)), bounds=(lo, hi), method="bounded", options={"xatol": tol})
    hp = float(res.x)
    at_edge = hp > hi - 10 * tol
    return -float(res.fun), hp, at_edge


def theorem2_value(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    s: float,
    t: float,
    h: float,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
    transport: Optional[Callable[[DiscreteMeasure], float]] = None,
) -> VariationalResult:
    """``sup_h' [Psi_hat(h') - (s/2) xi*(2(h' - h)/s)]``.

    When ``sigma^2`` is constant, ``Psi_hat(h') = Psi_hat(0) + D h'`` and
    only one inner minimization is needed.
    """
    if not (s > 0 and t > 0):
        raise ValueError("theorem2_value needs s > 0 and t > 0")
    if _lambda_free(base):
        inner = psi_hat(mix, mu, t, 0.0, base, cfg)
        value, hp, edge = _sup_over_h(
            mix, s, h, base, cfg.h_bracket_pad, lambda x: inner.value + base.D * x, cfg.scalar_tol
        )
        return VariationalResult(value, inner.measure, argmax=hp, converged=inner.converged, diagnostics={"at_edge": edge})

    cache: dict[float, VariationalResult] = {}
    last: list[Optional[DiscreteMeasure]] = [None]

    def psi_hat_at(hp: float) -> float:
        if hp not in cache:
            cache[hp] = psi_hat(mix, mu, t, hp, base, cfg, warm_start=last[0])
            last[0] = cache[hp].measure
        return cache[hp].value

    value, hp, edge = _sup_over_h(mix, s, h, base, cfg.h_bracket_pad, psi_hat_at, 1e-5)
    inner = cache[hp] if hp in cache else psi_hat(mix, mu, t, hp, base, cfg)
    return VariationalResult(
        value,
        inner.measure,
        argmax=hp,
        converged=all(r.converged for r in cache.values()),
        diagnostics={"at_edge": edge, "n_inner": len(cache)},
    )


def corollary_value(
    mix: MixtureFunction,
    base: BaseMeasure,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> VariationalResult:
    """``sup_h inf_nu [Psi(nu, h) + (1/2) int xi* d nu - (1/2) xi*(2h)]``.

    The cost ``int xi* d nu`` is evaluated directly from the atoms.
    """
    chart = MeasureChart(cfg.n_atoms)
    upper = float(mix.xi_prime(base.D))
    cache: dict[float, tuple[float, DiscreteMeasure]] = {}

    def inner(h: float) -> float:
        if h not in cache:
            tilted, log_z = base.tilted(h)

            def objective(theta):
                nu = chart.decode(theta)
                cost = float(nu.weights @ mix.xi_star(nu.atoms))
                return solve_parisi(nu, -0.5 * nu.top, tilted, cfg.search_pde) + 0.5 * cost

            starts = _starts(chart, [DiscreteMeasure.dirac(0.0)], upper, cfg.n_random_starts, cfg.seed)
            (x, _, _, _), _ = _multistart(objective, chart, starts, cfg)
            nu = chart.decode(x)
            val = parisi_value(nu, -0.5 * nu.top, tilted, cfg.final_pde).value
            cache[h] = (val + 0.5 * float(nu.weights @ mix.xi_star(nu.atoms)) + log_z, nu)
        return cache[h][0]

    if _lambda_free(base):
        c = inner(0.0)

        def fn(x):
            return c + base.D * x

    else:
        fn = inner
    value, hp, edge = _sup_over_h(mix, 1.0, 0.0, base, cfg.h_bracket_pad, fn, cfg.scalar_tol if _lambda_free(base) else 1e-5)
    nu = cache[min(cache, key=lambda k: abs(k - hp))][1] if cache else None
    return VariationalResult(value, nu, argmax=hp, diagnostics={"at_edge": edge})


@dataclass
class HjGrid:
    s: np.ndarray
    h: np.ndarray
    f: np.ndarray
    residual: np.ndarray
    flagged: np.ndarray
    h_nodes: np.ndarray
    psi_hat_nodes: np.ndarray

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def tabulate_psi_hat(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    t: float,
    base: BaseMeasure,
    h_nodes: np.ndarray,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> np.ndarray:
    """``Psi_hat`` on a grid of ``h'`` values, warm-starting along the grid."""
    if _lambda_free(base):
        c = psi_hat(mix, mu, t, 0.0, base, cfg).value
        return c + base.D * np.asarray(h_nodes)
    out, warm = [], None
    for hp in h_nodes:
        r = psi_hat(mix, mu, t, float(hp), base, cfg, warm_start=warm)
        out.append(r.value)
        warm = r.measure
    return np.array(out)


def f_from_psi_hat(
    mix: MixtureFunction,
    s_values: np.ndarray,
    h_values: np.ndarray,
    h_nodes: np.ndarray,
    psi_nodes: np.ndarray,
    tol: float = 1e-11,
) -> np.ndarray:
    """Hopf-Lax ``f(s, h)`` from a spline of tabulated ``Psi_hat``."""
    spline = CubicSpline(h_nodes, psi_nodes)
    lo_node, hi_node = float(h_nodes[0]), float(h_nodes[-1])
    f = np.empty((len(s_values), len(h_values)))
    for i, s in enumerate(s_values):
        for j, h in enumerate(h_values):
            lo, hi = max(h, lo_node), hi_node
            res = minimize_scalar(
                lambda hp: -(float(spline(hp)) - _penalty(mix, s, hp - h)),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": tol},
            )
            f[i, j] = -res.fun
    return f


def hj_residual_grid(mix: MixtureFunction, s_values, h_values, f: np.ndarray) -> np.ndarray:
    """``2 d_s f - xi(d_h f)`` by central differences at interior points."""
    ds = s_values[1] - s_values[0]
    dh = h_values[1] - h_values[0]
    f_s = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2 * ds)
    f_h = (f[1:-1, 2:] - f[1:-1, :-2]) / (2 * dh)
    return 2 * f_s - mix.xi(f_h)


def hj_check(
    mix: MixtureFunction,
    mu: DiscreteMeasure,
    t: float,
    base: BaseMeasure,
    s_range: tuple[float, float],
    h_range: tuple[float, float],
    step: float,
    cfg: OptimizerConfig = OptimizerConfig(),
    tolerance: Optional[float] = None,
    h_nodes: Optional[np.ndarray] = None,
    psi_nodes: Optional[np.ndarray] = None,
) -> HjGrid:
    """Residual of ``2 d_s f = xi(d_h f)`` on an ``(s, h)`` grid.

    ``Psi_hat`` is tabulated once (pass ``h_nodes``/``psi_nodes`` to reuse
    a table across grids). Points with ``|residual| > tolerance`` (default
    ``5 * step``) are flagged as candidate kinks.
    """
    if step > 0.05:
        raise ValueError("central differences need step <= 0.05")
    s_values = np.arange(s_range[0], s_range[1] + 0.5 * step, step)
    h_values = np.arange(h_range[0], h_range[1] + 0.5 * step, step)
    if h_nodes is None:
        # maximizers never exceed h + s xi'(D) / 2, see _h_bracket
        top = h_range[1] + 0.5 * s_range[1] * float(mix.xi_prime(base.D)) + 0.1
        h_nodes = np.linspace(h_range[0], top, max(int(np.ceil((top - h_range[0]) / 0.05)) + 1, 8))
        psi_nodes = tabulate_psi_hat(mix, mu, t, base, h_nodes, cfg)
    f = f_from_psi_hat(mix, s_values, h_values, h_nodes, psi_nodes)
    res = hj_residual_grid(mix, s_values, h_values, f)
    tol = 5 * step if tolerance is None else tolerance
    return HjGrid(s_values, h_values, f, res, np.abs(res) > tol, np.asarray(h_nodes), np.asarray(psi_nodes))
