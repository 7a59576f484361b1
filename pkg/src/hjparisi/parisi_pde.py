"""Terminal-value Parisi PDE for atomic order parameters.

For an atomic measure ``nu`` the coefficient ``nu(t)`` of the PDE is
piecewise constant in time, and on each piece the equation is solved in
closed form by the Cole-Hopf transform::

    Phi(t-, x) = (1/c) log E exp(c Phi(t+, x + sqrt(dt) G))     (c > 0)
    Phi(t-, x) = E Phi(t+, x + sqrt(dt) G)                      (c = 0)

The Gaussian expectations use Gauss-Hermite quadrature; between steps the
solution is kept on a uniform x-grid and evaluated off-grid by four-point
(cubic) Lagrange interpolation, with linear extrapolation past the edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from .errors import NumericalFailure
from .measures import DiscreteMeasure

SPAN_TOL = 1e-12


class BaseMeasure:
    """Finitely supported single-spin law ``P_1``.

    ``d`` and ``D`` are the smallest and largest values of ``sigma^2`` on the
    support.
    """

    __slots__ = ("points", "probs", "log_probs")

    def __init__(self, points: Sequence[float], probs: Sequence[float]):
        s = np.asarray(points, dtype=float).ravel()
        p = np.asarray(probs, dtype=float).ravel()
        if s.size == 0 or s.size != p.size:
            raise ValueError("points and probs must be non-empty and of equal length")
        if np.any(p <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("probabilities must be positive and points finite")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(p.sum()):.12g}, expected 1")
        order = np.argsort(s)
        s, p = s[order], p[order] / p.sum()
        if np.any(np.diff(s) <= 0):
            raise ValueError("support points must be distinct")
        for arr in (s, p):
            arr.setflags(write=False)
        self.points = s
        self.probs = p
        self.log_probs = np.log(p)

    @classmethod
    def ising(cls) -> "BaseMeasure":
        return cls([-1.0, 1.0], [0.5, 0.5])

    @classmethod
    def uniform(cls, points: Sequence[float]) -> "BaseMeasure":
        return cls(points, np.full(len(points), 1.0 / len(points)))

    @classmethod
    def from_config(cls, obj) -> "BaseMeasure":
        if "preset" in obj:
            if obj["preset"] != "ising":
                raise ValueError(f"unknown base measure preset {obj['preset']!r}")
            return cls.ising()
        return cls([pt[0] for pt in obj["points"]], [pt[1] for pt in obj["points"]])

    def to_config(self) -> dict:
        return {"points": [[float(s), float(p)] for s, p in zip(self.points, self.probs)]}

    @property
    def d(self) -> float:
        return float(np.min(self.points**2))

    @property
    def D(self) -> float:
        return float(np.max(self.points**2))

    @property
    def is_ising(self) -> bool:
        return self.points.size == 2 and np.allclose(self.points, [-1.0, 1.0]) and np.allclose(self.probs, [0.5, 0.5])

    def tilted(self, h: float) -> tuple["BaseMeasure", float]:
        """Law proportional to ``exp(h sigma^2) dP_1`` and its log-normalizer."""
        logw = self.log_probs + h * self.points**2
        log_z = float(logsumexp(logw))
        return BaseMeasure(self.points, np.exp(logw - log_z)), log_z

    def __repr__(self) -> str:
        pts = ", ".join(f"{s:g}:{p:.4g}" for s, p in zip(self.points, self.probs))
        return f"BaseMeasure({pts})"


@dataclass(frozen=True)
class PdeConfig:
    """Discretization of the PDE solve.

    ``x_grid_halfwidth=None`` selects ``4 sqrt(span D) + 4``.
    """

    quad_order: int = 40
    x_grid_step: float = 0.02
    x_grid_halfwidth: Optional[float] = None
    interpolation: str = "cubic"

    def __post_init__(self):
        if self.quad_order < 8:
            raise ValueError("quad_order must be >= 8")
        if not self.x_grid_step > 0:
            raise ValueError("x_grid_step must be positive")
        if self.interpolation != "cubic":
            raise ValueError("only cubic interpolation is supported")

    def halfwidth(self, span: float, D: float) -> float:
        required = 4.0 * np.sqrt(max(span, 0.0) * D) + 4.0
        if self.x_grid_halfwidth is None:
            return required
        if self.x_grid_halfwidth < required - 1e-12:
            raise ValueError(
                f"x_grid_halfwidth={self.x_grid_halfwidth} is below the required {required:.4g}"
            )
        return self.x_grid_halfwidth

    def coarsened(self) -> "PdeConfig":
        return PdeConfig(
            quad_order=self.quad_order // 2,
            x_grid_step=2.0 * self.x_grid_step,
            x_grid_halfwidth=self.x_grid_halfwidth,
        )


@dataclass(frozen=True)
class ParisiValue:
    value: float
    err_estimate: float


@lru_cache(maxsize=None)
def gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``E f(G)``, G standard normal."""
    x, w = hermegauss(order)
    return x, w / w.sum()


def terminal_condition(base: BaseMeasure, lam: float, x):
    """``log int exp(sigma x + lam sigma^2) dP_1(sigma)``, vectorized in x."""
    x = np.asarray(x, dtype=float)
    expo = x[..., None] * base.points + (lam * base.points**2 + base.log_probs)
    out = logsumexp(expo, axis=-1)
    return out if out.ndim else float(out)


def time_steps(nu: DiscreteMeasure, a: Optional[float] = None) -> list[tuple[float, float]]:
    """Backward schedule ``[(duration, c), ...]`` starting at the terminal time.

    On ``[q_{l-1}, q_l)`` the CDF equals the cumulative weight of atoms up to
    ``q_{l-1}``; before the first atom it is zero, and on the optional
    extension ``[nu^{-1}(1), a]`` it is one.
    """
    q, cum = nu.atoms, nu.cum
    steps = []
    if a is not None:
        if a < q[-1] - SPAN_TOL:
            raise ValueError(f"extension time a={a} is below nu^{{-1}}(1)={q[-1]}")
        if a - q[-1] > 0:
            steps.append((a - q[-1], 1.0))
    for ell in range(q.size - 1, 0, -1):
        steps.append((q[ell] - q[ell - 1], float(cum[ell - 1])))
    steps.append((q[0], 0.0))
    return [(dt, c) for dt, c in steps if dt > 0]


def _combine(vals: np.ndarray, w: np.ndarray, c: float) -> np.ndarray:
    """``(1/c) log sum_m w_m exp(c vals_m)`` along axis 0, or the mean when c = 0.

    Centering at the mean and using ``log1p``/``expm1`` keeps full relative
    accuracy when ``c`` is tiny, where the naive form loses everything to
    cancellation.
    """
    mean = np.tensordot(w, vals, axes=(0, 0))
    if c == 0.0:
        return mean
    dev = c * (vals - mean)
    if dev.max() < 50.0:
        return mean + np.log1p(np.tensordot(w, np.expm1(dev), axes=(0, 0))) / c
    top = vals.max(axis=0)
    return top + np.log(np.tensordot(w, np.exp(c * (vals - top)), axes=(0, 0))) / c


def _lagrange4(frac: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights on nodes -1, 0, 1, 2 for fractional positions."""
    f = frac
    return np.stack(
        [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ],
        axis=-1,
    )


def _shifted_values(phi: np.ndarray, dx: float, shifts: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Interpolate grid data ``phi`` at ``x[centers] + shifts[m]`` for every m."""
    pos = shifts / dx
    i0 = np.floor(pos).astype(np.int64)
    lw = _lagrange4(pos - i0)
    pad = int(max(np.abs(i0).max(), 0)) + 3
    left_slope = phi[1] - phi[0]
    right_slope = phi[-1] - phi[-2]
    ext = np.concatenate(
        [
            phi[0] - left_slope * np.arange(pad, 0, -1),
            phi,
            phi[-1] + right_slope * np.arange(1, pad + 1),
        ]
    )
    base = centers[None, :] + pad + i0[:, None]
    out = lw[:, 0, None] * ext[base - 1]
    out += lw[:, 1, None] * ext[base]
    out += lw[:, 2, None] * ext[base + 1]
    out += lw[:, 3, None] * ext[base + 2]
    return out


def _solve(base: BaseMeasure, lam: float, steps, order: int, dx: float, halfwidth: float) -> float:
    g, w = gauss_hermite(order)
    if not steps:
        return terminal_condition(base, lam, 0.0)
    if len(steps) == 1:
        dt, c = steps[0]
        return float(_combine(terminal_condition(base, lam, np.sqrt(dt) * g)[:, None], w, c)[0])
    n_half = int(np.ceil(halfwidth / dx))
    x = dx * np.arange(-n_half, n_half + 1)
    dt, c = steps[0]
    phi = _combine(terminal_condition(base, lam, x[None, :] + np.sqrt(dt) * g[:, None]), w, c)
    all_idx = np.arange(x.size)
    for dt, c in steps[1:-1]:
        phi = _combine(_shifted_values(phi, dx, np.sqrt(dt) * g, all_idx), w, c)
    dt, c = steps[-1]
    vals = _shifted_values(phi, dx, np.sqrt(dt) * g, np.array([n_half]))
    return float(_combine(vals, w, c)[0])


def solve_parisi(
    nu: DiscreteMeasure,
    lam: float,
    base: BaseMeasure,
    cfg: PdeConfig = PdeConfig(),
    a: Optional[float] = None,
) -> float:
    """``Phi_{nu,lam}(0, 0)`` (or the extended ``P^a``) without an error estimate."""
    steps = time_steps(nu, a)
    span = nu.top if a is None else a
    return _solve(base, lam, steps, cfg.quad_order, cfg.x_grid_step, cfg.halfwidth(span, base.D))


def parisi_value(
    nu: DiscreteMeasure,
    lam: float,
    base: BaseMeasure,
    cfg: PdeConfig = PdeConfig(),
    max_err: Optional[float] = None,
) -> ParisiValue:
    """Parisi functional ``P(nu, lam)`` with a refinement-based error estimate.

    The estimate is the gap to a solve with half the quadrature order and
    twice the grid step, which bounds both the quadrature and the
    interpolation error from above.
    """
    value = solve_parisi(nu, lam, base, cfg)
    coarse = solve_parisi(nu, lam, base, cfg.coarsened())
    err = abs(value - coarse)
    if max_err is not None and err > max_err:
        raise NumericalFailure(f"Parisi PDE error estimate {err:.3g} exceeds bound {max_err:.3g}")
    return ParisiValue(value, err)


def parisi_value_extended(
    nu: DiscreteMeasure,
    lam: float,
    a: float,
    base: BaseMeasure,
    cfg: PdeConfig = PdeConfig(),
) -> float:
    """``P^a(nu, lam)``: the same PDE on ``[0, a]`` with ``nu(t) = 1`` past ``nu^{-1}(1)``."""
    return solve_parisi(nu, lam, base, cfg, a=a)


def parisi_value_recursive(
    nu: DiscreteMeasure,
    lam: float,
    base: BaseMeasure,
    order: int = 40,
    a: Optional[float] = None,
) -> float:
    """Grid-free nested-quadrature evaluation of the same recursion.

    The terminal condition is evaluated on the full tensor of Gaussian
    increments, so cost grows like ``order ** n_steps``; limited to three
    atoms.
    """
    if nu.n_atoms > 3:
        raise ValueError("recursive evaluation supports at most 3 atoms")
    steps = time_steps(nu, a)
    if not steps:
        return terminal_condition(base, lam, 0.0)
    g, w = gauss_hermite(order)
    n_steps = len(steps)
    x = np.zeros((1,) * n_steps)
    for i, (dt, _) in enumerate(steps):
        shape = [1] * n_steps
        shape[n_steps - 1 - i] = order
        x = x + np.sqrt(dt) * g.reshape(shape)
    vals = terminal_condition(base, lam, x)
    for dt, c in steps:
        vals = np.moveaxis(vals, -1, 0)
        vals = _combine(vals, w, c)
    return float(vals)


def psi_capital(mu: DiscreteMeasure, h: float, base: BaseMeasure, cfg: PdeConfig = PdeConfig()) -> float:
    """``Psi(mu, h) = P(mu, h - mu^{-1}(1) / 2)``."""
    return solve_parisi(mu, h - 0.5 * mu.top, base, cfg)


def psi(mu: DiscreteMeasure, base: BaseMeasure, cfg: PdeConfig = PdeConfig()) -> float:
    """``psi(mu) = Psi(mu, 0)``."""
    return psi_capital(mu, 0.0, base, cfg)
