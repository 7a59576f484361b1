"""Atomic probability measures on R+ and quantile-coupling functionals.

Every measure here is finitely supported. Pairs of measures are compared
through the quantile coupling ``X_rho = rho^{-1}(U)`` with ``U`` uniform on
[0, 1]; on the merged grid of cumulative levels of both measures the two
quantile functions are piecewise constant, so all the couplings below are
evaluated exactly as finite sums.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .mixture import MixtureFunction

ATOM_TOL = 1e-12
LEVEL_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12


class DiscreteMeasure:
    """Probability measure ``sum_l w_l delta_{q_l}`` with ``0 <= q_0 < ... < q_k``.

    Atoms closer than ``ATOM_TOL`` are merged. Weights must be positive and
    sum to one within ``WEIGHT_SUM_TOL``; they are renormalized exactly.
    """

    __slots__ = ("atoms", "weights", "cum")

    def __init__(self, atoms: Sequence[float], weights: Sequence[float]):
        q = np.asarray(atoms, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if q.size == 0 or q.size != w.size:
            raise ValueError("atoms and weights must be non-empty and of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(w))):
            raise ValueError("atoms and weights must be finite")
        if np.any(q < 0):
            raise ValueError("atoms must lie in [0, inf)")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {float(total):.12g}, expected 1")
        order = np.argsort(q, kind="stable")
        q, w = q[order], w[order] / total
        q, w = _coalesce(q, w)
        q.setflags(write=False)
        w.setflags(write=False)
        cum = np.cumsum(w)
        cum[-1] = 1.0
        cum.setflags(write=False)
        self.atoms = q
        self.weights = w
        self.cum = cum

    @classmethod
    def dirac(cls, q: float) -> "DiscreteMeasure":
        return cls([q], [1.0])

    @classmethod
    def from_unnormalized(cls, atoms, weights) -> "DiscreteMeasure":
        """Build from nonnegative weights.

        Atoms whose relative mass is at most ``LEVEL_TOL`` are dropped: the
        level grid cannot resolve them, and keeping them would let an
        invisible atom set ``top``.
        """
        q = np.asarray(atoms, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        total = w[w > 0].sum()
        if not total > 0:
            raise ValueError("all weights vanish")
        keep = w > LEVEL_TOL * total
        w = w[keep] / w[keep].sum()
        return cls(q[keep], w / w.sum())

    @classmethod
    def from_levels(cls, locations, levels) -> "DiscreteMeasure":
        """Measure whose quantile equals ``locations[j]`` on ``(levels[j-1], levels[j]]``."""
        levels = np.asarray(levels, dtype=float)
        widths = np.diff(np.concatenate([[0.0], levels]))
        return cls.from_unnormalized(locations, np.clip(widths, 0.0, None))

    @classmethod
    def from_config(cls, obj) -> "DiscreteMeasure":
        atoms = obj["atoms"]
        return cls([a[0] for a in atoms], [a[1] for a in atoms])

    def to_config(self) -> dict:
        return {"atoms": [[float(q), float(w)] for q, w in zip(self.atoms, self.weights)]}

    @property
    def n_atoms(self) -> int:
        return self.atoms.size

    @property
    def top(self) -> float:
        """``mu^{-1}(1)``, the largest atom."""
        return float(self.atoms[-1])

    def quantile(self, r):
        """Left-continuous inverse ``inf {s >= 0 : mu([0, s]) >= r}``."""
        r_arr = np.asarray(r, dtype=float)
        if np.any((r_arr < 0) | (r_arr > 1)):
            raise ValueError("quantile level must lie in [0, 1]")
        idx = np.searchsorted(self.cum, r_arr - LEVEL_TOL, side="left")
        out = self.atoms[np.clip(idx, 0, self.n_atoms - 1)]
        out = np.where(r_arr <= 0, 0.0, out)
        return out if out.ndim else float(out)

    def cdf(self, s):
        """Right-continuous ``mu([0, s])``."""
        s_arr = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.atoms, s_arr, side="right")
        out = np.where(idx > 0, self.cum[np.clip(idx - 1, 0, None)], 0.0)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        return float(self.atoms @ self.weights)

    def cdf_breakpoints(self) -> list[tuple[float, float]]:
        """(s, mu([0, s])) at every atom, for plotting step CDFs."""
        return [(float(q), float(c)) for q, c in zip(self.atoms, self.cum)]

    def allclose(self, other: "DiscreteMeasure", atol: float = 1e-12) -> bool:
        return (
            self.n_atoms == other.n_atoms
            and np.allclose(self.atoms, other.atoms, rtol=0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash((self.atoms.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        parts = " + ".join(f"{w:.6g}*d({q:.6g})" for q, w in zip(self.atoms, self.weights))
        return f"DiscreteMeasure({parts})"


def _coalesce(q: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if q.size == 1:
        return q.copy(), w.copy()
    new_group = np.concatenate([[True], np.diff(q) > ATOM_TOL])
    groups = np.cumsum(new_group) - 1
    w_out = np.bincount(groups, weights=w)
    q_out = q[new_group]
    return q_out, w_out


def merged_levels(*measures: DiscreteMeasure) -> np.ndarray:
    """Union of cumulative levels, deduplicated within ``LEVEL_TOL``; ends at 1."""
    lv = np.sort(np.concatenate([m.cum for m in measures]))
    keep = np.concatenate([np.diff(lv) > LEVEL_TOL, [False]])
    lv = np.concatenate([lv[keep], [1.0]])
    return lv


def quantiles_on_levels(m: DiscreteMeasure, levels: np.ndarray) -> np.ndarray:
    """Value of ``m^{-1}`` on each interval ``(levels[j-1], levels[j]]``."""
    lo = np.concatenate([[0.0], levels[:-1]])
    mid = 0.5 * (lo + levels)
    idx = np.searchsorted(m.cum, mid, side="left")
    return m.atoms[np.clip(idx, 0, m.n_atoms - 1)]


def coupling(*measures: DiscreteMeasure) -> tuple[np.ndarray, list[np.ndarray]]:
    """Interval widths of the merged level grid and each quantile on it."""
    levels = merged_levels(*measures)
    widths = np.diff(np.concatenate([[0.0], levels]))
    return widths, [quantiles_on_levels(m, levels) for m in measures]


def quantile(m: DiscreteMeasure, r):
    return m.quantile(r)


def cdf(m: DiscreteMeasure, s):
    return m.cdf(s)


def zeta_mu(mix: MixtureFunction, zeta: DiscreteMeasure, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Measure with quantile ``xi'(zeta^{-1}(x)) + mu^{-1}(x)``."""
    widths, (qz, qm) = coupling(zeta, mu)
    return DiscreteMeasure.from_unnormalized(mix.xi_prime(qz) + qm, widths)


def transport_cost(mix: MixtureFunction, nu: DiscreteMeasure, mu: DiscreteMeasure, t: float) -> float:
    """``E xi*((X_nu - X_mu) / t)`` under the quantile coupling."""
    if not t > 0:
        raise ValueError(f"transport_cost needs t > 0, got {t!r}")
    widths, (qn, qm) = coupling(nu, mu)
    diffs = (qn - qm) / t
    return float(sum(w * mix.xi_star(d) for w, d in zip(widths, diffs) if d > 0))


def cdf_l1_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``int |mu(s) - nu(s)| ds``, i.e. ``E|X_mu - X_nu|`` under quantile coupling."""
    widths, (qa, qb) = coupling(mu, nu)
    return float(widths @ np.abs(qa - qb))


def truncate_support(nu: DiscreteMeasure, cap: float) -> DiscreteMeasure:
    """Law of ``min(X_nu, cap)``."""
    return DiscreteMeasure(np.minimum(nu.atoms, cap), nu.weights)


def dominate_truncate(nu: DiscreteMeasure, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Law of ``max(X_nu, X_mu)``; its CDF is ``min(nu(s), mu(s))``."""
    widths, (qn, qm) = coupling(nu, mu)
    return DiscreteMeasure.from_unnormalized(np.maximum(qn, qm), widths)


def quantile_interpolate(a: DiscreteMeasure, b: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    """Law of ``lam X_a + (1 - lam) X_b``, the displacement interpolation."""
    widths, (qa, qb) = coupling(a, b)
    return DiscreteMeasure.from_unnormalized(lam * qa + (1.0 - lam) * qb, widths)


def stochastically_dominates(nu: DiscreteMeasure, mu: DiscreteMeasure, tol: float = 1e-12) -> bool:
    """True when ``nu(s) <= mu(s)`` for every s.

    Locations are compared up to ``ATOM_TOL``, the resolution at which atoms merge.
    """
    pts = np.union1d(nu.atoms, mu.atoms)
    return bool(np.all(nu.cdf(pts) <= mu.cdf(pts + ATOM_TOL) + tol))


def random_measure(rng: np.random.Generator, n_atoms: int, scale: float = 1.0) -> DiscreteMeasure:
    """Random atomic measure, handy for property tests and multistarts."""
    q = np.sort(rng.uniform(0.0, scale, size=n_atoms))
    w = rng.dirichlet(np.ones(n_atoms))
    return DiscreteMeasure.from_unnormalized(q, w)


def from_pairs(pairs: Iterable[Sequence[float]]) -> DiscreteMeasure:
    pairs = list(pairs)
    return DiscreteMeasure([p[0] for p in pairs], [p[1] for p in pairs])


def integral_cdf_dtheta(mix: MixtureFunction, zeta: DiscreteMeasure, u: float) -> float:
    """``int_0^u zeta([0, s]) d theta(s)`` for ``zeta`` supported on ``[0, u]``."""
    if zeta.top > u + ATOM_TOL:
        raise ValueError(f"measure has an atom above u = {u}")
    ends = np.append(zeta.atoms[1:], u)
    return float(np.sum(zeta.cum * (mix.theta(ends) - mix.theta(zeta.atoms))))
