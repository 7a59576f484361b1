"""Mixture function xi(r) = sum_p beta_p^2 r^p and its convex calculus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericalFailure

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 100


@dataclass(frozen=True)
class MixtureFunction:
    """Polynomial covariance function with nonnegative coefficients.

    Parameters
    ----------
    coeffs : sequence of (p, beta_p^2)
        Powers ``p >= 2`` with nonnegative weights; at least one weight
        must be positive. Repeated powers are summed.
    """

    coeffs: tuple[tuple[int, float], ...]

    def __init__(self, coeffs: Iterable[Sequence[float]]):
        merged: dict[int, float] = {}
        for item in coeffs:
            if len(item) != 2:
                raise ValueError(f"mixture term must be [p, beta_p^2], got {item!r}")
            p, b2 = item
            if int(p) != p or p < 2:
                raise ValueError(f"mixture power must be an integer >= 2, got {p!r}")
            if not np.isfinite(b2) or b2 < 0:
                raise ValueError(f"mixture weight must be finite and >= 0, got {b2!r}")
            merged[int(p)] = merged.get(int(p), 0.0) + float(b2)
        terms = tuple(sorted((p, b2) for p, b2 in merged.items() if b2 > 0))
        if not terms:
            raise ValueError("mixture needs at least one positive coefficient")
        object.__setattr__(self, "coeffs", terms)

    @classmethod
    def sk(cls, beta: float) -> "MixtureFunction":
        """Sherrington-Kirkpatrick mixture xi(r) = beta^2 r^2."""
        return cls([(2, beta * beta)])

    @property
    def powers(self) -> np.ndarray:
        return np.array([p for p, _ in self.coeffs], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([b2 for _, b2 in self.coeffs], dtype=float)

    @property
    def is_even(self) -> bool:
        return all(p % 2 == 0 for p, _ in self.coeffs)

    def xi(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for p, b2 in self.coeffs:
            out = out + b2 * r**p
        return out if out.ndim else float(out)

    def xi_prime(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for p, b2 in self.coeffs:
            out = out + p * b2 * r ** (p - 1)
        return out if out.ndim else float(out)

    def xi_second(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for p, b2 in self.coeffs:
            out = out + p * (p - 1) * b2 * r ** (p - 2)
        return out if out.ndim else float(out)

    def theta(self, r):
        """theta(r) = r xi'(r) - xi(r), defined for r >= 0."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("theta is only defined for r >= 0")
        out = np.zeros_like(r)
        for p, b2 in self.coeffs:
            out = out + (p - 1) * b2 * r**p
        return out if out.ndim else float(out)

    def xi_prime_inverse(self, s: float) -> float:
        """Solve xi'(r) = s for r >= 0 (s > 0) by safeguarded Newton."""
        s = float(s)
        if s <= 0.0:
            return 0.0
        lo, hi = 0.0, 1.0
        while self.xi_prime(hi) < s:
            lo, hi = hi, 2.0 * hi
            if hi > 1e150:
                raise NumericalFailure(f"cannot bracket xi'(r) = {s}")
        # xi' is convex on R+, so Newton started right of the root decreases monotonically.
        r = hi
        tol = NEWTON_TOL * max(1.0, s)
        for _ in range(NEWTON_MAXITER):
            g = self.xi_prime(r) - s
            if abs(g) <= tol:
                return r
            if g > 0:
                hi = r
            else:
                lo = r
            d = self.xi_second(r)
            step = r - g / d if d > 0 else np.nan
            r = step if lo < step < hi else 0.5 * (lo + hi)
            if hi - lo <= 4 * np.finfo(float).eps * max(1.0, hi):
                return r
        raise NumericalFailure(f"Newton for xi'(r) = {s} did not converge")

    def xi_star(self, s):
        """Restricted Legendre transform sup_{r >= 0} (r s - xi(r))."""
        if np.ndim(s):
            return np.array([self.xi_star(v) for v in np.ravel(s)]).reshape(np.shape(s))
        s = float(s)
        if s <= 0.0:
            return 0.0
        r = self.xi_prime_inverse(s)
        # r = 0 is admissible, so the sup is never negative; clamp roundoff
        return max(r * s - float(self.xi(r)), 0.0)

    def xi_star_prime(self, s):
        """Derivative of xi_star, equal to (xi')^{-1}(s) for s > 0 and 0 otherwise."""
        if np.ndim(s):
            return np.array([self.xi_star_prime(v) for v in np.ravel(s)]).reshape(np.shape(s))
        return self.xi_prime_inverse(float(s))

    def to_config(self) -> list[list[float]]:
        return [[p, b2] for p, b2 in self.coeffs]


# Free-function aliases, convenient for functional call sites.
def xi(m: MixtureFunction, r):
    return m.xi(r)


def xi_prime(m: MixtureFunction, r):
    return m.xi_prime(r)


def xi_second(m: MixtureFunction, r):
    return m.xi_second(r)


def theta(m: MixtureFunction, r):
    return m.theta(r)


def xi_star(m: MixtureFunction, s):
    return m.xi_star(s)


def xi_star_prime(m: MixtureFunction, s):
    return m.xi_star_prime(s)
