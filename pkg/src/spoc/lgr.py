"""Legendre-Gauss-Radau nodes, weights, differentiation and interpolation.

The n-point rule on [-1, 1] collocates at -1 and the n-1 interior roots of
P_{n-1} + P_n.  The right endpoint +1 is appended as a non-collocated support
point so that a degree-n state polynomial is carried on n+1 values.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

MAX_DEGREE = 40


class ExtrapolationWarning(UserWarning):
    """Raised when an interpolant is queried outside [-1, 1]."""


@dataclass(frozen=True)
class LgrRule:
    degree: int
    nodes: np.ndarray  # collocation nodes, starts at -1
    weights: np.ndarray
    interval: tuple[float, float] = (-1.0, 1.0)

    @property
    def support(self) -> np.ndarray:
        """Collocation nodes followed by the non-collocated right endpoint."""
        return np.append(self.nodes, self.interval[1])

    def mapped(self, a: float, b: float) -> "LgrRule":
        """Same rule affinely moved onto [a, b]."""
        if not b > a:
            raise ValueError(f"interval must satisfy a < b, got ({a}, {b})")
        half = 0.5 * (b - a)
        nodes = a + half * (self.nodes - self.interval[0]) * 2.0 / (
            self.interval[1] - self.interval[0]
        )
        scale = (b - a) / (self.interval[1] - self.interval[0])
        return LgrRule(self.degree, nodes, self.weights * scale, (float(a), float(b)))


def _radau_poly(n: int) -> np.ndarray:
    c = np.zeros(n + 1)
    c[n - 1] = 1.0
    c[n] = 1.0
    return c


@lru_cache(maxsize=None)
def _reference_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n == 1:
        return np.array([-1.0]), np.array([2.0])
    interior, _ = roots_jacobi(n - 1, 0.0, 1.0)
    poly = _radau_poly(n)
    dpoly = npleg.legder(poly)
    # Newton polish on P_{n-1} + P_n
    for _ in range(10):
        step = npleg.legval(interior, poly) / npleg.legval(interior, dpoly)
        interior = interior - step
        if np.max(np.abs(step)) < 1e-16:
            break
    nodes = np.concatenate(([-1.0], np.sort(interior)))
    pn1 = npleg.legval(nodes, np.eye(n)[n - 1])
    weights = (1.0 - nodes) / (n * n * pn1 * pn1)
    weights[0] = 2.0 / (n * n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def lgr_points(n: int) -> LgrRule:
    """n-point LGR rule on [-1, 1] (exact for polynomials of degree <= 2n-2)."""
    if int(n) != n or n < 1:
        raise ValueError(f"LGR degree must be a positive integer, got {n!r}")
    if n > MAX_DEGREE:
        raise ValueError(f"LGR degree {n} exceeds the supported maximum {MAX_DEGREE}")
    nodes, weights = _reference_rule(int(n))
    return LgrRule(int(n), nodes.copy(), weights.copy())


def barycentric_weights(points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("support points must be distinct")
    # scale by the interval length to keep products of many small gaps finite
    c = 4.0 / (x.max() - x.min()) if x.size > 1 else 1.0
    return 1.0 / np.prod(c * diff, axis=1)


def differentiation_matrix(rule: LgrRule) -> np.ndarray:
    """N x (N+1) matrix mapping support values to derivatives at the nodes."""
    x = rule.support
    b = barycentric_weights(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    full = (b[None, :] / b[:, None]) / diff
    np.fill_diagonal(full, 0.0)
    np.fill_diagonal(full, -full.sum(axis=1))
    return full[: rule.degree, :]


def interpolation_matrix(support: np.ndarray, query) -> np.ndarray:
    """Rows of Lagrange basis values, so ``M @ values`` interpolates at ``query``."""
    x = np.asarray(support, dtype=float)
    q = np.atleast_1d(np.asarray(query, dtype=float))
    b = barycentric_weights(x)
    diff = q[:, None] - x[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = b[None, :] / diff
        mat = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        mat[hit] = exact[hit].astype(float)
    return mat


def interpolate(support: np.ndarray, values, query, *, domain=(-1.0, 1.0)):
    """Barycentric Lagrange interpolation of ``values`` (rows) at ``query``.

    Queries outside ``domain`` are still evaluated but an
    :class:`ExtrapolationWarning` is issued.
    """
    q = np.asarray(query, dtype=float)
    lo, hi = domain
    if np.any(q < lo - 1e-14) or np.any(q > hi + 1e-14):
        warnings.warn("interpolant evaluated outside its domain", ExtrapolationWarning, stacklevel=2)
    vals = np.asarray(values, dtype=float)
    out = interpolation_matrix(support, q) @ vals
    return out[0] if q.ndim == 0 else out


def integration_matrix(rule: LgrRule) -> np.ndarray:
    """N x N matrix A with Y[1:] - Y[0] = A @ Ydot at the collocation nodes."""
    d = differentiation_matrix(rule)
    return np.linalg.inv(d[:, 1:])
