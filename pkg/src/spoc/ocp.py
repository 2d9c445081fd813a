"""Declarative Bolza optimal control problems.

Callbacks share one calling convention: ``f(y, u, t, params)`` where ``y`` is
an (npts, n_y) array, ``u`` is (npts, n_u) and ``t`` is (npts,).  They must be
written with numpy ufuncs and column indexing only, so the same function can
be evaluated on floats and traced on casadi symbols by the transcription.
Vector-valued callbacks return a sequence of columns.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

Callback = Callable[..., Any]


class ConstraintKind(str, enum.Enum):
    STATE = "state"
    MIXED = "mixed"
    CONTROL = "control"


class DerivativeInconsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class PathConstraint:
    """One scalar inequality ``lower <= s(y, u, t) <= upper``.

    For state-only constraints ``derivatives[j]`` returns the (j+1)-th time
    derivative of ``s`` with the dynamics substituted; the last one must be
    explicit in a control.
    """

    name: str
    kind: ConstraintKind
    evaluate: Callback
    lower: float = -np.inf
    upper: float = np.inf
    order: int = 0
    derivatives: tuple[Callback, ...] = ()
    detection_tol: float = 1e-5
    bound_width: float = 0.5
    scale: float = 1.0

    @property
    def enforced(self) -> bool:
        return np.isfinite(self.lower) or np.isfinite(self.upper)

    def bound(self, which: str) -> float:
        return self.upper if which == "upper" else self.lower


@dataclass(frozen=True)
class Scaling:
    """Affine map ``physical = scale * scaled + shift`` for every variable group."""

    state_scale: np.ndarray
    state_shift: np.ndarray
    control_scale: np.ndarray
    control_shift: np.ndarray
    time_scale: float = 1.0
    time_shift: float = 0.0

    @classmethod
    def identity(cls, n_y: int, n_u: int) -> "Scaling":
        return cls(np.ones(n_y), np.zeros(n_y), np.ones(n_u), np.zeros(n_u))

    def scale_state(self, y):
        return (np.asarray(y, dtype=float) - self.state_shift) / self.state_scale

    def unscale_state(self, ys):
        return np.asarray(ys, dtype=float) * self.state_scale + self.state_shift

    def scale_control(self, u):
        return (np.asarray(u, dtype=float) - self.control_shift) / self.control_scale

    def unscale_control(self, us):
        return np.asarray(us, dtype=float) * self.control_scale + self.control_shift

    def scale_time(self, t):
        return (np.asarray(t, dtype=float) - self.time_shift) / self.time_scale

    def unscale_time(self, ts):
        return np.asarray(ts, dtype=float) * self.time_scale + self.time_shift


def _bounds(pair, n):
    lo, hi = pair
    return np.broadcast_to(np.asarray(lo, float), (n,)).copy(), np.broadcast_to(
        np.asarray(hi, float), (n,)
    ).copy()


@dataclass(frozen=True)
class OcpDefinition:
    """Bolza problem: minimise mayer(y0, t0, yf, tf) + integral of lagrange."""

    n_y: int
    n_u: int
    dynamics: Callback
    mayer: Callback
    lagrange: Callback | None = None
    path_constraints: tuple[PathConstraint, ...] = ()
    boundary: Callback | None = None
    boundary_bounds: tuple[Sequence[float], Sequence[float]] = ((), ())
    state_bounds: tuple[Any, Any] = (-np.inf, np.inf)
    control_bounds: tuple[Any, Any] = (-np.inf, np.inf)
    initial_state_bounds: tuple[Any, Any] = (-np.inf, np.inf)
    final_state_bounds: tuple[Any, Any] = (-np.inf, np.inf)
    initial_time_bounds: tuple[float, float] = (0.0, 0.0)
    final_time_bounds: tuple[float, float] = (0.0, np.inf)
    scaling: Scaling | None = None
    params: Any = None
    state_names: tuple[str, ...] = ()
    control_names: tuple[str, ...] = ()
    name: str = "ocp"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.scaling is None:
            object.__setattr__(self, "scaling", Scaling.identity(self.n_y, self.n_u))
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"y{i}" for i in range(self.n_y)))
        if not self.control_names:
            object.__setattr__(self, "control_names", tuple(f"u{i}" for i in range(self.n_u)))

    # bound accessors always return full-length float arrays
    def state_box(self):
        return _bounds(self.state_bounds, self.n_y)

    def control_box(self):
        return _bounds(self.control_bounds, self.n_u)

    def initial_box(self):
        lo, hi = _bounds(self.initial_state_bounds, self.n_y)
        slo, shi = self.state_box()
        return np.maximum(lo, slo), np.minimum(hi, shi)

    def final_box(self):
        lo, hi = _bounds(self.final_state_bounds, self.n_y)
        slo, shi = self.state_box()
        return np.maximum(lo, slo), np.minimum(hi, shi)

    @property
    def state_constraints(self) -> list[int]:
        return [
            i
            for i, c in enumerate(self.path_constraints)
            if c.kind == ConstraintKind.STATE and c.enforced
        ]

    def eval_dynamics(self, y, u, t) -> np.ndarray:
        y, u, t = _as_points(y, u, t, self.n_y, self.n_u)
        cols = self.dynamics(y, u, t, self.params)
        return np.column_stack([np.broadcast_to(c, t.shape) for c in cols])

    def eval_constraint(self, index: int, y, u, t, derivative: int = 0) -> np.ndarray:
        y, u, t = _as_points(y, u, t, self.n_y, self.n_u)
        con = self.path_constraints[index]
        fn = con.evaluate if derivative == 0 else con.derivatives[derivative - 1]
        return np.broadcast_to(np.asarray(fn(y, u, t, self.params), float), t.shape).copy()


def _as_points(y, u, t, n_y, n_u):
    y = np.asarray(y, dtype=float).reshape(-1, n_y)
    u = np.asarray(u, dtype=float).reshape(-1, n_u)
    t = np.broadcast_to(np.asarray(t, dtype=float), (y.shape[0],)).astype(float)
    return y, u, t


def _sample_box(lo, hi, rng, n, fallback=1.0):
    lo = np.where(np.isfinite(lo), lo, -fallback)
    hi = np.where(np.isfinite(hi), hi, fallback)
    return lo + (hi - lo) * rng.random((n, lo.size))


def validate(problem: OcpDefinition) -> list[str]:
    """Return one diagnostic string per violated invariant (empty when valid)."""
    diags: list[str] = []
    groups = {
        "state": problem.state_box(),
        "control": problem.control_box(),
        "initial state": _bounds(problem.initial_state_bounds, problem.n_y),
        "final state": _bounds(problem.final_state_bounds, problem.n_y),
        "initial time": tuple(np.atleast_1d(b) for b in problem.initial_time_bounds),
        "final time": tuple(np.atleast_1d(b) for b in problem.final_time_bounds),
    }
    for label, (lo, hi) in groups.items():
        for k in np.flatnonzero(np.asarray(lo) > np.asarray(hi)):
            diags.append(f"inverted bound on {label} component {k}: {lo[k]} > {hi[k]}")
    blo, bhi = problem.boundary_bounds
    if len(blo) != len(bhi):
        diags.append("boundary bound vectors differ in length")
    for k, (lo, hi) in enumerate(zip(blo, bhi)):
        if lo > hi:
            diags.append(f"inverted bound on boundary row {k}: {lo} > {hi}")
    names = [c.name for c in problem.path_constraints]
    if len(set(names)) != len(names):
        diags.append("duplicate path constraint names")
    for c in problem.path_constraints:
        if c.lower > c.upper:
            diags.append(f"inverted bound on path constraint {c.name!r}")
        if c.kind == ConstraintKind.STATE:
            if c.order < 1:
                diags.append(f"state constraint {c.name!r} needs a positive order")
            elif not c.derivatives:
                diags.append(f"missing index-reduction derivatives for {c.name!r}")
            elif len(c.derivatives) != c.order:
                diags.append(
                    f"derivative-order mismatch for {c.name!r}: order {c.order}, "
                    f"{len(c.derivatives)} callbacks"
                )
            if c.detection_tol <= 0 or c.bound_width <= 0:
                diags.append(f"non-positive detection parameters for {c.name!r}")
        elif c.derivatives:
            diags.append(f"{c.kind.value} constraint {c.name!r} must not carry derivatives")
    if not diags:
        diags.extend(_control_sensitivity_diagnostics(problem))
    return diags


def _control_sensitivity_diagnostics(problem, samples=8, seed=7):
    if problem.n_u == 0:
        return []
    rng = np.random.default_rng(seed)
    slo, shi = problem.state_box()
    clo, chi = problem.control_box()
    y = _sample_box(slo, shi, rng, samples)
    u = _sample_box(clo, chi, rng, samples)
    t = np.zeros(samples)
    out = []
    for i, c in enumerate(problem.path_constraints):
        if c.kind != ConstraintKind.STATE or not c.derivatives:
            continue
        with np.errstate(all="ignore"):
            base = problem.eval_constraint(i, y, u, t, c.order)
            sens = np.zeros(samples)
            for j in range(problem.n_u):
                du = np.zeros_like(u)
                du[:, j] = 1e-6 * (1.0 + np.abs(u[:, j]))
                sens += np.abs(problem.eval_constraint(i, y, u + du, t, c.order) - base)
        if not np.any(np.nan_to_num(sens) > 0):
            out.append(f"highest derivative of {c.name!r} shows no control sensitivity")
    return out


def derivative_consistency_check(
    problem: OcpDefinition,
    sample_count: int = 100,
    *,
    seed: int = 0,
    tolerance: float = 1e-4,
    samples=None,
) -> dict[str, float]:
    """Compare analytic constraint derivatives with finite differences along the flow.

    Returns the worst relative mismatch per state constraint and raises
    :class:`DerivativeInconsistencyError` when one exceeds ``tolerance``.
    """
    if samples is None:
        rng = np.random.default_rng(seed)
        slo, shi = problem.state_box()
        clo, chi = problem.control_box()
        y = _sample_box(slo, shi, rng, sample_count)
        u = _sample_box(clo, chi, rng, sample_count)
        t = np.zeros(sample_count)
    else:
        y, u, t = _as_points(*samples, problem.n_y, problem.n_u)
    sc = problem.scaling
    f = problem.eval_dynamics(y, u, t)
    # step so that the largest scaled state change is about eps**(1/3)
    rate = np.max(np.abs(f / sc.state_scale), axis=1)
    h = np.cbrt(np.finfo(float).eps) / np.maximum(rate, 1e-12)
    h = h[:, None]
    worst: dict[str, float] = {}
    for i, c in enumerate(problem.path_constraints):
        if c.kind != ConstraintKind.STATE:
            continue
        mismatch = 0.0
        for j in range(1, len(c.derivatives) + 1):
            fwd = problem.eval_constraint(i, y + h * f, u, t + h[:, 0], j - 1)
            bwd = problem.eval_constraint(i, y - h * f, u, t - h[:, 0], j - 1)
            fd = (fwd - bwd) / (2.0 * h[:, 0])
            analytic = problem.eval_constraint(i, y, u, t, j)
            rel = np.abs(analytic - fd) / (1.0 + np.abs(fd))
            mismatch = max(mismatch, float(np.max(rel)))
        worst[c.name] = mismatch
        if mismatch > tolerance:
            raise DerivativeInconsistencyError(
                f"time derivative of {c.name!r} disagrees with the flow (mismatch {mismatch:.3g})"
            )
    return worst
