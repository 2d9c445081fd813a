"""Collocation error estimation and mesh refinement."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lgr import MAX_DEGREE, integration_matrix, interpolation_matrix, lgr_points
from .ocp import ConstraintKind, OcpDefinition
from .solution import TrajectorySolution, control_interpolant
from .transcription import Domain, DomainLayout

DENSE_EXTRA = 10
MIN_DEGREE = 3
MAX_REFINE_DEGREE = 10


@dataclass
class IntervalError:
    domain: int
    interval: int
    t_start: float
    t_end: float
    degree: int
    error: float
    violation: float = 0.0  # worst relative state-constraint violation on the dense grid


@dataclass
class ErrorEstimate:
    intervals: list[IntervalError]
    constraint_violation: dict[str, float] = field(default_factory=dict)
    arc_deviation: dict[str, float] = field(default_factory=dict)

    @property
    def e_max(self) -> float:
        return max((iv.error for iv in self.intervals), default=0.0)

    @property
    def max_violation(self) -> float:
        vals = list(self.constraint_violation.values()) + list(self.arc_deviation.values())
        return max(vals, default=0.0)

    def for_domain(self, d: int) -> list[IntervalError]:
        return [iv for iv in self.intervals if iv.domain == d]

    def coalesce_candidates(self, mesh_tol: float) -> list[IntervalError]:
        return [iv for iv in self.intervals
                if iv.error <= mesh_tol / 10 and iv.degree <= MIN_DEGREE]


def estimate_error(solution: TrajectorySolution, problem: OcpDefinition,
                   extra: int = DENSE_EXTRA) -> ErrorEstimate:
    """Relative state error of every interval against a dense re-integration.

    On each interval the state polynomial and control interpolant are sampled
    on an (N+extra)-point LGR grid, the dynamics are integrated with that
    grid's quadrature from the interval's first value, and the largest
    difference, normalised per state by 1 + max |Y_i| on the interval, is the
    interval error.  State-only path constraints are also sampled on the
    dense grid: inequality violations everywhere and |s - bound| on domains
    where the constraint is held active.
    """
    intervals: list[IntervalError] = []
    state_cons = problem.state_constraints
    violation = {problem.path_constraints[i].name: 0.0 for i in state_cons}
    deviation: dict[str, float] = {}
    for d, dom in enumerate(solution.domains):
        half_domain = 0.5 * (dom.t_end - dom.t_start)
        active = dict(dom.active)
        for k, ssl, csl, rule in dom.intervals():
            y_sup = dom.states[ssl]
            u_col = dom.controls[csl]
            n = rule.degree
            dense = lgr_points(min(n + extra, MAX_DEGREE)).mapped(rule.interval[0], rule.interval[1])
            tau = dense.support
            y_dense = interpolation_matrix(rule.support, tau) @ y_sup
            u_dense = control_interpolant(rule, u_col, tau)
            t_dense = dom.to_time(tau)
            with np.errstate(all="ignore"):
                f = problem.eval_dynamics(y_dense[:-1], u_dense[:-1], t_dense[:-1])
            h = half_domain * 0.5 * (rule.interval[1] - rule.interval[0])
            # integration matrix of the dense rule on its reference interval
            a = integration_matrix(lgr_points(dense.degree))
            y_int = y_dense[0] + h * (a @ f)
            denom = 1.0 + np.max(np.abs(y_sup), axis=0)
            err = np.abs(y_int - y_dense[1:]) / denom
            e = float(np.max(err)) if np.all(np.isfinite(err)) else np.inf
            worst = 0.0
            for i in state_cons:
                con = problem.path_constraints[i]
                with np.errstate(all="ignore"):
                    s = problem.eval_constraint(i, y_dense, u_dense, t_dense)
                if i in active:
                    b = con.bound(active[i])
                    dev = float(np.max(np.abs(s - b)) / (1.0 + abs(b)))
                    deviation[con.name] = max(deviation.get(con.name, 0.0), dev)
                    worst = max(worst, dev)
                    continue
                v = 0.0
                if np.isfinite(con.upper):
                    v = max(v, float(np.max(s - con.upper)) / (1.0 + abs(con.upper)))
                if np.isfinite(con.lower):
                    v = max(v, float(np.max(con.lower - s)) / (1.0 + abs(con.lower)))
                v = max(v, 0.0)
                violation[con.name] = max(violation[con.name], v)
                worst = max(worst, v)
            intervals.append(IntervalError(
                d, k, float(dom.to_time(rule.interval[0])), float(dom.to_time(rule.interval[1])),
                n, e, worst,
            ))
    return ErrorEstimate(intervals, violation, deviation)


def refined_degree(degree: int, error: float, mesh_tol: float) -> int:
    """Degree after a p-increase of ceil(log(e/tol)/log N)."""
    if error <= mesh_tol:
        return degree
    base = max(degree, 2)
    return degree + max(1, math.ceil(math.log(error / mesh_tol) / math.log(base)))


def refine(layout: DomainLayout, estimate: ErrorEstimate, mesh_tol: float,
           violation_tol: float | None = None, *, max_degree: int = MAX_REFINE_DEGREE,
           min_degree: int = MIN_DEGREE) -> DomainLayout:
    """Raise degrees or split intervals whose error exceeds ``mesh_tol``.

    An interval over tolerance gets its degree raised by
    ceil(log(e/tol)/log N); if that would pass ``max_degree`` it is split into
    ceil(N_new/min_degree) equal pieces of ``min_degree`` points.  Intervals
    whose dense-grid constraint violation exceeds ``violation_tol`` are
    treated the same way with the violation ratio.  Domain boundaries are
    untouched.
    """
    violation_tol = mesh_tol if violation_tol is None else violation_tol
    new_domains = []
    for d, dom in enumerate(layout.domains):
        errs = {iv.interval: iv for iv in estimate.for_domain(d)}
        breaks = [dom.breaks[0]]
        degrees = []
        for k, n in enumerate(dom.degrees):
            n = int(n)
            a, b = dom.breaks[k], dom.breaks[k + 1]
            iv = errs.get(k)
            target = n
            if iv is not None:
                target = refined_degree(n, iv.error, mesh_tol)
                if iv.violation > violation_tol:
                    target = max(target, refined_degree(n, iv.violation / violation_tol, 1.0))
            if target == n:
                breaks.append(b)
                degrees.append(n)
            elif target <= max_degree:
                breaks.append(b)
                degrees.append(target)
            else:
                pieces = max(2, math.ceil(target / min_degree))
                breaks.extend(np.linspace(a, b, pieces + 1)[1:])
                degrees.extend([min_degree] * pieces)
        breaks = np.array(breaks)
        breaks[0], breaks[-1] = -1.0, 1.0
        new_domains.append(Domain(breaks, np.array(degrees), dom.active, dom.tangency_at_entry))
    return DomainLayout(new_domains, layout.times.copy(), layout.time_bounds.copy())


@dataclass
class PhysicalInterval:
    t_start: float
    t_end: float
    degree: int


def physical_mesh(layout: DomainLayout, times=None) -> list[PhysicalInterval]:
    """Mesh intervals of every domain mapped to physical time."""
    times = layout.times if times is None else np.asarray(times, float)
    out = []
    for d, dom in enumerate(layout.domains):
        t0, t1 = times[d], times[d + 1]
        pts = t0 + 0.5 * (t1 - t0) * (dom.breaks + 1.0)
        for k, n in enumerate(dom.degrees):
            out.append(PhysicalInterval(float(pts[k]), float(pts[k + 1]), int(n)))
    return out
