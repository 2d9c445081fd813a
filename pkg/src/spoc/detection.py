"""Activation structure of state-path constraints on a solved trajectory.

A sample is *active* for a constraint bound when its relative distance to the
bound, |s - s_bound| / (1 + |s_bound|), is within the constraint's detection
tolerance.  Maximal runs of active samples are arcs; a run of one sample is a
touch point.  :func:`decompose` turns the arcs into a new multiple-domain
layout with a constrained domain per arc and bounded interface times.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .mesh import PhysicalInterval
from .ocp import OcpDefinition
from .solution import TrajectorySolution
from .transcription import MIN_DOMAIN_DURATION, Domain, DomainLayout

#: a sliver smaller than this fraction of its parent interval is absorbed by its neighbour
_SLIVER = 0.05


class UnsupportedStructureError(ValueError):
    """Arcs of two different state constraints overlap in time."""


@dataclass
class Arc:
    constraint: int
    name: str
    which: str  # "upper" or "lower"
    entry: float
    exit: float
    entry_window: tuple[float, float]
    exit_window: tuple[float, float]
    touch: bool = False
    existing: bool = False
    entry_index: int = -1
    exit_index: int = -1

    @property
    def duration(self) -> float:
        return self.exit - self.entry


@dataclass
class IterationRecord:
    iteration: int
    e_max: float
    violation: float
    arcs: dict[str, list[tuple[float, float]]]
    touch_points: dict[str, list[float]]
    status: str
    objective: float
    wall_time: float
    n_points: int
    n_domains: int
    new_arcs: int = 0
    pinned: int = 0


@dataclass
class ArcReport:
    """Arcs per constraint name plus the per-iteration history."""

    arcs: dict[str, list[Arc]] = field(default_factory=dict)
    iterations: list[IterationRecord] = field(default_factory=list)

    def all_arcs(self, include_touch: bool = False) -> list[Arc]:
        out = [a for arcs in self.arcs.values() for a in arcs if include_touch or not a.touch]
        return sorted(out, key=lambda a: a.entry)

    def touch_points(self) -> list[Arc]:
        return [a for arcs in self.arcs.values() for a in arcs if a.touch]

    @property
    def new_arcs(self) -> list[Arc]:
        return [a for a in self.all_arcs() if not a.existing]

    def to_dict(self) -> dict:
        return {
            "arcs": {k: [asdict(a) for a in v] for k, v in self.arcs.items()},
            "iterations": [asdict(r) for r in self.iterations],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def table(self) -> str:
        """Text table: one row per mesh iteration, entry/exit pairs per arc."""
        names = []
        for rec in self.iterations:
            for n in rec.arcs:
                if n not in names:
                    names.append(n)
        lines = []
        head = f"{'M':>3}  {'max mesh error':>14}  {'status':<10}"
        lines.append(head + "  " + "  ".join(f"{n} arcs (entry, exit) [s]" for n in names))
        for rec in self.iterations:
            cells = []
            for n in names:
                arcs = rec.arcs.get(n, [])
                cells.append("; ".join(f"({a:.2f}, {b:.2f})" for a, b in arcs) or "-")
            lines.append(f"{rec.iteration:>3}  {rec.e_max:>14.3e}  {rec.status:<10}  "
                         + "  ".join(cells))
        return "\n".join(lines)


def relative_difference(samples, bound: float) -> np.ndarray:
    """Elementwise |s - bound| / (1 + |bound|)."""
    s = np.asarray(samples, dtype=float)
    return np.abs(s - bound) / (1.0 + abs(bound))


def bound_switch_times(t_j: float, t_prev: float | None, t_next: float | None, nu: float,
                       horizon: tuple[float, float] | None = None) -> tuple[float, float]:
    """Window (lower, upper) around a detected switch time.

    lower = t_j + nu (t_prev - t_j), upper = t_j + nu (t_next - t_j).  A
    missing neighbour clamps that side to the horizon boundary (or to t_j
    when no horizon is given).
    """
    if not nu > 0:
        raise ValueError(f"bound width must be positive, got {nu}")
    lo_clamp, hi_clamp = horizon if horizon is not None else (t_j, t_j)
    lo = lo_clamp if t_prev is None else t_j + nu * (t_prev - t_j)
    hi = hi_clamp if t_next is None else t_j + nu * (t_next - t_j)
    if horizon is not None:
        lo, hi = max(lo, horizon[0]), min(hi, horizon[1])
    return lo, hi


def active_runs(active: np.ndarray, merge_gap: int = 1) -> list[tuple[int, int]]:
    """Maximal (first, last) index runs of True, merging gaps of ``merge_gap`` samples."""
    idx = np.flatnonzero(np.asarray(active, bool))
    runs: list[list[int]] = []
    for i in idx:
        if runs and i - runs[-1][1] <= merge_gap + 1:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return [(a, b) for a, b in runs]


def _window(times, j, nu, horizon):
    prev = times[j - 1] if j > 0 else None
    nxt = times[j + 1] if j + 1 < len(times) else None
    return bound_switch_times(times[j], prev, nxt, nu, horizon)


def _nearest(times, t):
    return int(np.argmin(np.abs(times - t)))


def detect_arcs(solution: TrajectorySolution, problem: OcpDefinition) -> ArcReport:
    """Find activation arcs of every state-only constraint on ``solution``.

    Samples are all collocation points plus the final support point.  An arc
    that overlaps a constrained domain tagged with the same constraint and
    bound is reported as *existing*; its times are the domain's interface
    times, extended if the run of active samples reaches beyond them.
    """
    times, states, dom_idx, _ = solution.samples()
    horizon = (float(times[0]), float(times[-1]))
    zeros_u = np.zeros((times.size, problem.n_u))
    report = ArcReport()
    tagged = {}  # (constraint, which) -> list of (t_start, t_end)
    for dom in solution.domains:
        for i, which in dom.active:
            tagged.setdefault((i, which), []).append((dom.t_start, dom.t_end))

    for i in problem.state_constraints:
        con = problem.path_constraints[i]
        with np.errstate(all="ignore"):
            s = problem.eval_constraint(i, states, zeros_u, times)
        arcs: list[Arc] = []
        for which in ("upper", "lower"):
            b = con.bound(which)
            if not np.isfinite(b):
                continue
            delta = relative_difference(s, b)
            active = np.isfinite(delta) & (delta <= con.detection_tol)
            runs = active_runs(active)
            # constrained domains are active by construction, even if noise
            # pushes one of their samples just past the tolerance
            for a, z in tagged.get((i, which), []):
                inside = (times >= a - 1e-9) & (times <= z + 1e-9)
                runs.append((int(np.flatnonzero(inside)[0]), int(np.flatnonzero(inside)[-1])))
            runs = _union(runs)
            for j0, j1 in runs:
                t_in, t_out = float(times[j0]), float(times[j1])
                existing = False
                for a, z in tagged.get((i, which), []):
                    if t_in <= z + 1e-9 and t_out >= a - 1e-9:
                        existing = True
                        # the domain interfaces are the optimized switch times;
                        # a run reaching past them by a single sample is the
                        # tangential approach, not a longer arc
                        ja, jz = _nearest(times, a), _nearest(times, z)
                        t_in = float(times[j0]) if j0 < ja - 1 else a
                        t_out = float(times[j1]) if j1 > jz + 1 else z
                j0, j1 = _nearest(times, t_in), _nearest(times, t_out)
                touch = j0 == j1 and not existing
                arcs.append(Arc(
                    constraint=i, name=con.name, which=which, entry=t_in, exit=t_out,
                    entry_window=_window(times, j0, con.bound_width, horizon),
                    exit_window=_window(times, j1, con.bound_width, horizon),
                    touch=touch, existing=existing, entry_index=j0, exit_index=j1,
                ))
        arcs.sort(key=lambda a: a.entry)
        report.arcs[con.name] = arcs
    _check_overlap(report)
    return report


def _union(runs):
    out = []
    for a, b in sorted(runs):
        if out and a <= out[-1][1] + 2:  # same one-sample merge rule
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _check_overlap(report: ArcReport) -> None:
    arcs = report.all_arcs()
    for a, b in zip(arcs, arcs[1:]):
        if b.entry < a.exit and a.name != b.name:
            raise UnsupportedStructureError(
                f"arcs of {a.name} [{a.entry:.3f}, {a.exit:.3f}] and {b.name} "
                f"[{b.entry:.3f}, {b.exit:.3f}] overlap"
            )


def _clip_windows(points: list[list]) -> None:
    """Make consecutive interface windows disjoint by splitting overlaps at the midpoint."""
    for left, right in zip(points, points[1:]):
        t_l, (lo_l, hi_l) = left
        t_r, (lo_r, hi_r) = right
        if hi_l > lo_r:
            mid = 0.5 * (t_l + t_r)
            left[1] = (lo_l, min(hi_l, mid))
            right[1] = (max(lo_r, mid), hi_r)


def _restrict_mesh(mesh: list[PhysicalInterval], a: float, b: float, fallback_degree: int):
    """Mesh intervals of ``mesh`` clipped to [a, b], returned as (breaks on [-1,1], degrees)."""
    pts, degs = [a], []
    for iv in mesh:
        lo, hi = max(iv.t_start, a), min(iv.t_end, b)
        if hi <= lo:
            continue
        if hi - lo < _SLIVER * (iv.t_end - iv.t_start) and degs:
            pts[-1] = hi  # absorb the sliver into the previous piece
            continue
        if pts[-1] < lo:
            pts[-1] = lo
        pts.append(hi)
        degs.append(iv.degree)
    if not degs:
        return np.array([-1.0, 1.0]), np.array([fallback_degree])
    pts[0], pts[-1] = a, b
    # trailing sliver: merge into the previous piece
    if len(degs) > 1 and pts[-1] - pts[-2] < _SLIVER * (pts[-2] - pts[-3]):
        del pts[-2]
        degs.pop()
    pts = np.asarray(pts)
    breaks = 2.0 * (pts - a) / (b - a) - 1.0
    breaks[0], breaks[-1] = -1.0, 1.0
    keep = np.concatenate([[True], np.diff(breaks) > 1e-12])
    return breaks[keep], np.asarray(degs)[keep[1:]]


def decompose(mesh: list[PhysicalInterval], report: ArcReport, t0: float, tf: float,
              *, min_degree: int = 4) -> DomainLayout:
    """Layout with a constrained domain for every arc and windows on every interface.

    ``mesh`` is the physical-time mesh to carry over (typically the refined
    mesh of the previous iteration); it is cut at the new interface times.
    Touch points are ignored.
    """
    arcs = report.all_arcs()
    if not arcs:
        breaks, degs = _restrict_mesh(mesh, t0, tf, min_degree)
        return DomainLayout([Domain(breaks, degs)], np.array([t0, tf]))
    cuts: list[list] = []  # [time, window] of every interior interface
    tags: list[tuple] = []
    cur = t0
    for arc in arcs:
        if arc.entry - cur > MIN_DOMAIN_DURATION:
            tags.append(())
            cuts.append([arc.entry, arc.entry_window])
        tags.append(((arc.constraint, arc.which),))
        if tf - arc.exit > MIN_DOMAIN_DURATION:
            cuts.append([arc.exit, arc.exit_window])
            cur = arc.exit
        else:
            cur = tf
    if cur < tf:
        tags.append(())
    _clip_windows(cuts)
    times = np.array([t0] + [c[0] for c in cuts] + [tf])
    bounds = np.array([(-np.inf, np.inf)] + [c[1] for c in cuts] + [(-np.inf, np.inf)], float)
    domains = []
    for d in range(len(times) - 1):
        breaks, degs = _restrict_mesh(mesh, times[d], times[d + 1], min_degree)
        domains.append(Domain(breaks, degs, tags[d]))
    return DomainLayout(domains, times, bounds)
