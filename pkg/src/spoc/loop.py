"""The outer loop: solve, estimate error, detect arcs, decompose, refine, repeat."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .backends import OPTIMAL, NlpSolveOptions, solve
from .detection import ArcReport, IterationRecord, decompose, detect_arcs
from .mesh import ErrorEstimate, estimate_error, physical_mesh, refine
from .ocp import OcpDefinition
from .solution import TrajectorySolution
from .transcription import DomainLayout, transcribe

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpocTolerances:
    mesh: float = 1e-7
    constraint: float = 1e-7
    #: new arcs are only decomposed once the mesh error is below this; on
    #: coarser iterates they are logged and the mesh is refined instead
    decompose_error: float = 1e-4


def pinned_interfaces(layout: DomainLayout, times, rel: float = 1e-6) -> list[int]:
    """Interior interfaces whose optimized time sits on its window bound."""
    out = []
    for d in range(1, len(layout.times) - 1):
        lo, hi = layout.time_bounds[d]
        width = max(hi - lo, 1e-12)
        t = times[d]
        if (np.isfinite(lo) and t - lo <= rel * width) or (np.isfinite(hi) and hi - t <= rel * width):
            out.append(d)
    return out


def _arc_snapshot(report: ArcReport):
    arcs, touches = {}, {}
    for name, items in report.arcs.items():
        arcs[name] = [(a.entry, a.exit) for a in items if not a.touch]
        touches[name] = [a.entry for a in items if a.touch]
    return arcs, touches


def solve_spoc(problem: OcpDefinition, layout: DomainLayout, guess, *,
               tolerances: SpocTolerances = SpocTolerances(),
               max_iterations: int = 10,
               options: NlpSolveOptions = NlpSolveOptions(),
               backend: str | None = None,
               on_iteration=None) -> TrajectorySolution:
    """Run the SPOC loop from ``layout`` and ``guess``.

    Every iteration transcribes the current layout, solves the NLP,
    estimates the mesh error and re-detects the arc structure over the whole
    trajectory.  The loop stops when the mesh error and dense-sample
    constraint violation are both within tolerance, no new arc appeared and
    no interface time is held by its window; otherwise the mesh is refined
    inside each domain and the layout is rebuilt from the detected arcs.

    ``on_iteration`` is called with every :class:`IterationRecord` as it is
    produced.  An NLP failure stops the loop and returns the last good
    solution flagged not converged.
    """
    history = ArcReport()
    best: TrajectorySolution | None = None
    for it in range(max_iterations + 1):
        start = time.perf_counter()
        nlp = transcribe(problem, layout, guess)
        opts = options if it == 0 else _warm(options)
        res = solve(nlp, opts, backend=backend)
        if res.status != OPTIMAL:
            log.warning("iteration %d: NLP %s (%s)", it, res.status, res.message)
            history.iterations.append(IterationRecord(
                it, np.nan, np.nan, {}, {}, res.status, res.objective,
                time.perf_counter() - start, nlp.n_points, len(layout.domains)))
            if on_iteration:
                on_iteration(history.iterations[-1])
            if best is None:
                best = nlp.solution(res.x, status=res.status)
            best.status = res.status
            best.converged = False
            best.arc_report = history
            best.iteration_log = history.iterations
            return best
        sol = nlp.solution(res.x, status=res.status)
        sol.objective = res.objective
        est = estimate_error(sol, problem)
        report = detect_arcs(sol, problem)
        pinned = pinned_interfaces(layout, sol.interface_times)
        arcs, touches = _arc_snapshot(report)
        rec = IterationRecord(
            iteration=it, e_max=est.e_max, violation=est.max_violation, arcs=arcs,
            touch_points=touches, status=res.status, objective=res.objective,
            wall_time=time.perf_counter() - start, n_points=nlp.n_points,
            n_domains=len(layout.domains), new_arcs=len(report.new_arcs), pinned=len(pinned),
        )
        history.iterations.append(rec)
        history.arcs = report.arcs
        log.info("iteration %d: e_max %.3e, violation %.3e, %d domains, %d new arcs, %d pinned",
                 it, rec.e_max, rec.violation, rec.n_domains, rec.new_arcs, rec.pinned)
        if on_iteration:
            on_iteration(rec)
        sol.mesh_error = est.e_max
        sol.arc_report = history
        sol.iteration_log = history.iterations
        best = sol
        done = (est.e_max <= tolerances.mesh and est.max_violation <= tolerances.constraint
                and not report.new_arcs and not pinned)
        if done:
            sol.converged = True
            return sol
        if it == max_iterations:
            break
        layout = next_layout(layout, sol, est, report, tolerances)
        guess = sol
    best.converged = False
    return best


def next_layout(layout: DomainLayout, sol: TrajectorySolution, est: ErrorEstimate,
                report: ArcReport, tolerances: SpocTolerances) -> DomainLayout:
    """Refine within domains, then rebuild the domains from the detected arcs."""
    refined = refine(layout, est, tolerances.mesh, tolerances.constraint)
    mesh = physical_mesh(refined, sol.interface_times)
    if est.e_max > tolerances.decompose_error:
        report = ArcReport({name: [a for a in arcs if a.existing]
                            for name, arcs in report.arcs.items()})
    return decompose(mesh, report, sol.t0, sol.tf)


def _warm(options: NlpSolveOptions) -> NlpSolveOptions:
    extra = {"mu_init": 1e-4, "bound_push": 1e-6, "bound_frac": 1e-6}
    extra.update(options.extra)
    return NlpSolveOptions(options.tolerance, options.max_iterations, options.print_level,
                           options.warm_start, extra)
