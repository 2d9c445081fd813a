"""Files written by a run: trajectory CSV, arc report, summary and solution JSON."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .rlve import DEG, VehicleParams, derived_quantities, path_constraint_values
from .solution import DomainSolution, TrajectorySolution

TRAJECTORY_COLUMNS = (
    "t_s", "h_m", "theta_deg", "phi_deg", "v_m_s", "gamma_deg", "psi_deg",
    "alpha_deg", "sigma_deg", "qdot_W_m2", "q_Pa", "n", "domain",
)


def trajectory_rows(solution: TrajectorySolution, params: VehicleParams) -> np.ndarray:
    """One row per support point (shared interface points once).

    Controls at collocation points are the decision values; the final point
    carries the final interval's extrapolated control.
    """
    t, y, dom, is_col = solution.samples()
    u = np.empty((t.size, solution.domains[0].controls.shape[1]))
    u[is_col] = solution.collocation_controls()
    if (~is_col).any():
        u[~is_col] = solution.domains[-1].sample(t[~is_col])[1]
    cons = path_constraint_values(y, u, params)
    rows = np.column_stack([
        t, y[:, 0] - params.R_e, y[:, 1] / DEG, y[:, 2] / DEG, y[:, 3],
        y[:, 4] / DEG, y[:, 5] / DEG, u[:, 0] / DEG, u[:, 1] / DEG,
        cons[:, 0], cons[:, 1], cons[:, 2], dom,
    ])
    return rows


def write_trajectory_csv(path, solution: TrajectorySolution, params: VehicleParams) -> None:
    rows = trajectory_rows(solution, params)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            w.writerow([repr(float(v)) for v in r[:-1]] + [int(r[-1])])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(header)}


def summary(solution: TrajectorySolution, params: VehicleParams, study: str = "") -> dict:
    """Objective, derived quantities and final arc times (no timing data)."""
    out = {"study": study, "converged": bool(solution.converged), "status": solution.status}
    derived = derived_quantities(solution, params)
    out["objective_deg"] = derived["crossrange_deg"]
    out.update(derived)
    rep = solution.arc_report
    arcs = {}
    if rep is not None:
        for name, items in rep.arcs.items():
            arcs[name] = [[a.entry, a.exit] for a in items if not a.touch]
    out["arcs"] = arcs
    out["arc_counts"] = {k: len(v) for k, v in arcs.items()}
    log = solution.iteration_log or []
    out["mesh_error"] = float(solution.mesh_error)
    out["constraint_violation"] = float(log[-1].violation) if log else float("nan")
    out["mesh_iterations"] = len(log)
    out["domains"] = len(solution.domains)
    return out


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def solution_to_dict(solution: TrajectorySolution) -> dict:
    return {
        "objective": solution.objective,
        "status": solution.status,
        "converged": solution.converged,
        "mesh_error": solution.mesh_error,
        "domains": [
            {
                "t_start": d.t_start, "t_end": d.t_end, "breaks": d.breaks.tolist(),
                "degrees": d.degrees.tolist(), "states": d.states.tolist(),
                "controls": d.controls.tolist(), "active": [list(a) for a in d.active],
            }
            for d in solution.domains
        ],
    }


def solution_from_dict(data: dict) -> TrajectorySolution:
    doms = [
        DomainSolution(
            float(d["t_start"]), float(d["t_end"]), np.asarray(d["breaks"], float),
            np.asarray(d["degrees"], int), np.asarray(d["states"], float),
            np.asarray(d["controls"], float), tuple((int(i), str(w)) for i, w in d["active"]),
        )
        for d in data["domains"]
    ]
    return TrajectorySolution(
        doms, objective=float(data.get("objective", np.nan)), status=data.get("status", "loaded"),
        converged=bool(data.get("converged", False)),
        mesh_error=float(data.get("mesh_error", np.nan)),
    )


def save_solution(path, solution: TrajectorySolution) -> None:
    write_json(path, solution_to_dict(solution))


def load_solution(path) -> TrajectorySolution:
    return solution_from_dict(json.loads(Path(path).read_text()))


def flatten(data, prefix: str = "") -> dict:
    """Dotted-key view of nested dicts/lists, used by the summary comparison."""
    out = {}
    if isinstance(data, dict):
        for k, v in data.items():
            out.update(flatten(v, f"{prefix}{k}."))
    elif isinstance(data, list):
        for i, v in enumerate(data):
            out.update(flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = data
    return out


def compare_summaries(a: dict, b: dict, tolerances: dict[str, float] | None = None,
                      default_tol: float = 0.0) -> list[str]:
    """Differences between two summaries, one message per offending field.

    ``tolerances`` maps a field name, or a dotted prefix such as ``arcs``, to
    an absolute tolerance; the longest matching prefix wins.  Raises
    ``KeyError`` when the two summaries do not have the same fields.
    """
    tolerances = tolerances or {}
    fa, fb = flatten(a), flatten(b)
    if fa.keys() != fb.keys():
        missing = sorted(fa.keys() ^ fb.keys())
        raise KeyError(f"summary fields differ: {', '.join(missing)}")
    diffs = []
    for key in sorted(fa):
        va, vb = fa[key], fb[key]
        if isinstance(va, bool) or isinstance(vb, bool) or not (
                isinstance(va, (int, float)) and isinstance(vb, (int, float))):
            if va != vb:
                diffs.append(f"{key}: {va!r} != {vb!r}")
            continue
        tol = _tolerance_for(key, tolerances, default_tol)
        if np.isnan(va) and np.isnan(vb):
            continue
        if not abs(va - vb) <= tol:
            diffs.append(f"{key}: {va!r} vs {vb!r} differ by {abs(va - vb):.6g} > {tol:g}")
    return diffs


def _tolerance_for(key, tolerances, default):
    best, best_len = default, -1
    for name, tol in tolerances.items():
        if (key == name or key.startswith(name + ".")) and len(name) > best_len:
            best, best_len = tol, len(name)
    return best
