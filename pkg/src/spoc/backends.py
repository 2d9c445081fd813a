"""Solver contract for sparse NLPs and the available backends.

``ipopt`` hands the traced problem to IPOPT through casadi with exact first
and second derivatives.  ``slsqp`` is a small dense fallback that only uses
function values (finite-difference gradients and Jacobians) and is meant
for tiny problems and cross-checks.
"""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

log = logging.getLogger(__name__)

BACKEND_ENV = "SPOC_NLP_BACKEND"
OPTIMAL, MAX_ITER, INFEASIBLE, FAILED = "optimal", "max-iter", "infeasible", "failed"


@dataclass(frozen=True)
class NlpSolveOptions:
    tolerance: float = 1e-8
    max_iterations: int = 3000
    print_level: int = 0
    warm_start: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class NlpResult:
    status: str
    x: np.ndarray
    objective: float
    violation: float
    iterations: int
    wall_time: float
    multipliers: dict | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _start_is_finite(nlp, x0) -> bool:
    return not nlp.evaluate(x0).poisoned


def solve_ipopt(nlp, options: NlpSolveOptions = NlpSolveOptions(), *, x0=None,
                multipliers=None) -> NlpResult:
    x0 = nlp.x0 if x0 is None else np.asarray(x0, float)
    start = time.perf_counter()
    if not _start_is_finite(nlp, x0):
        return NlpResult(FAILED, x0, np.nan, np.inf, 0, 0.0, message="non-finite initial point")
    opts = {
        "ipopt.tol": options.tolerance,
        "ipopt.constr_viol_tol": options.tolerance,
        "ipopt.max_iter": options.max_iterations,
        "ipopt.print_level": options.print_level,
        "ipopt.sb": "yes",
        "ipopt.mu_strategy": "adaptive",
        "print_time": False,
    }
    if options.warm_start and multipliers is not None:
        opts.update({
            "ipopt.warm_start_init_point": "yes",
            "ipopt.warm_start_bound_push": 1e-9,
            "ipopt.warm_start_mult_bound_push": 1e-9,
            "ipopt.mu_init": 1e-6,
        })
    opts.update({f"ipopt.{k}" if "." not in k else k: v for k, v in options.extra.items()})
    solver = ca.nlpsol("spoc", "ipopt", {"x": nlp.x, "f": nlp.f_expr, "g": nlp.g_expr}, opts)
    args = dict(x0=x0, lbx=nlp.lbx, ubx=nlp.ubx, lbg=nlp.lbg, ubg=nlp.ubg)
    if options.warm_start and multipliers is not None:
        args["lam_x0"] = multipliers["x"]
        args["lam_g0"] = multipliers["g"]
    out = solver(**args)
    stats = solver.stats()
    x = np.asarray(out["x"], float).ravel()
    ret = stats.get("return_status", "")
    viol = nlp.violation(x)
    if ret == "Solve_Succeeded":
        status = OPTIMAL
    elif ret == "Solved_To_Acceptable_Level":
        status = OPTIMAL if viol <= 10 * options.tolerance else FAILED
    elif ret == "Maximum_Iterations_Exceeded":
        status = MAX_ITER
    elif ret in ("Infeasible_Problem_Detected", "Restoration_Failed") and viol > 1e-6:
        status = INFEASIBLE
    else:
        status = FAILED
    return NlpResult(
        status=status, x=x, objective=float(out["f"]), violation=viol,
        iterations=int(stats.get("iter_count", 0)),
        wall_time=time.perf_counter() - start,
        multipliers={"x": np.asarray(out["lam_x"]).ravel(), "g": np.asarray(out["lam_g"]).ravel()},
        message=ret,
    )


def solve_slsqp(nlp, options: NlpSolveOptions = NlpSolveOptions(), *, x0=None,
                multipliers=None) -> NlpResult:
    from scipy.optimize import minimize

    x0 = nlp.x0 if x0 is None else np.asarray(x0, float)
    start = time.perf_counter()
    if not _start_is_finite(nlp, x0):
        return NlpResult(FAILED, x0, np.nan, np.inf, 0, 0.0, message="non-finite initial point")
    eq = np.flatnonzero(nlp.lbg == nlp.ubg)
    lo = np.flatnonzero((nlp.lbg != nlp.ubg) & np.isfinite(nlp.lbg))
    hi = np.flatnonzero((nlp.lbg != nlp.ubg) & np.isfinite(nlp.ubg))
    cons = []
    g = lambda x: nlp.evaluate(x).residuals  # noqa: E731
    jac = lambda x: nlp.fd_jacobian(x).toarray()  # noqa: E731
    if eq.size:
        cons.append({"type": "eq", "fun": lambda x: g(x)[eq] - nlp.lbg[eq],
                     "jac": lambda x: jac(x)[eq]})
    if lo.size:
        cons.append({"type": "ineq", "fun": lambda x: g(x)[lo] - nlp.lbg[lo],
                     "jac": lambda x: jac(x)[lo]})
    if hi.size:
        cons.append({"type": "ineq", "fun": lambda x: nlp.ubg[hi] - g(x)[hi],
                     "jac": lambda x: -jac(x)[hi]})
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in zip(nlp.lbx, nlp.ubx)]
    res = minimize(
        lambda x: nlp.evaluate(x).objective, np.clip(x0, nlp.lbx, nlp.ubx),
        jac=nlp.fd_gradient, bounds=bounds, constraints=cons, method="SLSQP",
        options={"ftol": options.tolerance * 1e-4, "maxiter": options.max_iterations,
                 "disp": options.print_level > 0},
    )
    x = np.asarray(res.x, float)
    viol = nlp.violation(x)
    if res.status == 0 and viol <= max(options.tolerance, 1e-8):
        status = OPTIMAL
    elif res.status == 9:
        status = MAX_ITER
    elif viol > 1e-6 and res.status in (4, 8):
        status = INFEASIBLE
    else:
        status = FAILED
    return NlpResult(status, x, float(res.fun), viol, int(res.nit),
                     time.perf_counter() - start, None, str(res.message))


BACKENDS = {"ipopt": solve_ipopt, "slsqp": solve_slsqp}


def solve(nlp, options: NlpSolveOptions = NlpSolveOptions(), *, backend: str | None = None,
          x0=None, multipliers=None) -> NlpResult:
    """Solve ``nlp`` with the named backend (default from $SPOC_NLP_BACKEND or ipopt)."""
    name = backend or os.environ.get(BACKEND_ENV, "ipopt")
    try:
        fn = BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown NLP backend {name!r}; choose from {sorted(BACKENDS)}") from None
    result = fn(nlp, options, x0=x0, multipliers=multipliers)
    log.info("nlp %s: %s after %d iterations (%.2fs), violation %.2e",
             name, result.status, result.iterations, result.wall_time, result.violation)
    return result
