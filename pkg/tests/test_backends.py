import casadi as ca
import numpy as np
import pytest
import scipy.sparse as sp

from spoc.backends import BACKEND_ENV, FAILED, OPTIMAL, NlpSolveOptions, solve
from spoc.transcription import DomainLayout, Evaluation, transcribe


class SmallNlp:
    """Minimal dense NLP exposing the same interface as a transcribed problem."""

    def __init__(self, n, f, g=None, lbx=None, ubx=None, lbg=(), ubg=(), x0=None):
        self.x = ca.SX.sym("x", n)
        self.f_expr = f(self.x)
        self.g_expr = ca.vertcat(*g(self.x)) if g else ca.SX(0, 1)
        inf = np.full(n, np.inf)
        self.lbx = -inf if lbx is None else np.asarray(lbx, float)
        self.ubx = inf if ubx is None else np.asarray(ubx, float)
        self.lbg, self.ubg = np.asarray(lbg, float), np.asarray(ubg, float)
        self.x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
        self._fg = ca.Function("fg", [self.x], [self.f_expr, self.g_expr])
        self._jac = ca.Function("j", [self.x], [ca.jacobian(self.g_expr, self.x)])
        self._grad = ca.Function("d", [self.x], [ca.gradient(self.f_expr, self.x)])

    def evaluate(self, x):
        f, g = self._fg(np.asarray(x, float))
        f, g = float(f), np.asarray(g, float).ravel()
        return Evaluation(f, g, not (np.isfinite(f) and np.all(np.isfinite(g))))

    def violation(self, x):
        g = self.evaluate(x).residuals
        gv = np.maximum(self.lbg - g, 0) + np.maximum(g - self.ubg, 0)
        xv = np.maximum(self.lbx - x, 0) + np.maximum(x - self.ubx, 0)
        return float(max(gv.max(initial=0.0), xv.max(initial=0.0)))

    def fd_jacobian(self, x):
        return sp.csr_matrix(np.asarray(self._jac(x)))

    def fd_gradient(self, x):
        return np.asarray(self._grad(x)).ravel()


def square_with_bound():
    return SmallNlp(1, lambda x: x[0] ** 2, lbx=[1.0], x0=[3.0])


def rosenbrock():
    return SmallNlp(2, lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2, x0=[-1.2, 1.0])


def equality_qp():
    # min sum x^2 subject to sum x = 1: every x_i = 0.2
    return SmallNlp(5, lambda x: ca.sumsqr(x), g=lambda x: [ca.sum1(x)], lbg=[1.0], ubg=[1.0])


PROBLEMS = [
    (square_with_bound, [1.0], 1.0),
    (rosenbrock, [1.0, 1.0], 0.0),
    (equality_qp, [0.2] * 5, 0.2),
]


@pytest.mark.parametrize("backend", ["ipopt", "slsqp"])
@pytest.mark.parametrize("make, x_star, f_star", PROBLEMS)
def test_regression_problems(backend, make, x_star, f_star):
    res = solve(make(), NlpSolveOptions(tolerance=1e-10), backend=backend)
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, x_star, atol=1e-5)
    assert res.objective == pytest.approx(f_star, abs=1e-8)
    assert res.violation <= 1e-8


def test_non_finite_start_fails_cleanly():
    nlp = SmallNlp(1, lambda x: ca.log(x[0]), x0=[-1.0])
    for backend in ("ipopt", "slsqp"):
        res = solve(nlp, backend=backend)
        assert res.status == FAILED
        assert "non-finite" in res.message


def test_unknown_backend():
    with pytest.raises(ValueError, match="unknown NLP backend"):
        solve(square_with_bound(), backend="nope")


def test_environment_selects_backend(monkeypatch):
    monkeypatch.setenv(BACKEND_ENV, "slsqp")
    res = solve(rosenbrock(), NlpSolveOptions(tolerance=1e-10))
    assert res.multipliers is None  # only the ipopt backend reports multipliers
    monkeypatch.setenv(BACKEND_ENV, "ipopt")
    assert solve(rosenbrock(), NlpSolveOptions(tolerance=1e-10)).multipliers is not None


def test_backends_agree_on_double_integrator(di_problem, di_exact):
    nlp = transcribe(di_problem, DomainLayout.single(0.0, 1.0, 2, 4), di_exact)
    start = nlp.x0 + 0.05
    a = solve(nlp, NlpSolveOptions(tolerance=1e-10), backend="ipopt", x0=start)
    b = solve(nlp, NlpSolveOptions(tolerance=1e-10), backend="slsqp", x0=start)
    assert a.ok and b.ok
    assert a.objective == pytest.approx(6.0, abs=1e-7)
    assert b.objective == pytest.approx(a.objective, abs=1e-6)
    np.testing.assert_allclose(a.x, b.x, atol=1e-4)


def test_warm_start_is_not_slower(di_problem, di_exact):
    nlp = transcribe(di_problem, DomainLayout.single(0.0, 1.0, 3, 4), di_exact)
    start = nlp.x0 + 0.3
    cold = solve(nlp, NlpSolveOptions(tolerance=1e-10), x0=start)
    warm = solve(nlp, NlpSolveOptions(tolerance=1e-10, warm_start=True),
                 x0=cold.x, multipliers=cold.multipliers)
    assert warm.ok
    assert warm.iterations <= 2 * cold.iterations
    assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_options_validated():
    with pytest.raises(ValueError):
        NlpSolveOptions(tolerance=0.0)
