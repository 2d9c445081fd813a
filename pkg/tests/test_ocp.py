from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spoc.ocp import (
    ConstraintKind,
    DerivativeInconsistencyError,
    PathConstraint,
    Scaling,
    derivative_consistency_check,
    validate,
)
from spoc.rlve import CASE1, build_study


@pytest.fixture(scope="module")
def case1():
    return build_study(CASE1)


def _replace_constraint(problem, name, **kw):
    cons = tuple(replace(c, **kw) if c.name == name else c for c in problem.path_constraints)
    return replace(problem, path_constraints=cons)


def test_case1_is_valid(case1):
    assert validate(case1) == []


def test_missing_derivatives_reported(case1):
    broken = _replace_constraint(case1, "heating_rate", derivatives=())
    diags = validate(broken)
    assert len(diags) == 1
    assert "missing index-reduction derivatives" in diags[0]
    assert "heating_rate" in diags[0]


def test_derivative_order_mismatch_reported(case1):
    c = next(c for c in case1.path_constraints if c.name == "dynamic_pressure")
    broken = _replace_constraint(case1, "dynamic_pressure", derivatives=c.derivatives * 2)
    assert any("order mismatch" in d for d in validate(broken))


def test_inverted_bound_reported(case1):
    broken = replace(case1, final_time_bounds=(4000.0, 500.0))
    diags = validate(broken)
    assert any("inverted bound" in d and "final time" in d for d in diags)


def test_inverted_state_box_reported(case1):
    lo, hi = case1.state_box()
    lo = lo.copy()
    lo[3] = hi[3] + 1.0
    assert any("inverted bound on state component 3" in d
               for d in validate(replace(case1, state_bounds=(lo, hi))))


def test_duplicate_names_reported(case1):
    cons = case1.path_constraints + (case1.path_constraints[2],)
    assert "duplicate path constraint names" in validate(replace(case1, path_constraints=cons))


def test_control_constraint_with_derivatives_rejected(case1):
    broken = _replace_constraint(
        case1, "bank_angle", derivatives=case1.path_constraints[0].derivatives)
    assert any("must not carry derivatives" in d for d in validate(broken))


def test_control_insensitive_highest_derivative_reported(case1):
    # the constraint itself instead of its derivative: no control appears
    c = case1.path_constraints[0]
    broken = _replace_constraint(case1, "heating_rate", derivatives=(c.evaluate,))
    assert any("no control sensitivity" in d for d in validate(broken))


def test_analytic_derivatives_consistent(case1):
    worst = derivative_consistency_check(case1, 500, seed=1)
    assert worst["heating_rate"] <= 1e-6
    assert worst["dynamic_pressure"] <= 1e-6


def test_sign_flipped_derivative_detected(case1):
    c = case1.path_constraints[0]
    flipped = c.derivatives[0]
    broken = _replace_constraint(
        case1, "heating_rate", derivatives=(lambda y, u, t, p: -flipped(y, u, t, p),))
    with pytest.raises(DerivativeInconsistencyError, match="heating_rate"):
        derivative_consistency_check(broken, 50)


def test_constraint_bound_accessor():
    c = PathConstraint("x", ConstraintKind.STATE, lambda y, u, t, p: y[:, 0], lower=-1, upper=2)
    assert c.bound("upper") == 2 and c.bound("lower") == -1
    assert c.enforced
    assert not PathConstraint("free", ConstraintKind.CONTROL, c.evaluate).enforced


def test_eval_constraint_broadcasts(case1):
    y = np.tile(case1.initial_box()[0], (4, 1))
    u = np.tile([0.3, 0.0], (4, 1))
    out = case1.eval_constraint(3, y, u, np.zeros(4))
    np.testing.assert_array_equal(out, 0.3)
    assert case1.eval_dynamics(y, u, 0.0).shape == (4, 6)


def test_initial_box_intersects_state_box(case1):
    lo, hi = case1.initial_box()
    np.testing.assert_array_equal(lo, hi)


finite = st.floats(-1e6, 1e6, allow_nan=False)
positive = st.floats(1e-3, 1e6, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(
    scale=arrays(float, 3, elements=positive),
    shift=arrays(float, 3, elements=finite),
    y=arrays(float, 3, elements=finite),
    tscale=positive, tshift=finite, t=finite,
)
def test_scaling_round_trip(scale, shift, y, tscale, tshift, t):
    s = Scaling(scale, shift, scale[:2], shift[:2], tscale, tshift)
    back = s.unscale_state(s.scale_state(y))
    np.testing.assert_allclose(back, y, rtol=1e-12, atol=1e-9 * (1 + np.abs(shift).max()))
    np.testing.assert_allclose(s.unscale_control(s.scale_control(y[:2])), y[:2],
                               rtol=1e-12, atol=1e-9 * (1 + np.abs(shift).max()))
    assert s.unscale_time(s.scale_time(t)) == pytest.approx(t, rel=1e-12,
                                                             abs=1e-9 * (1 + abs(tshift)))


def test_identity_scaling_default(di_problem):
    s = di_problem.scaling
    np.testing.assert_array_equal(s.state_scale, 1.0)
    np.testing.assert_array_equal(s.state_shift, 0.0)
    assert di_problem.state_names == ("y0", "y1") and di_problem.control_names == ("u0",)
