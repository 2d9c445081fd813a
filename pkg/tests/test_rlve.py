from dataclasses import replace

import numpy as np
import pytest

from spoc.ocp import ConstraintKind, derivative_consistency_check, validate
from spoc.rlve import (
    CASE1,
    CASE2,
    DEG,
    ROTATING,
    SWEEP_QDOT_MAX,
    SingularStateError,
    StudyConfig,
    VehicleParams,
    atmosphere_and_aero,
    build_study,
    constraint_time_derivatives,
    derived_quantities,
    dynamic_pressure,
    dynamics,
    heating_rate,
    path_constraint_values,
    state_rates,
    sweep_configs,
)

P = VehicleParams()
Y0 = np.array([P.R_e + 79.248e3, 0.0, 0.0, 7802.88, -1.0 * DEG, 90.0 * DEG])


def random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    h = rng.uniform(20e3, 90e3, n)
    return np.column_stack([
        P.R_e + h, rng.uniform(-np.pi, np.pi, n), rng.uniform(-1.2, 1.2, n),
        rng.uniform(500, 8000, n), rng.uniform(-0.5, 0.5, n), rng.uniform(0, 2 * np.pi, n),
    ]), np.column_stack([rng.uniform(0.0, 0.6, n), rng.uniform(-1.5, 1.5, n)])


def test_table_constants_in_si():
    assert P.R_e == 6371.2039e3
    assert P.mu == pytest.approx(3.986031954e14)
    assert P.CL0 < 0 and P.CD1 < 0


def test_vehicle_params_validated():
    with pytest.raises(ValueError):
        VehicleParams(mass=-1.0)


def test_density_at_sea_level():
    y = Y0.copy()
    y[0] = P.R_e
    rho, q, L, D = atmosphere_and_aero(y[None], np.array([[0.3, 0.0]]), P)
    assert rho[0] == pytest.approx(1.2256, rel=1e-15)


def test_density_at_50_km():
    y = Y0.copy()
    y[0] = P.R_e + 50e3
    rho = atmosphere_and_aero(y[None], np.zeros((1, 2)), P)[0][0]
    assert rho == pytest.approx(1.2256 * np.exp(-50000 / 7254.24), rel=1e-14)


def test_zero_lift_angle():
    alpha0 = 0.2070 / 1.6756
    _, q, L, D = atmosphere_and_aero(Y0[None], np.array([[alpha0, 0.0]]), P)
    assert abs(L[0]) < 1e-12 * D[0]


def test_aero_forces_are_specific():
    alpha = 10 * DEG
    rho, q, L, D = atmosphere_and_aero(Y0[None], np.array([[alpha, 0.0]]), P)
    cl = P.CL0 + P.CL1 * alpha
    cd = P.CD0 + P.CD1 * alpha + P.CD2 * alpha**2
    assert q[0] == pytest.approx(0.5 * rho[0] * 7802.88**2)
    assert L[0] == pytest.approx(q[0] * P.area * cl / P.mass)
    assert D[0] == pytest.approx(q[0] * P.area * cd / P.mass)


def test_vertical_flight_has_no_ground_track_rate():
    y = Y0.copy()
    y[4] = -np.pi / 2
    with np.errstate(all="ignore"):
        rates = dynamics(y[None], np.array([[0.3, 0.2]]), 0.0, P)
    assert abs(rates[1][0]) < 1e-12 and abs(rates[2][0]) < 1e-12


def test_initial_sink_rate():
    r = state_rates(Y0, [0.3, 0.0], P)
    assert r[0] == pytest.approx(7802.88 * np.sin(-1.0 * DEG), rel=1e-14)
    assert r[0] == pytest.approx(-136.18, abs=0.01)


def test_singular_flight_path_angle():
    y = Y0.copy()
    y[4] = -np.pi / 2
    with pytest.raises(SingularStateError):
        state_rates(y, [0.3, 0.1], P)


def test_rotation_with_zero_rate_collapses():
    ys, us = random_states(500, seed=3)
    still = replace(P, omega_e=0.0)
    a = state_rates(ys, us, still, rotation=True)
    b = state_rates(ys, us, still, rotation=False)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)
    da = constraint_time_derivatives(ys, us, still, rotation=True)
    db = constraint_time_derivatives(ys, us, still, rotation=False)
    np.testing.assert_allclose(da, db, rtol=1e-14, atol=0)


def test_rotation_changes_only_kinetic_rates():
    ys, us = random_states(50, seed=4)
    a = state_rates(ys, us, P, rotation=True)
    b = state_rates(ys, us, P, rotation=False)
    np.testing.assert_array_equal(a[:, :3], b[:, :3])
    assert np.all(np.abs(a[:, 3:] - b[:, 3:]).max(axis=0) > 0)


def test_mirror_symmetry_of_rates():
    ys, us = random_states(200, seed=5)
    m = ys.copy()
    m[:, 2] = -ys[:, 2]
    m[:, 5] = np.pi - ys[:, 5]
    mu = us.copy()
    mu[:, 1] = -us[:, 1]
    a = state_rates(ys, us, P)
    b = state_rates(m, mu, P)
    sign = np.array([1, 1, -1, 1, 1, -1])
    np.testing.assert_allclose(b, a * sign, rtol=1e-10, atol=1e-12)


def test_constraint_values_vanish_with_speed_or_density():
    y = Y0.copy()
    y[3] = 0.0
    v = path_constraint_values(y, [0.3, 0.0], P)
    assert v[0] == 0.0 and v[1] == 0.0
    y = Y0.copy()
    y[0] = P.R_e + 3000e3
    v = path_constraint_values(y, [0.3, 0.0], P)
    assert v[0] < 1e-30 and v[1] < 1e-30 and v[2] < 1e-30


def test_heating_rate_formula():
    y = Y0.copy()
    y[0] = P.R_e + 60e3
    y[3] = 7000.0
    rho = 1.2256 * np.exp(-60000 / 7254.24)
    expect = 1.7415e-4 * np.sqrt(rho / 1.0) * 7000.0**3
    assert path_constraint_values(y, [0.3, 0.0], P)[0] == pytest.approx(expect, rel=1e-14)


def test_load_factor_uses_specific_forces():
    vals = path_constraint_values(Y0, [0.3, 0.0], P)
    _, _, L, D = atmosphere_and_aero(Y0[None], np.array([[0.3, 0.0]]), P)
    assert vals[2] == pytest.approx(np.hypot(L[0], D[0]) / P.g0)
    assert vals[3] == 0.3 and vals[4] == 0.0


def test_derivatives_vanish_without_speed_change_or_climb():
    # drag cannot vanish for this polar, so take a vacuum state where it does
    y = Y0.copy()
    y[4] = 0.0
    y[0] = P.R_e + 5000e3
    d = constraint_time_derivatives(y, [0.3, 0.0], P)
    np.testing.assert_allclose(d, 0.0, atol=1e-20)


def test_derivatives_singular_at_zero_speed():
    y = Y0.copy()
    y[3] = 0.0
    with pytest.raises(SingularStateError):
        constraint_time_derivatives(y, [0.3, 0.0], P)


def _flow_derivative(fun, ys, us, params):
    """Fourth-order central difference of fun along the state flow (frozen control)."""
    f = state_rates(ys, us, params)
    scale = np.array([1e5, 1.0, 1.0, 1e3, 1.0, 1.0])
    h = 2e-3 / np.max(np.abs(f / scale), axis=1)
    val = lambda k: fun(ys + k * h[:, None] * f, us, 0.0, params)
    return (8 * (val(1) - val(-1)) - (val(2) - val(-2))) / (12 * h)


@pytest.mark.parametrize("rotation", [False, True])
def test_chain_rule_consistency_1000_points(rotation):
    params = replace(P, rotation=rotation)
    ys, us = random_states(1000, seed=11)
    analytic = constraint_time_derivatives(ys, us, params)
    for k, fun in enumerate((heating_rate, dynamic_pressure)):
        fd = _flow_derivative(fun, ys, us, params)
        assert np.max(np.abs(analytic[:, k] - fd) / (1 + np.abs(fd))) <= 1e-6


@pytest.mark.parametrize("rotation", [False, True])
def test_library_consistency_check_passes(rotation):
    problem = build_study(replace(CASE1, rotation=rotation))
    ys, us = random_states(200, seed=13)
    worst = derivative_consistency_check(problem, samples=(ys, us, np.zeros(200)))
    assert max(worst.values()) <= 1e-4


def test_alpha_sensitivity_of_first_derivatives():
    ys, us = random_states(20, seed=12)
    base = constraint_time_derivatives(ys, us, P)
    du = us.copy()
    du[:, 0] += 1e-4
    moved = constraint_time_derivatives(ys, du, P)
    assert np.all(np.abs(moved - base) > 0)


def test_case1_definition():
    problem = build_study(CASE1)
    assert validate(problem) == []
    kinds = [c.kind for c in problem.path_constraints]
    assert kinds == [ConstraintKind.STATE, ConstraintKind.STATE, ConstraintKind.MIXED,
                     ConstraintKind.CONTROL, ConstraintKind.CONTROL]
    enforced = [c.name for c in problem.path_constraints if c.enforced]
    assert enforced == ["heating_rate", "dynamic_pressure", "load_factor"]
    assert [problem.path_constraints[i].order for i in problem.state_constraints] == [1, 1]
    lo, hi = problem.final_box()
    assert lo[0] == hi[0] == P.R_e + 24.384e3
    assert lo[3] == hi[3] == 762.0
    assert lo[4] == hi[4] == pytest.approx(-5 * DEG)
    assert not np.isfinite(lo[2]) or lo[2] < -1.0  # crossrange free
    # objective is minus the final latitude
    assert problem.mayer(Y0, 0.0, np.array([0, 0, 0.3, 0, 0, 0]), 1.0, None) == -0.3


def test_case2_control_limits():
    problem = build_study(CASE2)
    alpha = next(c for c in problem.path_constraints if c.name == "angle_of_attack")
    sigma = next(c for c in problem.path_constraints if c.name == "bank_angle")
    assert alpha.upper == pytest.approx(19 * DEG)
    assert sigma.lower == pytest.approx(-75 * DEG)


def test_sweep_configurations():
    values = [c.Qdot_max for c in sweep_configs()]
    assert values == [0.85e6, 0.80e6, 0.75e6, 0.70e6]
    assert list(SWEEP_QDOT_MAX) == values
    assert all(c.rotation for c in sweep_configs())
    assert ROTATING.rotation and not CASE1.rotation


def test_study_limits_must_be_positive():
    with pytest.raises(ValueError):
        StudyConfig(Qdot_max=0.0)


def test_inertial_longitude_relation(case1_run):
    problem, sol = case1_run
    still = derived_quantities(sol, replace(P, rotation=False))
    assert still["inertial_longitude_deg"] == still["downrange_deg"]
    spun = derived_quantities(sol, replace(P, rotation=True))
    expect = still["downrange_deg"] + P.omega_e * sol.tf / DEG
    assert spun["inertial_longitude_deg"] == pytest.approx(expect, rel=1e-14)


def test_heat_load_matches_dense_quadrature(case1_run):
    problem, sol = case1_run
    from scipy.integrate import quad

    def qdot(t):
        y, u = sol.domains[int(sol.domain_index(t)[0])].sample(t)
        return path_constraint_values(y, u, P)[0, 0]

    total = sum(quad(qdot, d.t_start, d.t_end, limit=400)[0] for d in sol.domains)
    assert derived_quantities(sol, P)["heat_load_MJ_m2"] == pytest.approx(total / 1e6, rel=1e-6)


def test_energy_dissipates_on_nonrotating_solution(case1_run):
    problem, sol = case1_run
    t = np.linspace(sol.t0, sol.tf, 3000)
    y = sol.state_at(t)
    u = sol.control_at(t)
    rates = state_rates(y, u, P)
    g = P.mu / y[:, 0] ** 2
    edot = y[:, 3] * rates[:, 3] + g * rates[:, 0]
    D = atmosphere_and_aero(y, u, P)[3]
    assert np.all(D > 0)
    assert np.all(edot <= 1e-9 * np.abs(y[:, 3] * D))
    energy = 0.5 * y[:, 3] ** 2 - P.mu / y[:, 0]
    assert np.all(np.diff(energy) <= 1e-6 * np.abs(energy[:-1]))
