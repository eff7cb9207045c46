import json

import numpy as np
import pytest

from exploratory_hjb.grid import Grid, ScalarField, laplacian
from exploratory_hjb.landscape import builtin_landscape, with_gaussian_bumps
from exploratory_hjb.operators import ProblemSpec, exploratory_operator_tc
from exploratory_hjb.solver import (DivergenceError, SolverConfig, residual_field,
                                    solve_classical_hjb, solve_exploratory_hjb, solve_hjb)

SPEC = ProblemSpec(0.1, 1.0, 0.5)
V0 = -0.1 * np.log(0.5)
DW = builtin_landscape("double_well_1d")
G1 = Grid(1, 3.0, 301)


@pytest.fixture(scope="module")
def dw_solutions():
    v_ex, rep_ex = solve_exploratory_hjb(DW, G1, SPEC)
    v_cl, rep_cl = solve_classical_hjb(DW, G1, SPEC)
    return v_ex, rep_ex, v_cl, rep_cl


@pytest.mark.parametrize("dim", [1, 2])
def test_constant_solutions(dim):
    grid = Grid(dim, 2.0, 21 if dim == 2 else 41)
    v, rep = solve_exploratory_hjb(builtin_landscape("zero", dim=dim), grid, SPEC)
    assert np.allclose(v.values, V0, atol=1e-8)
    v, _ = solve_exploratory_hjb(builtin_landscape("constant", dim=dim, c=2.0), grid, SPEC)
    assert np.allclose(v.values, 2.0 + V0, atol=1e-8)
    v, _ = solve_classical_hjb(builtin_landscape("zero", dim=dim), grid, SPEC)
    assert np.allclose(v.values, 0.0, atol=1e-9)
    v, _ = solve_classical_hjb(builtin_landscape("constant", dim=dim, c=3.0), grid, ProblemSpec(0.1, 2.0, 0.5))
    assert np.allclose(v.values, 1.5, atol=1e-9)


def test_double_well_residual_and_report(dw_solutions):
    v_ex, rep_ex, v_cl, rep_cl = dw_solutions
    for v, rep, kind in ((v_ex, rep_ex, "exploratory"), (v_cl, rep_cl, "classical")):
        assert rep.converged and rep.residual <= 1e-8
        assert residual_field(v, DW, SPEC, kind).sup_norm() <= 1e-8
        assert rep.kind == kind
        body = json.loads(rep.to_json())
        assert list(body) == sorted(body)


def test_residual_matches_pointwise_operator(dw_solutions):
    v_ex = dw_solutions[0]
    h = G1.h
    x = G1.axis
    i = 120
    grad_f = DW.grad(x[i:i + 1, None])[0, 0]
    # upwind: c = f' > 0 takes the backward difference
    dv = (v_ex.values[i] - v_ex.values[i - 1]) / h if grad_f > 0 else (v_ex.values[i + 1] - v_ex.values[i]) / h
    lap = laplacian(v_ex.values, h)[i]
    r = exploratory_operator_tc(SPEC, v_ex.values[i], DW.f(x[i:i + 1, None])[0], [grad_f], [dv], lap)
    assert r == pytest.approx(residual_field(v_ex, DW, SPEC).values[i], abs=1e-12)


def test_ordering_between_classical_and_exploratory(dw_solutions):
    v_ex, _, v_cl, _ = dw_solutions
    gap = SPEC.lam / SPEC.rho * np.log(1.0 / (1.0 - SPEC.a))
    # the entropy bonus is at most ln(1/(1-a)) per unit time and the cost adds -lam * entropy
    assert np.all(v_cl.values + gap <= v_ex.values + 1e-8)
    assert np.all(v_cl.values <= v_ex.values + gap)


def test_relaxation_agrees_with_policy_iteration():
    grid = Grid(1, 2.0, 41)
    cfg = SolverConfig(tol=1e-9, method="relaxation", max_iter=200000)
    v_rel, rep = solve_exploratory_hjb(DW, grid, SPEC, cfg)
    v_pol, _ = solve_exploratory_hjb(DW, grid, SPEC, SolverConfig(tol=1e-9))
    assert rep.method == "relaxation"
    assert np.max(np.abs(v_rel.values - v_pol.values)) < 1e-8


def test_divergence_reports_history():
    grid = Grid(1, 2.0, 41)
    with pytest.raises(DivergenceError) as err:
        solve_exploratory_hjb(DW, grid, SPEC, SolverConfig(method="relaxation", max_iter=50))
    assert len(err.value.history) >= 1


def test_perturbation_is_local(dw_solutions):
    v_ex = dw_solutions[0]
    eps, i = 1e-6, 150
    bumped = v_ex.values.copy()
    bumped[i] += eps
    r0 = residual_field(v_ex, DW, SPEC).values
    r1 = residual_field(ScalarField(G1, bumped), DW, SPEC).values
    diff = np.abs(r1 - r0)
    assert np.all(diff[np.abs(np.arange(G1.n) - i) > 1] == 0.0)
    assert diff[i] > eps / G1.h ** 2 * 0.1
    assert diff[i] < eps * (1 + 2 / G1.h ** 2 + 10 / G1.h)


def test_grid_refinement_first_order():
    grid = Grid(1, 3.0, 151)
    v1, _ = solve_exploratory_hjb(DW, grid, SPEC)
    v2, _ = solve_exploratory_hjb(DW, grid.refined(), SPEC)
    v3, _ = solve_exploratory_hjb(DW, grid.refined().refined(), SPEC)
    inner = np.abs(grid.axis) <= 1.5
    e1 = np.max(np.abs(v2.values[::2] - v1.values)[inner])
    e2 = np.max(np.abs(v3.values[::4] - v2.values[::2])[inner])
    assert e2 < 0.75 * e1
    assert e1 <= 5.0 * grid.h


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("kind", ["exploratory", "classical"])
def test_comparison_principle(seed, kind):
    rng = np.random.default_rng(seed)
    base = builtin_landscape("double_well_1d")
    f1 = with_gaussian_bumps(base, rng.uniform(-2, 2, (3, 1)), -rng.uniform(0, 0.5, 3), rng.uniform(0.2, 0.8, 3))
    f2 = with_gaussian_bumps(f1, rng.uniform(-2, 2, (2, 1)), rng.uniform(0, 0.5, 2), rng.uniform(0.2, 0.8, 2))
    grid = Grid(1, 3.0, 121)
    v1, _ = solve_hjb(f1, grid, SPEC, kind=kind)
    v2, _ = solve_hjb(f2, grid, SPEC, kind=kind)
    assert np.all(v1.values <= v2.values + 1e-7)


def test_two_dimensional_double_well():
    grid = Grid(2, 2.5, 41)
    land = builtin_landscape("double_well_2d")
    v, rep = solve_exploratory_hjb(land, grid, SPEC)
    assert rep.residual <= 1e-8
    # symmetric in both axes
    assert np.allclose(v.values, v.values[::-1, :], atol=1e-9)
    assert np.allclose(v.values, v.values[:, ::-1], atol=1e-9)


def test_determinism():
    grid = Grid(1, 3.0, 101)
    a, _ = solve_exploratory_hjb(DW, grid, SPEC)
    b, _ = solve_exploratory_hjb(DW, grid, SPEC)
    assert np.array_equal(a.values, b.values)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(method="newton")
    with pytest.raises(ValueError):
        SolverConfig(damping=1.5)
