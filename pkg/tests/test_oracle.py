import numpy as np
import pytest

import fairtilt as ft
from fairtilt.oracle import kl_between, project_barycentre, project_kl


def test_feasible_point_is_projected_to_itself():
    p = np.array([0.25, 0.25, 0.5])
    space = ft.DiscreteSpace(p=p)
    a = np.array([[1.0, 2.0, -1.5]])
    b = a @ p
    q = project_kl(space, a, b)
    assert q == pytest.approx(p, abs=1e-10)


def test_two_state_closed_form():
    space = ft.DiscreteSpace(p=np.array([0.75, 0.25]))
    a = np.array([[1.0, -1.0]])
    q = project_kl(space, a, np.zeros(1))
    assert q == pytest.approx([0.5, 0.5], abs=1e-10)


def test_projection_matches_solver_weights(two_group, es):
    gaps = ft.oracle_check_node(
        two_group,
        np.array([4.0]),
        [ft.MeasureRequest(kind="insensitive")],
        es,
        ft.BinScheme(4),
        n=512,
        seed=42,
        opts=ft.SolverOptions(tol=1e-10),
    )
    assert gaps["insensitive"] <= 1e-6


def test_infeasible_constraints_raise_with_certificate():
    space = ft.DiscreteSpace(p=np.array([0.5, 0.5]))
    a = np.array([[1.0, 2.0]])  # strictly positive, target zero unreachable
    with pytest.raises(ft.Infeasible) as info:
        project_kl(space, a, np.zeros(1))
    z = info.value.certificate
    assert z is not None
    rows = np.vstack([a, np.ones(2)])
    targets = np.array([0.0, 1.0])
    assert float(z @ targets) > 0.0
    assert np.all(z @ rows <= 1e-9)


def test_discrete_space_validation():
    with pytest.raises(ValueError):
        ft.DiscreteSpace(p=np.array([0.5, 0.0, 0.5]))
    with pytest.raises(ValueError):
        ft.DiscreteSpace(p=np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        ft.DiscreteSpace(p=np.full(5000, 1.0 / 5000.0))


def test_kl_between_known_value():
    q = np.array([0.5, 0.5])
    p = np.array([0.75, 0.25])
    direct = 0.5 * np.log(0.5 / 0.75) + 0.5 * np.log(0.5 / 0.25)
    assert kl_between(q, p) == pytest.approx(direct)


def test_barycentre_projection_identical_members():
    p = np.array([0.2, 0.3, 0.5])
    space = ft.DiscreteSpace(p=p)
    member = np.array([0.3, 0.3, 0.4])
    q = project_barycentre(space, [member, member], np.array([0.5, 0.5]))
    assert q == pytest.approx(member, abs=1e-10)


def test_barycentre_projection_matches_geometric_mean():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(12))
    space = ft.DiscreteSpace(p=p)
    members = [rng.dirichlet(np.ones(12)) for _ in range(3)]
    pi = np.array([0.2, 0.5, 0.3])
    q = project_barycentre(space, members, pi)
    logq = sum(w * np.log(m) for w, m in zip(pi, members))
    closed = np.exp(logq)
    closed /= closed.sum()
    assert q == pytest.approx(closed, abs=1e-10)


def test_constrained_barycentre_projection_has_tilt_form():
    rng = np.random.default_rng(4)
    k = 10
    p = rng.dirichlet(np.ones(k))
    space = ft.DiscreteSpace(p=p)
    members = [rng.dirichlet(np.ones(k)) for _ in range(2)]
    pi = np.array([0.6, 0.4])
    y = rng.normal(size=k)
    target = np.array([float(p @ y)])
    q = project_barycentre(space, members, pi, constraints=y[None, :], targets=target)
    assert float(q @ y) == pytest.approx(target[0], abs=1e-8)
    # the solution must be an exponential y-tilt of the geometric mean
    logg = sum(w * np.log(m) for w, m in zip(pi, members))
    resid = np.log(q) - logg
    # residual of the log-density against span{1, y}
    basis = np.column_stack([np.ones(k), y])
    coef, *_ = np.linalg.lstsq(basis, resid, rcond=None)
    assert resid == pytest.approx(basis @ coef, abs=1e-8)


def test_tilt_projection_gap_detects_mismatch(two_group, es):
    samples = ft.sample_conditional(two_group, np.array([4.0]), 256, seed=5)
    pm = ft.build_phi(two_group.model, samples.d, samples.u, es)
    bins = ft.BinScheme(4)
    measure = ft.solve_insensitive(samples, pm, bins, ft.SolverOptions(tol=1e-10))
    assert measure.converged
    columns = np.hstack([pm.values, samples.y[:, None]])
    targets = np.concatenate([np.zeros(1), [samples.y.mean()]])
    good = ft.tilt_projection_gap(columns, targets, samples.u, bins.count, measure.weights.r)
    bad = ft.tilt_projection_gap(
        columns, targets, samples.u, bins.count, np.ones_like(measure.weights.r)
    )
    assert good <= 1e-6
    assert bad > good
