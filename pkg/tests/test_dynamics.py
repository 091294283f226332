import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import ALGEBRAS_3D, norms_3d
from oracles import group_flow_ivp, heisenberg_closed_form
from pfinsler import lie_algebra as la
from pfinsler import polynorm as pn
from pfinsler.dynamics import (ControlPolicy, ControlSchedule, DynamicsError, IntegrationError,
                               PolicyViolationError, Trajectory, dual_value_drift, integrate,
                               reconstruct_group, select_control, verify_extremal)

CROSS = pn.cross_polytope(3)
E1 = int(np.flatnonzero(np.all(CROSS.ball.vertices == [1, 0, 0], axis=1))[0])


def closed_form_trajectory(a0, T=10.0, h=1e-3):
    t = np.linspace(0, T, int(round(T / h)) + 1)
    a = heisenberg_closed_form(a0, t)
    u = np.tile([1.0, 0, 0], (len(t), 1))
    return Trajectory(t, a, u, ["x"] * len(t), [], CROSS.dual_eval(a))


def test_abelian_is_constant(rng):
    A = la.catalog("abelian3")
    for name, N in norms_3d().items():
        a0 = rng.normal(size=3)
        tr = integrate(A, N, a0, ControlPolicy.barycenter(), 2.0)
        assert np.all(tr.a == a0)
        assert dual_value_drift(tr) == 0


def test_heisenberg_matches_closed_form(heis):
    a0 = np.array([1.0, 0.0, 0.05])
    tr = integrate(heis, CROSS, a0, ControlPolicy.fixed_vertex(E1), 10.0)
    ref = heisenberg_closed_form(a0, tr.times)
    assert np.max(np.abs(tr.a - ref)) < 1e-10
    assert np.all(tr.u == [1, 0, 0])
    assert verify_extremal(heis, CROSS, tr).accepted


@pytest.mark.parametrize("norm", list(norms_3d()))
def test_so3_length_conserved(so3, norm):
    # from e^1 the skew box's barycenter control slides along an edge of the dual ball
    a0 = np.array([1.0, 0.3, -0.2]) if norm == "skew" else np.array([1.0, 0, 0])
    tr = integrate(so3, norms_3d()[norm], a0, ControlPolicy.barycenter(), 10.0)
    r = np.linalg.norm(tr.a, axis=1)
    assert np.max(np.abs(r - np.linalg.norm(a0))) < 1e-10


@pytest.mark.parametrize("norm", list(norms_3d()))
def test_heisenberg_center_conserved(heis, norm, rng):
    a0 = rng.normal(size=3)
    tr = integrate(heis, norms_3d()[norm], a0, ControlPolicy.barycenter(), 5.0)
    assert np.max(np.abs(tr.a[:, 2] - a0[2])) <= 1e-12


def test_select_control_examples(square):
    bc = ControlPolicy.barycenter()
    np.testing.assert_allclose(select_control(square, [1, 0], bc), [1, 0])
    np.testing.assert_allclose(select_control(square, [1, 1], bc), [1, 1])
    i = int(np.flatnonzero(np.all(square.ball.vertices == [1, 1], axis=1))[0])
    np.testing.assert_allclose(select_control(square, [1, 1], ControlPolicy.fixed_vertex(i)), [1, 1])
    sched = ControlPolicy.from_schedule([(0, [1, 1])])
    np.testing.assert_allclose(select_control(square, [1, 1], sched), [1, 1])
    with pytest.raises(DynamicsError):
        select_control(square, [0, 0], bc)
    j = int(np.flatnonzero(np.all(square.ball.vertices == [-1, 1], axis=1))[0])
    with pytest.raises(PolicyViolationError):
        select_control(square, [1, 1], ControlPolicy.fixed_vertex(j))
    with pytest.raises(PolicyViolationError):
        select_control(square, [1, 0], ControlPolicy.custom(lambda t: [0.5, 0]))


def test_policy_violation_reports_time(heis):
    # a_2 = t overtakes a_1 = 1 at t = 1, moving the maximizer off e1
    with pytest.raises(PolicyViolationError) as info:
        integrate(heis, CROSS, [1.0, 0, 1.0], ControlPolicy.fixed_vertex(E1), 3.0)
    assert info.value.time == pytest.approx(1.0, abs=2e-3)


def test_integrate_input_errors(heis):
    bc = ControlPolicy.barycenter()
    with pytest.raises(DynamicsError):
        integrate(heis, CROSS, [0, 0, 0], bc, 1.0)
    with pytest.raises(DynamicsError):
        integrate(heis, CROSS, [1, 0, 0], bc, -1.0)
    with pytest.raises(DynamicsError):
        integrate(heis, CROSS, [1, 0, 0], bc, 1.0, h=0)
    with pytest.raises(DynamicsError):
        integrate(heis, pn.cube(2), [1, 0, 0], bc, 1.0)
    with pytest.raises(DynamicsError):
        integrate(heis, pn.PolyNorm([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), [1, 0, 0], bc, 1.0)


def test_chattering_is_reported():
    with pytest.raises(IntegrationError):
        integrate(la.catalog("sl2"), pn.skew_box(3), [0, 0.5, 0.5], ControlPolicy.barycenter(), 1.0)


def test_switch_times_are_refined(so3):
    h = 1e-3
    N = pn.cube(3)
    tr = integrate(so3, N, [1.0, 0.3, 0.2], ControlPolicy.barycenter(), 4.0, h=h)
    assert len(tr.switch_times) > 0
    for s in tr.switch_times:
        j = int(np.searchsorted(tr.times, s))
        assert tr.times[j] == s and s - tr.times[j - 1] <= h * (1 + 1e-9)
        assert tr.face_ids[j] != tr.face_ids[j - 1]
        # just before the recorded instant the old face still maximizes
        M = so3.coadjoint_matrix(tr.u[j - 1])
        early = expm((s - tr.times[j - 1] - 2e-9) * M) @ tr.a[j - 1]
        assert N.maximizing_face(early).signature == tr.face_ids[j - 1]


def test_schedule_policy_aligns_steps(heis):
    # both controls lie on the facet x1 = 1 of the cube, maximizing for e^1
    pol = ControlPolicy.from_schedule([(0, [1, 1, 1]), (0.4567, [1, -1, 0.5])])
    tr = integrate(heis, pn.cube(3), [1.0, 0, 0], pol, 1.0)
    assert 0.4567 in tr.times
    j = int(np.flatnonzero(tr.times == 0.4567)[0])
    np.testing.assert_array_equal(tr.u[j - 1], [1, 1, 1])
    np.testing.assert_array_equal(tr.u[j], [1, -1, 0.5])
    assert verify_extremal(heis, pn.cube(3), tr).accepted


def test_verify_extremal_examples(heis):
    tr = closed_form_trajectory([1.0, 0, 0.05])
    chk = verify_extremal(heis, CROSS, tr)
    assert chk.accepted and chk.residual <= 1e-6
    bad = tr.with_controls(np.tile([0, 1.0, 0], (len(tr), 1)))
    chk = verify_extremal(heis, CROSS, bad)
    assert not chk.face_ok and chk.first_face_violation == 0 and not chk.accepted
    A = la.catalog("abelian3")
    t = np.linspace(0, 1, 50)
    a = np.tile([1.0, 0, 0], (50, 1))
    u = np.tile([1.0, 0.3, -0.2], (50, 1))
    tr = Trajectory(t, a, u, ["x"] * 50, [], pn.cube(3).dual_eval(a))
    chk = verify_extremal(A, pn.cube(3), tr)
    assert chk.residual == 0 and chk.accepted


def test_verify_extremal_detects_wrong_dynamics(heis):
    tr = closed_form_trajectory([1.0, 0, 0.05])
    wrong = tr.with_covectors(tr.a * np.array([1, 1.01, 1]))
    assert verify_extremal(heis, CROSS, wrong).residual > 1e-4


def test_drift_examples(heis):
    tr = closed_form_trajectory([1.0, 0, 0.05])
    assert dual_value_drift(tr) <= 1e-8
    integ = integrate(heis, CROSS, [1.0, 0, 0.05], ControlPolicy.fixed_vertex(E1), 10.0)
    assert dual_value_drift(integ) <= 1e-8
    a = tr.a.copy()
    a[500] *= 1.1
    assert dual_value_drift(tr.with_covectors(a, CROSS)) == pytest.approx(0.1 * tr.dual_values[0])


@pytest.mark.parametrize("name", ["so3", "sl2", "e2", "sol3"])
def test_projection_removes_drift(name, rng):
    A, N = la.catalog(name), pn.diamond_prism()
    a0 = rng.normal(size=3)
    tr = integrate(A, N, a0, ControlPolicy.barycenter(), 3.0, project=True)
    assert dual_value_drift(tr) <= 1e-12 * N.dual_eval(a0)


@pytest.mark.parametrize("name", ALGEBRAS_3D)
def test_accepted_trajectories_have_face_membership(name, rng):
    A = la.catalog(name)
    for N in norms_3d().values():
        try:
            tr = integrate(A, N, rng.normal(size=3), ControlPolicy.barycenter(), 1.0)
        except IntegrationError:
            continue
        chk = verify_extremal(A, N, tr)
        assert chk.accepted
        for a, u in zip(tr.a, tr.u):
            assert N.ball.contains(N.maximizing_face(a), u, 1e-9)


@given(st.sampled_from([0.25, 0.5, 0.75]), st.integers(0, 2 ** 32 - 1))
def test_convex_combinations_of_controls(s, seed):
    # a = e^1 is stationary for Heisenberg under any control, and every point of
    # the facet x1 = 1 maximizes it
    rng = np.random.default_rng(seed)
    heis, N = la.catalog("heisenberg3"), pn.cube(3)
    m = 60
    t = np.linspace(0, 1, m)
    a = np.tile([2.0, 0, 0], (m, 1))
    u1 = np.column_stack([np.ones(m), rng.uniform(-1, 1, (m, 2))])
    u2 = np.column_stack([np.ones(m), rng.uniform(-1, 1, (m, 2))])
    base = Trajectory(t, a, u1, ["x"] * m, [], N.dual_eval(a))
    assert verify_extremal(heis, N, base).accepted
    assert verify_extremal(heis, N, base.with_controls(u2)).accepted
    assert verify_extremal(heis, N, base.with_controls(s * u1 + (1 - s) * u2)).accepted


def test_csv_roundtrip_is_exact(tmp_path, so3):
    tr = integrate(so3, pn.skew_box(3), [1.0, 0.3, 0.2], ControlPolicy.barycenter(), 2.0)
    p, sp = tr.write_csv(tmp_path / "traj.csv")
    assert sp.name == "traj.switches.json"
    assert json.loads(sp.read_text())["switch_times"] == tr.switch_times.tolist()
    back = Trajectory.read_csv(p)
    for f in ("times", "a", "u", "switch_times", "dual_values"):
        np.testing.assert_array_equal(getattr(back, f), getattr(tr, f))
    assert back.face_ids == tr.face_ids
    assert p.read_text().splitlines()[0] == "t,a_1,a_2,a_3,u_1,u_2,u_3,face_id,dual_value"


def test_read_csv_rejects_garbage(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("t,b_1\n0,1\n")
    with pytest.raises(DynamicsError):
        Trajectory.read_csv(p)
    with pytest.raises(DynamicsError):
        Trajectory.read_csv(tmp_path / "missing.csv")


def test_policy_json():
    for pol in (ControlPolicy.barycenter(), ControlPolicy.fixed_vertex(3),
                ControlPolicy.from_schedule([(0, [1, 0]), (0.5, [0, 1])])):
        assert ControlPolicy.from_json(json.loads(json.dumps(pol.to_json()))) == pol
    assert ControlPolicy.from_json("barycenter") == ControlPolicy.barycenter()
    for bad in ({"kind": "magic"}, {"kind": "barycenter", "vertex": 1}, {"vertex": 1},
                {"kind": "schedule", "schedule": []}, {"kind": "fixed-vertex"},
                {"kind": "schedule", "schedule": [[1, [0]], [0.5, [1]]]}):
        with pytest.raises(DynamicsError):
            ControlPolicy.from_json(bad)
    with pytest.raises(DynamicsError):
        ControlPolicy.custom(lambda t: t).to_json()


def test_trajectory_validation():
    with pytest.raises(DynamicsError):
        Trajectory([0, 0], np.ones((2, 2)), np.ones((2, 2)), ["a", "b"], [], [1, 1])
    with pytest.raises(DynamicsError):
        Trajectory([0, 1], np.ones((2, 2)), np.ones((3, 2)), ["a", "b"], [], [1, 1])


def test_reconstruct_abelian_line():
    A = la.catalog("abelian3")
    rep = la.matrix_representation("abelian3")
    u = np.array([0.5, -0.25, 1.0])
    sched = ControlSchedule([0.0, 2.0], [u, u])
    g = reconstruct_group(A, rep, sched, np.eye(4), h=0.01)
    for t, x in zip(g.times, g.matrices):
        np.testing.assert_allclose(x[:3, 3], t * u, atol=1e-12)
        np.testing.assert_allclose(x[:3, :3], np.eye(3), atol=1e-14)


def test_reconstruct_heisenberg_one_parameter_subgroup(heis):
    rep = la.matrix_representation("heisenberg3")
    x0 = expm(rep[1] + 0.3 * rep[2])
    sched = ControlSchedule([0.0, 1.5], [[1, 0, 0], [1, 0, 0]])
    g = reconstruct_group(heis, rep, sched, x0, h=1e-2)
    for t, x in zip(g.times, g.matrices):
        np.testing.assert_allclose(x, x0 @ expm(t * rep[0]), atol=1e-12)
    assert g.det_residual < 1e-12


@pytest.mark.parametrize("name", ["heisenberg3", "so3", "sl2", "sol3"])
def test_reconstruct_matches_ode_solver(name):
    A = la.catalog(name)
    rep = la.matrix_representation(name)
    u1, u2 = np.array([1.0, 0.2, -0.3]), np.array([-0.4, 0.9, 0.5])
    sched = ControlSchedule([0.0, 0.7, 1.5], [u1, u2, u2])
    x0 = np.eye(rep.shape[1])
    g = reconstruct_group(A, rep, sched, x0, h=1e-2)
    ref = group_flow_ivp(rep, [(0.0, 0.7, u1), (0.7, 1.5, u2)], x0, g.times.tolist())
    for t, x in zip(g.times, g.matrices):
        np.testing.assert_allclose(x, ref[float(t)], atol=1e-8)


@pytest.mark.parametrize("name", ["so3", "sl2", "heisenberg3"])
def test_reconstruct_stays_in_group(name, rng):
    A = la.catalog(name)
    rep = la.matrix_representation(name)
    ts = np.sort(rng.uniform(0, 5, 20))
    sched = ControlSchedule(np.r_[0, ts], rng.normal(size=(21, 3)))
    g = reconstruct_group(A, rep, sched, np.eye(rep.shape[1]))
    assert g.det_residual < 1e-8
    for x in g.matrices:
        assert np.linalg.det(x) == pytest.approx(1, abs=1e-8)
        if name == "so3":
            np.testing.assert_allclose(x.T @ x, np.eye(3), atol=1e-8)


def test_reconstruct_errors(heis):
    rep = la.matrix_representation("heisenberg3")
    sched = ControlSchedule([0.0, 1.0], [[1, 0, 0], [1, 0, 0]])
    with pytest.raises(DynamicsError):
        reconstruct_group(heis, rep[[1, 0, 2]], sched, np.eye(3))
    with pytest.raises(DynamicsError):
        reconstruct_group(heis, rep, sched, np.eye(4))
    with pytest.raises(DynamicsError):
        reconstruct_group(heis, rep, ControlSchedule([0.0, 1.0], [[0.5, 0, 0]] * 2), np.eye(3),
                          norm=CROSS)
    g = reconstruct_group(heis, rep, sched, np.eye(3), norm=CROSS)
    assert len(g.to_json()["matrices"]) == len(g.times)


def test_control_schedule_lookup():
    s = ControlSchedule([0.0, 1.0, 2.0], [[1, 0], [0, 1], [0, 1]])
    np.testing.assert_array_equal(s(0.5), [1, 0])
    np.testing.assert_array_equal(s(1.0), [0, 1])
    np.testing.assert_array_equal(s(-1), [1, 0])
    with pytest.raises(DynamicsError):
        ControlSchedule([1.0, 0.0], [[1], [1]])
