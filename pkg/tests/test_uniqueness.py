import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ALGEBRAS_3D, norms_3d
from oracles import edge_grid, face_grid
from pfinsler import lie_algebra as la
from pfinsler import polynorm as pn
from pfinsler import uniqueness as uq
from pfinsler.curvature import k_vanishes_3d
from pfinsler.dynamics import ControlPolicy, Trajectory, integrate, verify_extremal
from pfinsler.uniqueness import INCONCLUSIVE, INFINITE, UNIQUE, PreconditionError

DIAMOND = pn.diamond_prism()


def run(name, a0, N=DIAMOND, T=1.0):
    A = la.catalog(name)
    return A, integrate(A, N, np.asarray(a0, float), ControlPolicy.barycenter(), T)


def test_vanishing_measure_examples(heis):
    _, tr = run("abelian3", [0.3, 1, 0.2])
    assert uq.vanishing_measure(la.catalog("abelian3"), tr) == 1
    _, tr = run("heisenberg3", [1, 0, 0])
    assert uq.vanishing_measure(heis, tr) == 1
    _, tr = run("heisenberg3", [0, 0, 1])
    assert uq.vanishing_measure(heis, tr) == 0


def test_subalgebra_defect_matches_criterion(rng):
    for name in ALGEBRAS_3D:
        A = la.catalog(name)
        a = rng.normal(size=(30, 3))
        a[:5] = np.eye(3)[rng.integers(0, 3, 5)]
        mask = uq.vanishing_mask(A, a)
        assert mask.tolist() == [k_vanishes_3d(A, x) for x in a]


def test_vanishing_measure_higher_dim():
    A = la.catalog("heisenberg3+abelian1")
    t = np.linspace(0, 1, 10)
    a = np.tile([0, 0, 1.0, 0], (10, 1))
    tr = Trajectory(t, a, np.zeros_like(a), ["x"] * 10, [], np.ones(10))
    # e4 is central, so it normalizes every kernel
    assert uq.vanishing_measure(A, tr) == 1


def test_alternative_is_identity_without_vanishing(heis):
    _, tr = run("heisenberg3", [0, 0, 1])
    alt = uq.construct_alternative(heis, DIAMOND, tr)
    np.testing.assert_array_equal(alt.controls, tr.u)


def test_alternative_differs_and_verifies(heis):
    _, tr = run("heisenberg3", [1, 0, 0])
    alt = uq.construct_alternative(heis, DIAMOND, tr)
    assert np.all(np.linalg.norm(alt.controls - tr.u, axis=1) > 0.5)
    L = DIAMOND.maximizing_face([1, 0, 0])
    assert all(DIAMOND.ball.contains(L, u, 1e-12) for u in alt.controls)
    assert verify_extremal(heis, DIAMOND, tr.with_controls(alt.controls)).accepted


def test_no_alternative_when_curvature_is_positive(heis):
    _, tr = run("heisenberg3", [0, 0, 1])
    p, q = DIAMOND.maximizing_face([0, 0, 1]).vertices
    for s in (0.1, 0.4, 0.9, 1.0):
        v = (1 - s) * p + s * q
        if np.allclose(v, tr.u[0]):
            continue
        chk = verify_extremal(heis, DIAMOND, tr.with_controls(np.tile(v, (len(tr), 1))))
        assert chk.residual > 0.05


def test_lambda_tie_break_stays_on_edge(heis):
    _, tr = run("heisenberg3", [1, 0, 0])
    L = DIAMOND.maximizing_face([1, 0, 0])
    mid = L.vertices.mean(0)
    assert np.allclose(tr.u[0], mid)
    alt = uq.construct_alternative(heis, DIAMOND, tr)
    assert any(np.allclose(alt.controls[0], v) for v in L.vertices)


def test_classify_edge_examples(heis):
    _, tr = run("heisenberg3", [1, 0, 0])
    rep = uq.classify_edge(heis, DIAMOND, tr)
    assert rep.classification == INFINITE
    assert rep.witness is not None and rep.residual_of_witness <= 1e-6
    _, tr = run("heisenberg3", [0, 0, 1])
    rep = uq.classify_edge(heis, DIAMOND, tr)
    assert rep.classification == UNIQUE and rep.witness is None
    A, tr = run("abelian3", [1, 0, 0])
    assert uq.classify_edge(A, DIAMOND, tr).classification == INFINITE


def test_classify_edge_thresholds(heis):
    _, tr = run("heisenberg3", [1, 0, 0])
    rep = uq.classify_edge(heis, DIAMOND, tr, measure_threshold=1.0)
    assert rep.classification == INCONCLUSIVE and rep.witness is None
    # the cube's dual edge from e^1 to e^3 meets the vanishing set only at e^1
    cube = pn.cube(3)
    L = cube.maximizing_face([1, 0, 1])
    a = np.tile([0.5, 0, 0.5], (200, 1))
    a[:3] = [1.0, 0, 0]
    t = np.linspace(0, 1, 200)
    u = np.tile(L.vertices.mean(0), (200, 1))
    tr = Trajectory(t, a, u, ["x"] * 200, [], cube.dual_eval(a))
    rep = uq.classify_edge(heis, cube, tr, L=L)
    assert rep.vanishing_fraction == pytest.approx(3 / 200)
    assert rep.classification == INCONCLUSIVE
    rep = uq.classify_edge(heis, cube, tr, measure_threshold=0.5, L=L)
    assert rep.classification == INCONCLUSIVE and rep.witness is None


def test_classify_edge_precondition_names_sample(heis):
    _, tr = run("heisenberg3", [1, 0, 0])
    u = tr.u.copy()
    u[7] = [0, 1, 0]
    with pytest.raises(PreconditionError) as info:
        uq.classify_edge(heis, DIAMOND, tr.with_controls(u))
    assert info.value.index == 7 and "sample 7" in str(info.value)
    a = tr.a.copy()
    a[11] = [1, 0, 0.5]
    with pytest.raises(PreconditionError) as info:
        uq.classify_edge(heis, DIAMOND, tr.with_covectors(a))
    assert info.value.index == 11
    # the cube never maximizes e^1 on an edge
    _, tr = run("heisenberg3", [1, 0, 0], N=pn.cube(3))
    with pytest.raises(PreconditionError):
        uq.classify_edge(heis, pn.cube(3), tr)
    with pytest.raises(PreconditionError):
        uq.classify_edge(la.catalog("abelian4"), pn.cube(4), tr)


def test_report_json(heis, tmp_path):
    _, tr = run("heisenberg3", [1, 0, 0])
    rep = uq.classify_edge(heis, DIAMOND, tr)
    d = json.loads(json.dumps(rep.to_json(tmp_path / "w.csv")))
    assert set(d) >= {"vanishing_fraction", "classification", "witness_csv_path", "residual_of_witness", "edge"}
    assert set(d["edge"]) == {"face_id", "dual_face_id"}
    with pytest.raises(ValueError):
        uq.UniquenessReport(0.0, "maybe")


@pytest.mark.parametrize("name", ALGEBRAS_3D)
def test_witnesses_always_verify(name):
    A = la.catalog(name)
    for N in norms_3d().values():
        for f in N.dual().ball.faces():
            if f.dim != 1:
                continue
            try:
                tr = integrate(A, N, f.vertices.mean(0), ControlPolicy.barycenter(), 0.3)
                seg = tr.segment(*uq.split_at_switches(tr)[0])
                rep = uq.classify_edge(A, N, seg)
            except Exception:
                continue
            if rep.classification == INFINITE:
                assert verify_extremal(A, N, seg.with_controls(rep.witness.controls)).accepted
            assert (rep.classification == INFINITE) <= (rep.vanishing_fraction > uq.MEASURE_THRESHOLD)


@given(st.sampled_from([("heisenberg3", [1, 0, 0]), ("heisenberg3", [0, 0, 1]),
                        ("sol3", [0, 0, 1]), ("e2", [0, 0, 1])]),
       st.floats(0, 1))
def test_necessary_direction(case, s):
    name, a0 = case
    A, tr = run(name, a0, T=0.2)
    L = DIAMOND.maximizing_face(a0)
    p, q = L.vertices
    v = (1 - s) * p + s * q
    alt = tr.with_controls(np.tile(v, (len(tr), 1)))
    if verify_extremal(A, DIAMOND, alt).accepted and not np.allclose(v, tr.u[0]):
        assert uq.vanishing_measure(A, tr) > 0
        w = tr.u - v
        for a, wj in zip(tr.a, w):
            K = la.kernel_subspace(a)
            assert abs(a @ wj) < 1e-9 and A.in_normalizer(wj, K, 1e-8)


def test_split_and_classify_segments(so3):
    tr = integrate(so3, DIAMOND, [1.0, 0.2, 0.1], ControlPolicy.barycenter(), 2.0)
    bounds = uq.split_at_switches(tr)
    assert len(bounds) == len(tr.switch_times) + 1
    assert bounds[0][0] == 0 and bounds[-1][1] == len(tr)
    segs = uq.classify_segments(so3, DIAMOND, tr)
    assert len(segs) == len(bounds)
    for seg in segs:
        assert (seg.report is None) != (seg.error is None)
        json.dumps(seg.to_json())


def test_classify_vertex_examples(heis):
    cube = pn.cube(3)
    for a0 in ([1.0, 0, 0], [0, -2.0, 0]):
        rep = uq.classify_vertex(la.catalog("abelian3"), cube, a0)
        assert rep.classification == INFINITE
    rep = uq.classify_vertex(heis, cube, [1.0, 0, 0])
    assert rep.classification == INFINITE and rep.residual_of_witness <= 1e-12
    assert rep.vertex[0].dim == 2
    rep = uq.classify_vertex(heis, cube, [0, 0, 1.0])
    assert rep.classification == UNIQUE
    assert "vertex" in rep.to_json()


def test_classify_vertex_preconditions(heis):
    with pytest.raises(PreconditionError):
        uq.classify_vertex(heis, pn.cube(3), [1.0, 1.0, 0])
    with pytest.raises(PreconditionError):
        uq.classify_vertex(heis, pn.cube(3), [0, 0, 0])
    # e^1 is a vertex of the octahedron dual to the cube, but for sl2 no
    # point of the facet x = 1 makes it stationary
    with pytest.raises(PreconditionError):
        uq.classify_vertex(la.catalog("sl2"), pn.cube(3), [0, 1.0, 0])


def brute_force_vertex(A, N, a0, tol=1e-6):
    Vs = uq.dual_vertex_face(N, a0)
    L = N.psi_inverse(Vs)
    S = np.einsum("jik,k->ij", A.structure, np.asarray(a0, float))
    grid = face_grid(L.vertices, per_edge=6)
    return int(np.sum(np.max(np.abs(grid @ S.T), axis=1) <= tol))


@pytest.mark.parametrize("name", ALGEBRAS_3D)
def test_classify_vertex_matches_brute_force(name):
    A = la.catalog(name)
    for N in norms_3d().values():
        for a0 in N.dual().ball.vertices:
            hits = brute_force_vertex(A, N, a0)
            try:
                rep = uq.classify_vertex(A, N, a0)
            except PreconditionError:
                # the grid may still miss an interior stationary point, but never finds two
                assert hits <= 1
                continue
            assert (rep.classification == INFINITE) == (hits >= 2), (name, a0, hits)


def test_unique_edges_survive_brute_force():
    for name, a0 in [("heisenberg3", [0, 0, 1]), ("so3", [0, 0, 1]), ("sl2", [1, 0, 0])]:
        A, tr = run(name, a0)
        rep = uq.classify_edge(A, DIAMOND, tr)
        assert rep.classification == UNIQUE
        p, q = rep.edge[0].vertices
        for v in edge_grid(p, q, 100):
            chk = verify_extremal(A, DIAMOND, tr.with_controls(np.tile(v, (len(tr), 1))))
            assert not chk.accepted or np.allclose(v, tr.u[0], atol=1e-9)
