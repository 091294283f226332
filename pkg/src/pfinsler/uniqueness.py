"""When does the vertical part ``a(t)`` of an extremal admit more than one control?

Two controls ``u`` and ``u~`` give the same ``a(t)`` iff ``a(t)([u - u~, .])``
vanishes, which forces ``u - u~`` into ``ker a(t)`` and its normalizer, i.e.
the asymptotic flag curvature vanishes in that direction.  In dimension 3
this reduces to ``ker a(t)`` being a subalgebra.  The classifiers below turn
that into verdicts for trajectories confined to an edge pair and for
stationary covectors at dual vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .curvature import VANISH_TOL, k_vanishes_3d, vanishing_directions
from .dynamics import RESIDUAL_TOL, ControlSchedule, Trajectory, verify_extremal
from .lie_algebra import LieAlgebra
from .polynorm import FACE_TOL, Face, PolyNorm, relative_interior_point

MEASURE_THRESHOLD = 0.01

UNIQUE = "unique"
INFINITE = "infinitely-many"
INCONCLUSIVE = "inconclusive"


class PreconditionError(RuntimeError):
    """Input does not meet a classifier's hypotheses."""

    def __init__(self, msg: str, index: int | None = None):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    vanishing_fraction: float
    classification: str
    witness: ControlSchedule | None = None
    residual_of_witness: float | None = None
    edge: tuple[Face, Face] | None = None
    vertex: tuple[Face, Face] | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.classification not in (UNIQUE, INFINITE, INCONCLUSIVE):
            raise ValueError(f"bad classification {self.classification!r}")

    def to_json(self, witness_csv_path=None) -> dict:
        out = {
            "vanishing_fraction": self.vanishing_fraction,
            "classification": self.classification,
            "residual_of_witness": self.residual_of_witness,
        }
        if witness_csv_path is not None:
            out["witness_csv_path"] = str(witness_csv_path)
        if self.edge is not None:
            out["edge"] = {"face_id": self.edge[0].signature, "dual_face_id": self.edge[1].signature}
        if self.vertex is not None:
            out["vertex"] = {"face_id": self.vertex[0].signature, "dual_face_id": self.vertex[1].signature}
        if self.notes:
            out["notes"] = list(self.notes)
        return out


# -- vanishing set ------------------------------------------------------------------

_EPS3 = np.zeros((3, 3, 3))
_EPS3[0, 1, 2] = _EPS3[1, 2, 0] = _EPS3[2, 0, 1] = 1.0
_EPS3[0, 2, 1] = _EPS3[2, 1, 0] = _EPS3[1, 0, 2] = -1.0


def subalgebra_defect_3d(A: LieAlgebra, a_rows) -> np.ndarray:
    """``|a([k1, k2])|`` for an orthonormal basis ``k1, k2`` of ``ker a``, ``|a| = 1``.

    The bracket form ``a([., .])`` on R^3 is ``b . (x cross y)`` for an axial
    vector ``b``; on the plane ``ker a`` the cross product is along ``a``.
    """
    a = np.atleast_2d(np.asarray(a_rows, dtype=float))
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = 0.5 * np.einsum("ijk,jkl,ml->mi", _EPS3, A.structure, a)
    return np.abs(np.einsum("mi,mi->m", b, a))


def vanishing_mask(A: LieAlgebra, a_rows, tol: float = VANISH_TOL) -> np.ndarray:
    a_rows = np.atleast_2d(np.asarray(a_rows, dtype=float))
    if A.dim == 3:
        return subalgebra_defect_3d(A, a_rows) <= tol
    return np.array([len(vanishing_directions(A, a, tol)) > 0 for a in a_rows], dtype=bool)


def vanishing_measure(A: LieAlgebra, traj: Trajectory, tol: float = VANISH_TOL) -> float:
    """Fraction of samples where the flag curvature vanishes for some ``v2``."""
    if len(traj) == 0:
        return 0.0
    return float(np.mean(vanishing_mask(A, traj.a, tol)))


# -- edge case -----------------------------------------------------------------------


def _require_dim3(A: LieAlgebra, N: PolyNorm):
    if A.dim != 3 or N.dim != 3:
        raise PreconditionError("edge and vertex classification needs dimension 3")


def edge_of(N: PolyNorm, traj: Trajectory, face_tol: float = FACE_TOL) -> Face:
    """The edge maximizing the first sample that lies inside a dual edge."""
    for j, a in enumerate(traj.a):
        face = N.maximizing_face(a, face_tol)
        if face.dim == 1:
            return face
    raise PreconditionError("no sample of the trajectory lies inside an edge of the dual sphere", 0)


def check_edge_pair(N: PolyNorm, traj: Trajectory, L: Face, face_tol: float = FACE_TOL) -> Face:
    """Raise naming the first sample with ``u`` off ``L`` or ``a`` off its dual edge."""
    if L.dim != 1:
        raise PreconditionError(f"{L!r} is not an edge")
    Ls = N.psi(L)
    r = N.dual_eval(traj.a[0])
    dual = N.dual()
    for j in range(len(traj)):
        if not N.ball.contains(L, traj.u[j], face_tol):
            raise PreconditionError(
                f"sample {j} (t = {traj.times[j]:.12g}): control {traj.u[j].tolist()} is not on edge {L.signature}", j)
        if not dual.ball.contains(Ls, traj.a[j] / r, face_tol):
            raise PreconditionError(
                f"sample {j} (t = {traj.times[j]:.12g}): covector {traj.a[j].tolist()} is off dual edge {Ls.signature}", j)
    return Ls


def construct_alternative(A: LieAlgebra, N: PolyNorm, traj: Trajectory, L: Face | None = None, *,
                          tol: float = VANISH_TOL, face_tol: float = FACE_TOL) -> ControlSchedule:
    """Controls ``u + lambda w`` that move ``u`` along ``L`` wherever the curvature vanishes.

    ``w`` is the unit direction of ``L`` and ``r`` its half length.  On the
    vanishing set ``lambda = r`` when ``u`` sits on the lower half of ``L``
    (midpoint included) and ``-r`` otherwise, so ``u + lambda w`` stays on
    ``L`` and differs from ``u``; elsewhere ``lambda = 0``.
    """
    _require_dim3(A, N)
    L = edge_of(N, traj, face_tol) if L is None else L
    check_edge_pair(N, traj, L, face_tol)
    p, q = L.vertices
    mid = 0.5 * (p + q)
    r = 0.5 * np.linalg.norm(q - p)
    w = (q - p) / (2 * r)
    lam = np.where((traj.u - mid) @ w <= 0, r, -r) * vanishing_mask(A, traj.a, tol)
    return ControlSchedule(traj.times, traj.u + lam[:, None] * w)


def classify_edge(A: LieAlgebra, N: PolyNorm, traj: Trajectory,
                  measure_threshold: float = MEASURE_THRESHOLD, tol: float = RESIDUAL_TOL, *,
                  vanish_tol: float = VANISH_TOL, face_tol: float = FACE_TOL,
                  L: Face | None = None) -> UniquenessReport:
    """Verdict for a trajectory with ``u`` on an edge ``L`` and ``a`` on its dual edge."""
    _require_dim3(A, N)
    L = edge_of(N, traj, face_tol) if L is None else L
    Ls = check_edge_pair(N, traj, L, face_tol)
    frac = vanishing_measure(A, traj, vanish_tol)
    if frac > measure_threshold:
        witness = construct_alternative(A, N, traj, L, tol=vanish_tol, face_tol=face_tol)
        check = verify_extremal(A, N, traj.with_controls(witness.controls), tol, face_tol)
        verdict = INFINITE if check.accepted else INCONCLUSIVE
        notes = () if check.accepted else ("alternative control failed verification",)
        return UniquenessReport(frac, verdict, witness, check.residual, edge=(L, Ls), notes=notes)
    verdict = UNIQUE if frac == 0 else INCONCLUSIVE
    return UniquenessReport(frac, verdict, edge=(L, Ls))


@dataclass(frozen=True)
class Segment:
    start: int
    stop: int
    t_start: float
    t_end: float
    report: UniquenessReport | None
    error: str | None = None

    def to_json(self) -> dict:
        out = {"t_start": self.t_start, "t_end": self.t_end, "samples": [self.start, self.stop]}
        if self.report is not None:
            out["report"] = self.report.to_json()
        if self.error is not None:
            out["error"] = self.error
        return out


def split_at_switches(traj: Trajectory) -> list[tuple[int, int]]:
    """Sample ranges ``[start, stop)`` between recorded face switches."""
    cuts = sorted({int(np.argmin(np.abs(traj.times - s))) for s in traj.switch_times} - {0})
    bounds = [0, *cuts, len(traj)]
    return [(b0, b1) for b0, b1 in zip(bounds, bounds[1:]) if b1 > b0]


def classify_segments(A: LieAlgebra, N: PolyNorm, traj: Trajectory,
                      measure_threshold: float = MEASURE_THRESHOLD, tol: float = RESIDUAL_TOL,
                      **kw) -> list[Segment]:
    """Classify each stretch between face switches on its own."""
    out = []
    for b0, b1 in split_at_switches(traj):
        seg = traj.segment(b0, b1)
        try:
            rep = classify_edge(A, N, seg, measure_threshold, tol, **kw)
            out.append(Segment(b0, b1, float(seg.times[0]), float(seg.times[-1]), rep))
        except PreconditionError as exc:
            out.append(Segment(b0, b1, float(seg.times[0]), float(seg.times[-1]), None, str(exc)))
    return out


# -- vertex case ---------------------------------------------------------------------


def _stationarity_matrix(A: LieAlgebra, a0) -> np.ndarray:
    """``S`` with ``S @ u == a0([u, .])``."""
    return np.einsum("jik,k->ij", A.structure, np.asarray(a0, dtype=float))


def stationarizing_control(A: LieAlgebra, L: Face, a0, tol: float = RESIDUAL_TOL) -> np.ndarray | None:
    """A point ``u`` of ``L`` with ``a0([u, .]) = 0``, or ``None``.

    Tries the vertices and barycenter first, then minimizes the max-abs
    defect over ``L`` by linear programming.
    """
    S = _stationarity_matrix(A, a0)
    for u in [*L.vertices, relative_interior_point(L)]:
        if np.max(np.abs(S @ u)) <= tol:
            return np.array(u, dtype=float)
    V = L.vertices
    k = len(V)
    SV = S @ V.T                              # defect is SV @ lam
    n = SV.shape[0]
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.block([[SV, -np.ones((n, 1))], [-SV, -np.ones((n, 1))]])
    A_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * n), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * k + [(0, None)], method="highs")
    if res.status != 0:
        return None
    u = V.T @ res.x[:k]
    return u if np.max(np.abs(S @ u)) <= tol else None


def dual_vertex_face(N: PolyNorm, a0, face_tol: float = FACE_TOL) -> Face:
    """The dual-ball vertex through ``a0 / F*(a0)``; raises if there is none."""
    a0 = np.asarray(a0, dtype=float)
    if not np.any(a0):
        raise PreconditionError("covector must be nonzero")
    a_hat = a0 / N.dual_eval(a0)
    dual = N.dual()
    dv = dual.ball.vertices
    d = np.max(np.abs(dv - a_hat), axis=1)
    j = int(np.argmin(d))
    if d[j] > face_tol * max(1.0, np.max(np.abs(dv[j]))):
        raise PreconditionError(f"{a0.tolist()} is not on a ray through a vertex of the dual sphere")
    return dual.ball.face_of_vertices([j])


def classify_vertex(A: LieAlgebra, N: PolyNorm, a0, tol: float = RESIDUAL_TOL, *,
                    vanish_tol: float = VANISH_TOL, face_tol: float = FACE_TOL,
                    T: float = 1.0) -> UniquenessReport:
    """Verdict for the constant covector ``a(t) = a0`` at a dual vertex."""
    _require_dim3(A, N)
    a0 = np.asarray(a0, dtype=float)
    Vs = dual_vertex_face(N, a0, face_tol)
    L = N.psi_inverse(Vs)
    u = stationarizing_control(A, L, a0, tol)
    if u is None:
        raise PreconditionError(f"no control on face {L.signature} keeps {a0.tolist()} stationary")
    if not k_vanishes_3d(A, a0, vanish_tol):
        return UniquenessReport(0.0, UNIQUE, vertex=(L, Vs))
    # every point of L is then stationary; pick the vertex farthest from u
    far = L.vertices[int(np.argmax(np.linalg.norm(L.vertices - u, axis=1)))]
    S = _stationarity_matrix(A, a0)
    witness = ControlSchedule([0.0, T], [far, far])
    return UniquenessReport(1.0, INFINITE, witness, float(np.max(np.abs(S @ far))), vertex=(L, Vs))
