"""Asymmetric polyhedral norms ``F(y) = max_i alpha_i(y)``.

A :class:`PolyNorm` is built from a list of linear functionals.  When the
functionals define an asymmetric norm (every nonzero ``y`` has some
``alpha_i(y) > 0``) the unit ball is enumerated eagerly: vertices by
intersecting all ``n``-subsets of the hyperplanes ``alpha_i = 1``, facets and
the vertex/facet incidence, and from that the whole face lattice.  Functionals
that do not support a facet are dropped and listed in ``redundant``.

The dual norm lives on the dual space; its functionals are the vertices of the
primal ball, so primal facets and dual vertices (and vice versa) correspond
index for index.  That is what :meth:`PolyNorm.psi` exploits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

VERTEX_TOL = 1e-9
FACE_TOL = 1e-9
# above this many hyperplane n-subsets, redundant functionals are pruned by LP first
_MAX_SUBSETS = 50_000


class NormError(ValueError):
    """Bad input to a norm operation."""


class NormValidationError(NormError):
    """The functionals do not define an asymmetric norm."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class Validation(NamedTuple):
    ok: bool
    witness: np.ndarray | None


def affine_dim(points: np.ndarray, tol: float = VERTEX_TOL) -> int:
    points = np.atleast_2d(points)
    if len(points) <= 1:
        return 0
    diffs = points[1:] - points[0]
    return int(np.linalg.matrix_rank(diffs, tol=max(tol, 1e-12) * 10))


@dataclass(frozen=True, eq=False)
class Face:
    """A nonempty proper face of a polytope.

    ``active_facets`` is the (maximal) set of facets containing the face and
    ``vertex_ids`` indexes the polytope's vertex array.
    """

    active_facets: tuple[int, ...]
    vertex_ids: tuple[int, ...]
    vertices: np.ndarray
    dim: int

    @property
    def signature(self) -> str:
        return "-".join(str(i) for i in self.active_facets)

    def __eq__(self, other):
        if not isinstance(other, Face):
            return NotImplemented
        return self.active_facets == other.active_facets and self.vertex_ids == other.vertex_ids

    def __hash__(self):
        return hash((self.active_facets, self.vertex_ids))

    def __le__(self, other: "Face") -> bool:
        return set(self.vertex_ids) <= set(other.vertex_ids)

    def __lt__(self, other: "Face") -> bool:
        return set(self.vertex_ids) < set(other.vertex_ids)

    def __repr__(self):
        return f"Face(dim={self.dim}, facets={list(self.active_facets)}, vertices={list(self.vertex_ids)})"


def relative_interior_point(face: Face) -> np.ndarray:
    """Barycenter of the face's vertices."""
    if face is None or len(face.vertex_ids) == 0:
        raise NormError("empty face has no relative interior")
    return face.vertices.mean(axis=0)


class Polytope:
    """Unit ball ``{y : alpha_i(y) <= 1}`` with vertices, facets and incidence."""

    def __init__(self, facets: np.ndarray, vertices: np.ndarray, tol: float = VERTEX_TOL):
        self.facets = facets
        self.vertices = vertices
        self.tol = tol
        vals = vertices @ facets.T
        self._inc = np.abs(vals - 1.0) <= tol
        self.incidence = [frozenset(np.flatnonzero(row).tolist()) for row in self._inc]
        self._faces: dict[tuple, Face] = {}
        self._lattice: list[Face] | None = None

    @property
    def dim(self) -> int:
        return self.facets.shape[1]

    def _face(self, vertex_ids) -> Face:
        ids = np.zeros(len(self.vertices), dtype=bool)
        ids[list(vertex_ids)] = True
        active = np.all(self._inc[ids], axis=0)
        if not active.any():
            raise NormError("vertex set is not contained in a proper face")
        closure = np.all(self._inc[:, active], axis=1)
        key = tuple(np.flatnonzero(active).tolist())
        face = self._faces.get(key)
        if face is None:
            vid = tuple(np.flatnonzero(closure).tolist())
            verts = self.vertices[list(vid)]
            verts.setflags(write=False)
            face = Face(key, vid, verts, affine_dim(verts, self.tol))
            self._faces[key] = face
        return face

    def face_of_vertices(self, vertex_ids, *, exact: bool = True) -> Face:
        """Smallest face containing the given vertices.

        With ``exact`` the vertex set must already be a face's full vertex set.
        """
        face = self._face(vertex_ids)
        if exact and set(face.vertex_ids) != set(vertex_ids):
            raise NormError(f"vertices {sorted(vertex_ids)} do not form a face")
        return face

    def faces(self) -> list[Face]:
        """All nonempty proper faces, sorted by dimension then facet set."""
        if self._lattice is None:
            facet_sets = {frozenset(np.flatnonzero(self._inc[:, i]).tolist()) for i in range(len(self.facets))}
            seen = set(facet_sets)
            frontier = set(facet_sets)
            while frontier:
                new = {f & g for f in frontier for g in facet_sets} - seen - {frozenset()}
                seen |= new
                frontier = new
            faces = {self._face(s) for s in seen}
            self._lattice = sorted(faces, key=lambda f: (f.dim, f.active_facets))
        return self._lattice

    def contains(self, face: Face, x, tol: float = FACE_TOL) -> bool:
        """Membership of ``x`` in ``face`` using the facet inequalities."""
        vals = self.facets @ np.asarray(x, dtype=float)
        if np.any(vals > 1.0 + tol):
            return False
        return bool(np.all(np.abs(vals[list(face.active_facets)] - 1.0) <= tol))

    def is_face(self, face: Face) -> bool:
        known = self._faces.get(face.active_facets)
        if known is None:
            try:
                known = self._face(face.vertex_ids)
            except (NormError, IndexError):
                return False
        return known == face

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "facets": self.facets.tolist(),
            "incidence": [sorted(s) for s in self.incidence],
        }


def _find_witness(F: np.ndarray) -> np.ndarray | None:
    """Nonzero ``y`` with every ``alpha_i(y) <= 0``, or None."""
    m, n = F.shape
    # Stiemke: no such y iff F has full column rank and F^T lam = 0 for some lam > 0
    if np.linalg.matrix_rank(F) == n:
        res = linprog(np.zeros(m), A_eq=F.T, b_eq=np.zeros(n), bounds=[(1.0, None)] * m, method="highs")
        if res.status == 0:
            return None
    bounds = [(-1.0, 1.0)] * n
    # push deep into the cone first; this catches full-dimensional cones cleanly
    res = linprog(F.sum(axis=0), A_ub=F, b_ub=np.zeros(m), bounds=bounds, method="highs")
    if res.status == 0 and np.max(np.abs(res.x)) > 1e-7:
        return res.x
    for k in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[k] = -sign
            res = linprog(c, A_ub=F, b_ub=np.zeros(m), bounds=bounds, method="highs")
            if res.status == 0 and -res.fun > 1e-7:
                return res.x
    return None


def _prune_lp(F: np.ndarray, tol: float) -> np.ndarray:
    keep = []
    for i in range(len(F)):
        others = np.delete(F, i, axis=0)
        res = linprog(-F[i], A_ub=others, b_ub=np.ones(len(others)), bounds=[(None, None)] * F.shape[1], method="highs")
        if res.status != 0 or -res.fun > 1.0 + tol:
            keep.append(i)
    return F[keep]


def _enumerate_vertices(F: np.ndarray, tol: float) -> np.ndarray:
    m, n = F.shape
    combos = np.array(list(itertools.combinations(range(m), n)), dtype=int)
    A = F[combos]
    s = np.linalg.svd(A, compute_uv=False)
    ok = s[:, -1] > 1e-12 * np.maximum(s[:, 0], 1.0)
    sols = np.linalg.solve(A[ok], np.ones((int(ok.sum()), n, 1)))[..., 0]
    feasible = np.all(sols @ F.T <= 1.0 + tol, axis=1)
    cand = sols[feasible]
    if not len(cand):
        return np.zeros((0, n))
    # degenerate vertices come out of several subsets; keep one per cluster
    close = cdist(cand, cand, "chebyshev") <= tol
    _, label = connected_components(csr_matrix(close), directed=False)
    _, first = np.unique(label, return_index=True)
    V = cand[np.sort(first)] + 0.0  # drop negative zeros
    order = np.lexsort(V.T[::-1])
    return V[order]


class PolyNorm:
    """Polyhedral asymmetric norm on R^n given by functionals (rows)."""

    def __init__(self, functionals, *, tol: float = VERTEX_TOL):
        F = np.atleast_2d(np.asarray(functionals, dtype=float))
        if F.ndim != 2 or F.shape[0] < 1 or F.shape[1] < 1:
            raise NormError("need at least one functional of positive dimension")
        if np.any(np.max(np.abs(F), axis=1) == 0):
            raise NormError("functionals must be nonzero")
        uniq: list[np.ndarray] = []
        for row in F:
            if not any(np.max(np.abs(row - q)) <= tol for q in uniq):
                uniq.append(row)
        self.tol = tol
        self.raw = np.array(uniq)
        self.dim = F.shape[1]
        witness = _find_witness(self.raw)
        self._validation = Validation(witness is None, witness)
        self._ball: Polytope | None = None
        self._dual: PolyNorm | None = None
        self._dual_vertex_of_facet: np.ndarray | None = None
        self.redundant = np.zeros((0, self.dim))
        self.functionals = self.raw
        if witness is None:
            self._build_ball()

    def _build_ball(self):
        F = self.raw
        if math.comb(len(F), self.dim) > _MAX_SUBSETS:
            F = _prune_lp(F, self.tol)
        V = _enumerate_vertices(F, self.tol)
        inc = np.abs(V @ F.T - 1.0) <= self.tol
        keep = [i for i in range(len(F)) if inc[:, i].sum() >= self.dim and affine_dim(V[inc[:, i]], self.tol) == self.dim - 1]
        kept = F[keep]
        self.redundant = np.array([r for r in self.raw if not any(np.max(np.abs(r - k)) <= self.tol for k in kept)]).reshape(-1, self.dim)
        self.functionals = kept
        self.functionals.setflags(write=False)
        V.setflags(write=False)
        self._ball = Polytope(kept, V, self.tol)

    def __repr__(self):
        return f"PolyNorm(dim={self.dim}, functionals={len(self.functionals)})"

    def __call__(self, y) -> float:
        return self.eval(y)

    def eval(self, y) -> float:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise NormError(f"vector has dimension {y.shape[-1]}, norm has {self.dim}")
        return np.max(y @ self.functionals.T, axis=-1)

    def validate(self) -> Validation:
        return self._validation

    @property
    def ball(self) -> Polytope:
        if self._ball is None:
            raise NormValidationError("functionals do not define an asymmetric norm", self._validation.witness)
        return self._ball

    def unit_ball(self) -> Polytope:
        return self.ball

    # -- duality ------------------------------------------------------------

    def dual(self) -> "PolyNorm":
        """Dual norm ``F*(a) = max over ball vertices v of a(v)``.

        Built from polarity, with no enumeration: the dual ball's facets are
        the primal vertices and its vertices are the irredundant functionals.
        """
        if self._dual is None:
            ball = self.ball
            order = np.lexsort(ball.facets.T[::-1])
            dual = object.__new__(PolyNorm)
            dual.tol = self.tol
            dual.dim = self.dim
            dual.raw = dual.functionals = ball.vertices
            dual.redundant = np.zeros((0, self.dim))
            dual._validation = Validation(True, None)
            verts = ball.facets[order]
            verts.setflags(write=False)
            dual._ball = Polytope(ball.vertices, verts, self.tol)
            dual._dual = self
            dual._dual_vertex_of_facet = np.arange(len(ball.vertices))
            match = np.empty(len(order), dtype=int)
            match[order] = np.arange(len(order))
            self._dual = dual
            self._dual_vertex_of_facet = match
        return self._dual

    def dual_eval(self, a) -> float:
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != self.dim:
            raise NormError(f"covector has dimension {a.shape[-1]}, norm has {self.dim}")
        return np.max(a @ self.ball.vertices.T, axis=-1)

    def maximizing_face(self, a, tol: float = FACE_TOL) -> Face:
        """Face of the unit sphere on which the covector ``a`` is maximal."""
        a = np.asarray(a, dtype=float)
        if a.shape != (self.dim,):
            raise NormError(f"covector must have shape ({self.dim},)")
        if not np.any(a):
            raise NormError("the zero covector has no maximizing face")
        vals = self.ball.vertices @ a
        mx = vals.max()
        ids = np.flatnonzero(vals >= mx - tol * abs(mx))
        return self.ball.face_of_vertices(ids, exact=False)

    def psi(self, face: Face) -> Face:
        """Dual face ``{a in S_F* : a(v) = 1 for all v in face}``."""
        if not self.ball.is_face(face):
            raise NormError(f"{face!r} is not a face of this unit ball")
        dual = self.dual()
        ids = [int(self._dual_vertex_of_facet[i]) for i in face.active_facets]
        return dual.ball.face_of_vertices(ids)

    def psi_inverse(self, dual_face: Face) -> Face:
        """Primal face ``{v in S_F : a(v) = 1 for all a in dual_face}``."""
        dual = self.dual()
        if not dual.ball.is_face(dual_face):
            raise NormError(f"{dual_face!r} is not a face of the dual unit ball")
        # dual facet j is the functional given by primal vertex j
        return self.ball.face_of_vertices(list(dual_face.active_facets))

    def on_face(self, face: Face, y, tol: float = FACE_TOL) -> bool:
        return self.ball.contains(face, y, tol)

    def to_json(self) -> dict:
        return {"dim": self.dim, "functionals": self.functionals.tolist()}


def combine(n1: PolyNorm, n2: PolyNorm, a1: float, a2: float) -> PolyNorm:
    """The norm ``a1 F1 + a2 F2`` via pairwise sums of functionals."""
    if n1.dim != n2.dim:
        raise NormError("norms live in different dimensions")
    if not (a1 > 0 and a2 > 0):
        raise NormError("combination weights must be strictly positive")
    F = (a1 * n1.functionals[:, None, :] + a2 * n2.functionals[None, :, :]).reshape(-1, n1.dim)
    # cancelling pairs give zero rows, which never attain the max
    F = F[np.max(np.abs(F), axis=1) > 0]
    return PolyNorm(F, tol=max(n1.tol, n2.tol))


def from_json(desc: dict) -> PolyNorm:
    if not isinstance(desc, dict):
        raise NormError("norm descriptor must be an object")
    if "catalog" in desc:
        extra = set(desc) - {"catalog", "dim"}
        if extra:
            raise NormError(f"unexpected keys in norm descriptor: {sorted(extra)}")
        try:
            return catalog(desc["catalog"], int(desc.get("dim", 3)))
        except KeyError as exc:
            raise NormError(str(exc)) from None
    extra = set(desc) - {"dim", "functionals"}
    if extra:
        raise NormError(f"unexpected keys in norm descriptor: {sorted(extra)}")
    try:
        F = np.asarray(desc["functionals"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise NormError("norm descriptor needs numeric 'functionals'") from None
    if F.ndim != 2:
        raise NormError("functionals must be a list of equal-length rows")
    if "dim" in desc and int(desc["dim"]) != F.shape[1]:
        raise NormError("functional length does not match dim")
    return PolyNorm(F)


# -- a few standard balls, handy as fixtures -----------------------------------


def cube(n: int) -> PolyNorm:
    """Max norm: functionals ``+-e^i``; the ball is a cube."""
    eye = np.eye(n)
    return PolyNorm(np.vstack([eye, -eye]))


def cross_polytope(n: int) -> PolyNorm:
    """l1 norm: functionals ``(+-1, ..., +-1)``; the ball is a cross-polytope."""
    return PolyNorm(np.array(list(itertools.product((1.0, -1.0), repeat=n))))


def diamond_prism() -> PolyNorm:
    """``max(|y1| + |y2|, |y2| + |y3|)`` on R^3.

    Its dual ball has edges through ``e^1`` and ``e^3`` whose primal faces are
    the edges ``{(1, 0, s)}`` and ``{(s, 0, 1)}`` centred on ``e1`` and ``e3``.
    """
    rows = [(s1, s2, 0.0) for s1 in (1, -1) for s2 in (1, -1)]
    rows += [(0.0, s2, s3) for s2 in (1, -1) for s3 in (1, -1)]
    return PolyNorm(np.array(rows, dtype=float))


def skew_box(n: int, forward: float = 1.0, backward: float = 2.0) -> PolyNorm:
    """Asymmetric box: ``-1/backward <= y_i <= 1/forward`` per coordinate."""
    eye = np.eye(n)
    return PolyNorm(np.vstack([forward * eye, -backward * eye]))


_NORMS = {"cube": cube, "cross": cross_polytope, "skew_box": skew_box}


def catalog(name: str, dim: int = 3) -> PolyNorm:
    if name == "diamond_prism":
        if dim != 3:
            raise KeyError("diamond_prism is three-dimensional")
        return diamond_prism()
    if name not in _NORMS:
        raise KeyError(f"unknown norm {name!r}; known: {', '.join(sorted(_NORMS) + ['diamond_prism'])}")
    return _NORMS[name](dim)
