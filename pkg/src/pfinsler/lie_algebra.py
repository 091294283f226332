"""Finite-dimensional real Lie algebras given by structure constants.

The convention throughout is ``[e_i, e_j] = sum_k c[i, j, k] e_k`` for a fixed
basis ``e_1..e_n``.  Vectors are coordinate arrays in that basis, covectors are
coordinate arrays in the dual basis.  Indices are 0-based in code and 1-based in
the JSON descriptor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SUBSPACE_TOL = 1e-10
JACOBI_TOL = 1e-12


class LieAlgebraError(ValueError):
    """Invalid algebra data or mismatched dimensions."""


def _as_vector(x, dim: int, what: str = "vector") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise LieAlgebraError(f"{what} must have shape ({dim},), got {x.shape}")
    return x


def jacobi_residual(c: np.ndarray) -> float:
    """Largest entry of the Jacobi defect of ``c``, relative to ``max(1, |c|_max)^2``.

    The defect is quadratic in ``c``, so the scaling keeps the test meaningful
    after a change to a badly scaled basis.
    """
    c = np.asarray(c, dtype=float)
    if not c.size:
        return 0.0
    # J[i,j,l,k] = sum_m c[i,j,m] c[m,l,k] + cyclic(i,j,l)
    t = np.einsum("ijm,mlk->ijlk", c, c)
    jac = t + np.transpose(t, (1, 2, 0, 3)) + np.transpose(t, (2, 0, 1, 3))
    return float(np.max(np.abs(jac))) / max(1.0, float(np.max(np.abs(c)))) ** 2


def structure_in_basis(c: np.ndarray, P) -> np.ndarray:
    """Structure constants in the basis formed by the columns of ``P``."""
    P = np.asarray(P, dtype=float)
    Pinv = np.linalg.inv(P)
    return np.einsum("ia,jb,ijk,ck->abc", P, P, c, Pinv)


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """A real Lie algebra of dimension ``dim`` in a fixed basis.

    Only the entries ``structure[i, j, :]`` with ``i < j`` are read; the rest
    are rebuilt by antisymmetry.  Construction fails if the Jacobi identity is
    violated by more than ``jacobi_tol``.
    """

    structure: np.ndarray
    name: str = ""
    jacobi_tol: float = field(default=JACOBI_TOL, repr=False)

    def __post_init__(self):
        c = np.array(self.structure, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]) or c.shape[0] < 1:
            raise LieAlgebraError(f"structure constants must be an (n, n, n) array, got {c.shape}")
        iu = np.triu(np.ones(c.shape[:2], dtype=bool), k=1)
        upper = np.where(iu[:, :, None], c, 0.0)
        c = upper - np.transpose(upper, (1, 0, 2))
        res = jacobi_residual(c)
        if res > self.jacobi_tol:
            raise LieAlgebraError(f"Jacobi identity violated (residual {res:.3e})")
        c.setflags(write=False)
        object.__setattr__(self, "structure", c)

    @property
    def dim(self) -> int:
        return self.structure.shape[0]

    def __repr__(self):
        label = self.name or "custom"
        return f"LieAlgebra({label!r}, dim={self.dim})"

    # -- algebra operations -------------------------------------------------

    def bracket(self, x, y) -> np.ndarray:
        x = _as_vector(x, self.dim)
        y = _as_vector(y, self.dim)
        return np.einsum("i,j,ijk->k", x, y, self.structure)

    def ad(self, x) -> np.ndarray:
        """Matrix of ``ad(x)``: column ``j`` holds ``[x, e_j]``."""
        x = _as_vector(x, self.dim)
        return np.einsum("i,ijk->kj", x, self.structure)

    def coadjoint_rhs(self, u, a) -> np.ndarray:
        """Right-hand side of the Euler-Arnold system, ``-ad*(u)(a)``.

        Component ``i`` is ``a([u, e_i])``.
        """
        u = _as_vector(u, self.dim, "control")
        a = _as_vector(a, self.dim, "covector")
        return self.coadjoint_matrix(u) @ a

    def coadjoint_matrix(self, u) -> np.ndarray:
        """Matrix ``M`` with ``M @ a == coadjoint_rhs(u, a)``."""
        u = _as_vector(u, self.dim, "control")
        return np.einsum("j,jik->ik", u, self.structure)

    def is_subalgebra(self, S, tol: float = DEFAULT_SUBSPACE_TOL) -> bool:
        S = as_subspace(S, self.dim)
        for i, j in itertools.combinations(range(S.rank), 2):
            if not S.contains(self.bracket(S.basis[i], S.basis[j]), tol):
                return False
        return True

    def in_normalizer(self, v, S, tol: float = DEFAULT_SUBSPACE_TOL) -> bool:
        """True iff ``[v, b]`` lies in ``span(S)`` for every basis vector ``b``."""
        v = _as_vector(v, self.dim)
        S = as_subspace(S, self.dim)
        return all(S.contains(self.bracket(v, b), tol) for b in S.basis)

    def change_basis(self, P) -> "LieAlgebra":
        """Structure constants in the basis whose vectors are the columns of ``P``."""
        P = np.asarray(P, dtype=float)
        if P.shape != (self.dim, self.dim):
            raise LieAlgebraError("basis matrix has wrong shape")
        if np.linalg.matrix_rank(P) < self.dim:
            raise LieAlgebraError("basis matrix is singular")
        c = structure_in_basis(self.structure, P)
        return LieAlgebra(c, name=f"{self.name}'" if self.name else "", jacobi_tol=self.jacobi_tol)

    def direct_sum(self, other: "LieAlgebra") -> "LieAlgebra":
        n, m = self.dim, other.dim
        c = np.zeros((n + m,) * 3)
        c[:n, :n, :n] = self.structure
        c[n:, n:, n:] = other.structure
        return LieAlgebra(c, name=f"{self.name}+{other.name}")

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        brackets = []
        for i, j in itertools.combinations(range(self.dim), 2):
            coeffs = self.structure[i, j]
            if np.any(coeffs != 0):
                brackets.append([i + 1, j + 1, coeffs.tolist()])
        return {"dim": self.dim, "brackets": brackets}


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of an algebra, stored by an independent basis (rows)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.size and np.linalg.matrix_rank(B, tol=DEFAULT_SUBSPACE_TOL) < B.shape[0]:
            raise LieAlgebraError("subspace basis vectors are linearly dependent")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    def residual(self, x) -> float:
        """Distance from ``x`` to the span, via least squares."""
        x = np.asarray(x, dtype=float)
        if self.rank == 0:
            return float(np.linalg.norm(x))
        coef, *_ = np.linalg.lstsq(self.basis.T, x, rcond=None)
        return float(np.linalg.norm(self.basis.T @ coef - x))

    def contains(self, x, tol: float = DEFAULT_SUBSPACE_TOL) -> bool:
        return self.residual(x) <= tol


def as_subspace(S, dim: int) -> Subspace:
    if not isinstance(S, Subspace):
        S = Subspace(S)
    if S.basis.shape[1] != dim:
        raise LieAlgebraError(f"subspace lives in dimension {S.basis.shape[1]}, expected {dim}")
    return S


def kernel_subspace(a) -> Subspace:
    """Orthonormal basis of ``ker a`` for a nonzero covector ``a``."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise LieAlgebraError("kernel of the zero covector is requested")
    # last n-1 right-singular vectors span the orthogonal complement of a
    _, _, vt = np.linalg.svd(a[None, :])
    return Subspace(vt[1:])


# -- catalog ------------------------------------------------------------------


def _from_relations(n: int, relations: dict, name: str) -> LieAlgebra:
    c = np.zeros((n, n, n))
    for (i, j), image in relations.items():
        for k, coef in image.items():
            c[i - 1, j - 1, k - 1] = coef
    return LieAlgebra(c, name=name)


def _abelian(n: int) -> LieAlgebra:
    return LieAlgebra(np.zeros((n, n, n)), name=f"abelian{n}")


# Bases (1-based, as documented):
#   nonabelian2d  [e1,e2] = -e1
#   heisenberg3   [e1,e2] = e3
#   so3           [e1,e2] = e3, [e2,e3] = e1, [e3,e1] = e2
#   sl2           basis (h, e, f): [h,e] = 2e, [h,f] = -2f, [e,f] = h
#   e2            translations e1, e2, rotation e3: [e3,e1] = e2, [e3,e2] = -e1
#   sol3          [e1,e2] = e2, [e1,e3] = -e3
#   hyperbolic3   [e1,e2] = e2, [e1,e3] = e3
#   affine2       alias of nonabelian2d with the opposite sign: [e1,e2] = e2
_RELATIONS = {
    "nonabelian2d": (2, {(1, 2): {1: -1.0}}),
    "affine2": (2, {(1, 2): {2: 1.0}}),
    "heisenberg3": (3, {(1, 2): {3: 1.0}}),
    "so3": (3, {(1, 2): {3: 1.0}, (2, 3): {1: 1.0}, (1, 3): {2: -1.0}}),
    "sl2": (3, {(1, 2): {2: 2.0}, (1, 3): {3: -2.0}, (2, 3): {1: 1.0}}),
    "e2": (3, {(1, 3): {2: -1.0}, (2, 3): {1: 1.0}}),
    "sol3": (3, {(1, 2): {2: 1.0}, (1, 3): {3: -1.0}}),
    "hyperbolic3": (3, {(1, 2): {2: 1.0}, (1, 3): {3: 1.0}}),
}


def catalog_names() -> list[str]:
    return sorted(_RELATIONS) + ["abelian<n>"]


def catalog(name: str) -> LieAlgebra:
    """Standard algebra by name.

    ``abelian<n>`` gives the n-dimensional abelian algebra; ``a+b`` gives the
    direct sum of two catalog entries (e.g. ``heisenberg3+abelian1``).
    """
    if "+" in name:
        parts = [catalog(p.strip()) for p in name.split("+")]
        out = parts[0]
        for p in parts[1:]:
            out = out.direct_sum(p)
        return out
    if name.startswith("abelian"):
        try:
            n = int(name[len("abelian"):])
        except ValueError:
            raise KeyError(f"unknown algebra {name!r}") from None
        if n < 1:
            raise KeyError(f"unknown algebra {name!r}")
        return _abelian(n)
    if name not in _RELATIONS:
        raise KeyError(f"unknown algebra {name!r}; known: {', '.join(catalog_names())}")
    n, rel = _RELATIONS[name]
    return _from_relations(n, rel, name)


def from_json(desc: dict, jacobi_tol: float = JACOBI_TOL) -> LieAlgebra:
    """Parse ``{"catalog": name}`` or ``{"dim": n, "brackets": [[i, j, [..]], ...]}``."""
    if not isinstance(desc, dict):
        raise LieAlgebraError("algebra descriptor must be an object")
    if "catalog" in desc:
        if set(desc) != {"catalog"}:
            raise LieAlgebraError(f"unexpected keys in algebra descriptor: {sorted(set(desc) - {'catalog'})}")
        try:
            return catalog(desc["catalog"])
        except KeyError as exc:
            raise LieAlgebraError(str(exc)) from None
    extra = set(desc) - {"dim", "brackets", "name"}
    if extra:
        raise LieAlgebraError(f"unexpected keys in algebra descriptor: {sorted(extra)}")
    try:
        n = int(desc["dim"])
    except (KeyError, TypeError, ValueError):
        raise LieAlgebraError("algebra descriptor needs an integer 'dim'") from None
    if n < 1:
        raise LieAlgebraError("dim must be positive")
    c = np.zeros((n, n, n))
    for entry in desc.get("brackets", []):
        try:
            i, j, coeffs = entry
            i, j = int(i), int(j)
        except (TypeError, ValueError):
            raise LieAlgebraError(f"malformed bracket entry {entry!r}") from None
        if not (1 <= i <= n and 1 <= j <= n) or i == j:
            raise LieAlgebraError(f"bracket indices out of range: {entry!r}")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (n,):
            raise LieAlgebraError(f"bracket [{i},{j}] needs {n} coefficients")
        if i < j:
            c[i - 1, j - 1] = coeffs
        else:
            c[j - 1, i - 1] = -coeffs
    return LieAlgebra(c, name=str(desc.get("name", "")), jacobi_tol=jacobi_tol)


def _E(d: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((d, d))
    m[i, j] = 1.0
    return m


def matrix_representation(name: str) -> np.ndarray:
    """Faithful matrices ``R[k]`` for the catalog basis, ``[R_i, R_j] = sum c_ijk R_k``."""
    if name.startswith("abelian"):
        n = catalog(name).dim
        # translations of R^n as affine (n+1)x(n+1) matrices
        return np.array([_E(n + 1, i, n) for i in range(n)])
    reps = {
        "nonabelian2d": [_E(2, 0, 1), _E(2, 0, 0)],
        "affine2": [_E(2, 0, 0), _E(2, 0, 1)],
        "heisenberg3": [_E(3, 0, 1), _E(3, 1, 2), _E(3, 0, 2)],
        "so3": [_E(3, 2, 1) - _E(3, 1, 2), _E(3, 0, 2) - _E(3, 2, 0), _E(3, 1, 0) - _E(3, 0, 1)],
        "sl2": [_E(2, 0, 0) - _E(2, 1, 1), _E(2, 0, 1), _E(2, 1, 0)],
        "e2": [_E(3, 0, 2), _E(3, 1, 2), _E(3, 1, 0) - _E(3, 0, 1)],
        "sol3": [_E(3, 0, 0) - _E(3, 1, 1), _E(3, 0, 2), _E(3, 1, 2)],
        "hyperbolic3": [_E(3, 0, 0) + _E(3, 1, 1), _E(3, 0, 2), _E(3, 1, 2)],
    }
    if name not in reps:
        raise KeyError(f"no matrix representation for {name!r}")
    return np.array(reps[name])


def representation_residual(A: LieAlgebra, rep) -> float:
    """Largest entry of ``[R_i, R_j] - sum_k c_ijk R_k`` over all pairs."""
    R = np.asarray(rep, dtype=float)
    if R.ndim != 3 or R.shape[0] != A.dim or R.shape[1] != R.shape[2]:
        raise LieAlgebraError(f"representation must be {A.dim} square matrices")
    comm = np.einsum("iab,jbc->ijac", R, R) - np.einsum("jab,ibc->ijac", R, R)
    image = np.einsum("ijk,kac->ijac", A.structure, R)
    return float(np.max(np.abs(comm - image)))
