"""Sectional curvature of left-invariant metrics and its scaled-basis asymptotics.

Given a nonzero covector ``a`` and a flagpole ``v1`` with ``a(v1) = 1``, an
adapted basis is ``B = (v1, v2, ..., vn)`` with ``v2..vn`` spanning ``ker a``.
Declaring ``B`` orthonormal gives a left-invariant metric; rescaling the kernel
vectors by ``k`` gives the family ``B^k`` whose sectional curvature
``kappa_k(v1, v2)`` is a polynomial in ``k`` of degree at most 4.  Its top
coefficient (``k^2`` slot for n = 2, ``k^4`` slot for n >= 3) is the quantity
``K_B(a)`` exposed here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lie_algebra import LieAlgebra, Subspace, structure_in_basis
from .polynorm import PolyNorm, relative_interior_point

log = logging.getLogger(__name__)

VANISH_TOL = 1e-10
BASIS_TOL = 1e-10


class CurvatureError(ValueError):
    pass


def milnor_sectional(c, i: int = 0, j: int = 1) -> float:
    """Sectional curvature of ``span{v_i, v_j}`` for an orthonormal basis.

    ``c[p, q, r]`` are the structure constants of that basis.  Indices are
    0-based.
    """
    c = np.asarray(c, dtype=float)
    if i == j:
        raise CurvatureError("sectional curvature needs two distinct basis vectors")
    A = c[i, j, :]          # alpha_{ij k}
    Bq = c[j, :, i]         # alpha_{j k i}
    C = c[:, i, j]          # alpha_{k ij}
    D = c[:, i, i] * c[:, j, j]
    terms = 0.5 * A * (-A + Bq + C) - 0.25 * (A - Bq + C) * (A + Bq - C) - D
    return float(terms.sum())


@dataclass(frozen=True, eq=False)
class AdaptedBasis:
    """Basis ``(v1, v2, ..., vn)`` with ``a(v1) = 1`` and ``v2..vn`` in ``ker a``.

    ``constants`` are the structure constants of the algebra in this basis.
    """

    a: np.ndarray
    v1: np.ndarray
    kernel: np.ndarray
    constants: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.a)

    @property
    def v2(self) -> np.ndarray:
        return self.kernel[0]

    @property
    def matrix(self) -> np.ndarray:
        """Columns are the basis vectors."""
        return np.column_stack([self.v1, *self.kernel])


def _gram_schmidt(rows: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    out: list[np.ndarray] = []
    for r in rows:
        w = r - sum((r @ q) * q for q in out) if out else r.copy()
        nrm = np.linalg.norm(w)
        if nrm > tol:
            out.append(w / nrm)
    return np.array(out)


def normalize_covector(a, norm: PolyNorm | None = None) -> np.ndarray:
    """Scale ``a`` to dual-norm 1 (or Euclidean norm 1 when no norm is given)."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise CurvatureError("covector must be nonzero")
    scale = norm.dual_eval(a) if norm is not None else np.linalg.norm(a)
    return a / scale


def adapted_basis(A: LieAlgebra, a, v1=None, v2=None, *, norm: PolyNorm | None = None,
                  kernel_basis=None) -> AdaptedBasis:
    """Build an adapted basis for the flag ``(v1, v2)`` with respect to ``a``.

    ``a`` is first normalized (see :func:`normalize_covector`).  Without ``v1``
    the flagpole is the barycenter of the maximizing face of ``norm`` (or the
    Euclidean dual of ``a`` when no norm is given).  The kernel basis is ``v2``
    followed by a Gram-Schmidt completion of ``ker a``, unless ``kernel_basis``
    is supplied explicitly (first row playing the role of ``v2``).
    """
    n = A.dim
    a = normalize_covector(a, norm)
    if a.shape != (n,):
        raise CurvatureError(f"covector must have {n} entries")
    if v1 is None:
        v1 = relative_interior_point(norm.maximizing_face(a)) if norm is not None else a / (a @ a)
        v1 = v1 / (a @ v1)
    v1 = np.asarray(v1, dtype=float)
    if abs(a @ v1 - 1.0) > BASIS_TOL:
        raise CurvatureError(f"flagpole must satisfy a(v1) = 1, got {a @ v1:.12g}")

    if kernel_basis is not None:
        K = np.atleast_2d(np.asarray(kernel_basis, dtype=float))
        if K.shape != (n - 1, n):
            raise CurvatureError(f"kernel basis must be {n - 1} vectors of length {n}")
    else:
        _, _, vt = np.linalg.svd(a[None, :])
        comp = vt[1:]
        if v2 is not None:
            v2 = np.asarray(v2, dtype=float)
            if not np.any(v2):
                raise CurvatureError("transverse edge must be nonzero")
            K = _gram_schmidt(np.vstack([v2, comp]))[: n - 1]
        else:
            K = comp
    if np.max(np.abs(K @ a)) > BASIS_TOL * max(1.0, np.max(np.linalg.norm(K, axis=1))):
        raise CurvatureError("kernel basis vectors are not in ker a")
    P = np.column_stack([v1, *K])
    if np.linalg.matrix_rank(P, tol=BASIS_TOL) < n:
        raise CurvatureError("adapted basis is not of full rank")
    consts = structure_in_basis(A.structure, P)
    return AdaptedBasis(a=a, v1=v1, kernel=K, constants=consts)


def scaled_constants(B: AdaptedBasis, k: float) -> np.ndarray:
    """Structure constants of ``B^k = (v1, k v2, ..., k vn)``.

    Each constant picks up ``k`` to the power (number of kernel vectors among
    the two bracketed slots) minus (1 if the output slot is a kernel vector).
    """
    if not k > 0:
        raise CurvatureError("scale k must be positive")
    n = B.dim
    s = np.ones(n)
    s[0] = 0.0
    power = s[:, None, None] + s[None, :, None] - s[None, None, :]
    return B.constants * np.power(float(k), power)


@dataclass(frozen=True, eq=False)
class CurvaturePolynomial:
    """``kappa_k(v1, v2) = sum_d coeffs[d] k^d``."""

    coeffs: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    dim: int

    def __call__(self, k):
        return np.polynomial.polynomial.polyval(k, self.coeffs)


def curvature_polynomial(B: AdaptedBasis) -> CurvaturePolynomial:
    al = B.constants
    n = B.dim
    coeffs = np.zeros(5)
    if n == 2:
        coeffs[2] = -al[0, 1, 0] ** 2
        coeffs[0] = -al[0, 1, 1] ** 2
    elif n >= 3:
        j = np.arange(1, n)             # kernel indices v2..vn
        j3 = np.arange(2, n)            # v3..vn
        a12j, a2j1, aj12 = al[0, 1, j], al[1, j, 0], al[j, 0, 1]
        coeffs[4] = 0.25 * np.sum(al[1, j3, 0] ** 2)
        coeffs[2] = -al[0, 1, 0] ** 2 + np.sum(a2j1 * (0.5 * a12j - 0.5 * aj12) - al[j, 0, 0] * al[j, 1, 1])
        coeffs[0] = np.sum(a12j * (-0.75 * a12j + 0.5 * aj12) + 0.25 * aj12 ** 2)
    return CurvaturePolynomial(coeffs, B.v1.copy(), B.v2.copy(), n)


def leading_coefficient(P: CurvaturePolynomial, n: int | None = None) -> float:
    """Coefficient of the fixed top slot: ``k^2`` for n = 2, ``k^4`` for n >= 3."""
    n = P.dim if n is None else n
    if n < 2:
        raise CurvatureError("flag curvature needs dimension >= 2")
    return float(P.coeffs[2] if n == 2 else P.coeffs[4])


@dataclass(frozen=True)
class FlagCurvatureReport:
    K_B: float
    vanishes: bool
    polynomial: CurvaturePolynomial
    tol: float = VANISH_TOL

    def to_json(self) -> dict:
        return {
            "K_B": self.K_B,
            "vanishes": self.vanishes,
            "tol": self.tol,
            "coefficients": self.polynomial.coeffs.tolist(),
            "v1": self.polynomial.v1.tolist(),
            "v2": self.polynomial.v2.tolist(),
            "dim": self.polynomial.dim,
        }


def flag_curvature(A: LieAlgebra, a, v1=None, v2=None, *, norm: PolyNorm | None = None,
                   tol: float = VANISH_TOL) -> FlagCurvatureReport:
    B = adapted_basis(A, a, v1, v2, norm=norm)
    P = curvature_polynomial(B)
    K = leading_coefficient(P)
    return FlagCurvatureReport(K, abs(K) < tol, P, tol)


def _kernel(a) -> Subspace:
    _, _, vt = np.linalg.svd(np.asarray(a, dtype=float)[None, :])
    return Subspace(vt[1:])


def k_vanishes(A: LieAlgebra, a, v2, tol: float = VANISH_TOL, *, norm: PolyNorm | None = None) -> bool:
    """Whether ``K(a, v2) = 0``, i.e. ``v2`` normalizes ``ker a``."""
    if A.dim < 3:
        raise CurvatureError("the normalizer criterion needs dimension >= 3")
    a = normalize_covector(a, norm)
    v2 = np.asarray(v2, dtype=float)
    if not np.any(v2):
        raise CurvatureError("transverse edge must be nonzero")
    v2 = v2 / np.linalg.norm(v2)
    if abs(a @ v2) > tol * np.linalg.norm(a):
        raise CurvatureError("v2 is not in ker a")
    verdict = A.in_normalizer(v2, _kernel(a), tol)
    K = leading_coefficient(curvature_polynomial(adapted_basis(A, a, v2=v2, norm=norm)))
    if (abs(K) < tol) != verdict:
        log.warning("normalizer test (%s) and |K_B| = %.3e disagree at tol %.1e", verdict, abs(K), tol)
    return verdict


def k_vanishes_3d(A: LieAlgebra, a, tol: float = VANISH_TOL) -> bool:
    """Three-dimensional criterion: ``K(a) = 0`` iff ``ker a`` is a subalgebra."""
    if A.dim != 3:
        raise CurvatureError("k_vanishes_3d needs a three-dimensional algebra")
    a = normalize_covector(a)
    return A.is_subalgebra(_kernel(a), tol)


def vanishing_directions(A: LieAlgebra, a, tol: float = VANISH_TOL) -> np.ndarray:
    """Basis (rows) of ``ker a ∩ N(ker a)``: every ``v2`` with ``K(a, v2) = 0``.

    With ``K`` an orthonormal basis of ``ker a`` the condition on
    ``v = sum x_i K_i`` is ``sum_i x_i a([K_i, K_j]) = 0`` for all ``j``.
    """
    a = normalize_covector(a)
    K = _kernel(a).basis
    brk = np.einsum("pi,qj,ijk,k->pq", K, K, A.structure, a)
    _, s, vt = np.linalg.svd(brk.T)
    null = vt[np.sum(s > tol):]
    return null @ K
