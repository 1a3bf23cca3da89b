"""General-order virtual beam element for Euler-Bernoulli bending.

An element of order ``n >= 3`` carries the four classical nodal degrees of
freedom (end deflections ``w1, w2`` and rotations ``theta1, theta2``) plus
``n - 3`` internal moments, which are scaled monomial-weighted integrals of
the deflection.  The deflection is projected onto polynomials of degree
``n`` through the curvature Gram matrix, and the consistency term of that
projection is the full stiffness: in one dimension the projection has no
kernel beyond the rigid modes, so no stabilization term is added.

All closed forms use the local coordinate ``x in [0, L]``.  DOF vectors are
ordered ``[w1, theta1, w2, theta2, m0, ..., m_{n-4}]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "MaterialParams",
    "ElementSpec",
    "ProjectionSystem",
    "ElementDofVector",
    "LoadSpec",
    "monomial_integral",
    "curvature_gram",
    "projection_rhs",
    "build_projection",
    "projected_polynomial",
    "element_stiffness",
    "element_load",
    "axial_stiffness",
    "dof_vector_from_polynomial",
]


@dataclass(frozen=True)
class MaterialParams:
    """Elastic constants of a prismatic member (consistent units assumed)."""

    elastic_modulus: float
    inertia_moment: float
    cross_section_area: float

    def __post_init__(self) -> None:
        for name in ("elastic_modulus", "inertia_moment", "cross_section_area"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def flexural_rigidity(self) -> float:
        """Bending stiffness EI."""
        return self.elastic_modulus * self.inertia_moment

    @property
    def axial_rigidity(self) -> float:
        """Stretching stiffness EA."""
        return self.elastic_modulus * self.cross_section_area


@dataclass(frozen=True)
class ElementSpec:
    """A single beam element: polynomial order ``n >= 3``, length, material."""

    order: int
    length: float
    material: MaterialParams

    def __post_init__(self) -> None:
        if self.order < 3:
            raise ValueError(f"element order must be at least 3, got {self.order}")
        if not self.length > 0.0:
            raise ValueError(f"element length must be positive, got {self.length}")

    @property
    def n_moments(self) -> int:
        """Number of internal-moment degrees of freedom."""
        return self.order - 3

    @property
    def n_bending_dofs(self) -> int:
        """Total bending DOFs: 4 nodal values plus the internal moments."""
        return self.order + 1


@dataclass(frozen=True)
class ElementDofVector:
    """Bending DOFs of one element in canonical order."""

    w1: float
    theta1: float
    w2: float
    theta2: float
    moments: tuple[float, ...] = ()

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.theta1, self.w2, self.theta2, *self.moments])

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.array([self.w1, self.theta1, self.w2, self.theta2, *self.moments], dtype=dtype)

    @classmethod
    def from_array(cls, values) -> "ElementDofVector":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 4:
            raise ValueError("DOF vector needs at least [w1, theta1, w2, theta2]")
        return cls(*values[:4], moments=tuple(values[4:]))


@dataclass(frozen=True)
class LoadSpec:
    """Transverse element load.

    ``distributed`` are the polynomial coefficients of q(x) = sum q_k x^k in
    the local coordinate; an order-n element accepts at most n - 3 of them.
    ``nodal`` applies directly to (w1, theta1, w2, theta2): end point forces
    and concentrated moments.
    """

    distributed: tuple[float, ...] = ()
    nodal: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


def monomial_integral(length: float, k: int) -> float:
    """Integral of x**k over [0, length]: length**(k+1) / (k+1)."""
    if k < 0:
        raise ValueError(f"monomial degree must be non-negative, got {k}")
    if not length > 0.0:
        raise ValueError(f"integration length must be positive, got {length}")
    return length ** (k + 1) / (k + 1)


def curvature_gram(spec: ElementSpec) -> np.ndarray:
    """Gram matrix of the curvatures of x^2 ... x^n on [0, L].

    Entry for row degree j and column degree k is
    j(j-1) k(k-1) L^(j+k-3) / (j+k-3).  Symmetric positive definite.
    """
    deg = np.arange(2, spec.order + 1, dtype=float)
    factors = deg * (deg - 1.0)
    power = deg[:, None] + deg[None, :] - 3.0
    return np.outer(factors, factors) * spec.length**power / power


def projection_rhs(spec: ElementSpec) -> np.ndarray:
    """Curvature products of the test monomials, expressed through the DOFs.

    The row for p = x^j collects the boundary terms [p'' w']_0^L - [p''' w]_0^L
    written with the nodal deflections and rotations, plus the internal-moment
    term j(j-1)(j-2)(j-3) L^(j-3) m_{j-4}.  For j = 2 and j = 3 the moment
    term vanishes identically.
    """
    n, length = spec.order, spec.length
    rows = np.zeros((n - 1, n + 1))
    for i, j in enumerate(range(2, n + 1)):
        jj = float(j * (j - 1))
        if j == 2:
            rows[i, 1] = -jj  # p'' is constant, so p''(0) survives at theta1
        if j == 3:
            rows[i, 0] = jj * (j - 2)  # p''' is constant, so p'''(0) survives at w1
        rows[i, 2] = -jj * (j - 2) * length ** (j - 3)
        rows[i, 3] = jj * length ** (j - 2)
        if j >= 4:
            rows[i, 4 + j - 4] = jj * (j - 2) * (j - 3) * length ** (j - 3)
    return rows


_UNIT_MATERIAL = MaterialParams(1.0, 1.0, 1.0)


def _solve_rational(matrix: list[list[Fraction]], rhs: list[list[Fraction]]) -> list[list[Fraction]]:
    """Gaussian elimination with exact rational arithmetic (tiny systems only)."""
    n = len(matrix)
    width = len(rhs[0])
    aug = [row[:] + rhs_row[:] for row, rhs_row in zip(matrix, rhs)]
    for col in range(n):
        pivot_row = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot_row is None:
            raise ValueError("singular projection system")
        aug[col], aug[pivot_row] = aug[pivot_row], aug[col]
        pivot = aug[col][col]
        aug[col] = [v / pivot for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [v - factor * p for v, p in zip(aug[r], aug[col])]
    return [row[n : n + width] for row in aug]


@lru_cache(maxsize=None)
def _unit_projection(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Projector and projected stiffness for a unit-length element.

    Matrices for an arbitrary length factor exactly into diagonal scalings of
    the unit-length ones, which keeps short elements well conditioned.  The
    unit-length system has rational entries, so it is solved exactly and only
    rounded at the very end.
    """
    degrees = list(range(2, order + 1))
    gram = [
        [Fraction(j * (j - 1) * k * (k - 1), j + k - 3) for k in degrees] for j in degrees
    ]
    rhs: list[list[Fraction]] = []
    for j in degrees:
        row = [Fraction(0)] * (order + 1)
        if j == 2:
            row[1] = Fraction(-2)
        if j == 3:
            row[0] = Fraction(6)
        row[2] = Fraction(-j * (j - 1) * (j - 2))
        row[3] = Fraction(j * (j - 1))
        if j >= 4:
            row[4 + j - 4] = Fraction(j * (j - 1) * (j - 2) * (j - 3))
        rhs.append(row)
    projector = _solve_rational(gram, rhs)
    size = order + 1
    stiffness = [[Fraction(0)] * size for _ in range(size)]
    for a in range(size):
        for b in range(size):
            stiffness[a][b] = sum(
                projector[i][a] * gram[i][j] * projector[j][b]
                for i in range(order - 1)
                for j in range(order - 1)
            )
    return (
        np.array(projector, dtype=float),
        np.array(stiffness, dtype=float),
    )


def _dof_scaling(order: int, length: float) -> np.ndarray:
    # rotations enter the unit-length relations multiplied by L; deflections
    # and internal moments are unscaled
    scale = np.ones(order + 1)
    scale[1] = length
    scale[3] = length
    return scale


@dataclass(frozen=True)
class ProjectionSystem:
    """Projection of the element deflection onto polynomials of degree n.

    ``projector`` maps a DOF vector to the coefficients of x^2 ... x^n of the
    projected polynomial and satisfies gram @ projector = rhs.
    """

    gram: np.ndarray
    rhs: np.ndarray
    projector: np.ndarray


def build_projection(spec: ElementSpec) -> ProjectionSystem:
    """Assemble the projection system of an element."""
    unit_projector, _ = _unit_projection(spec.order)
    row_scale = spec.length ** -np.arange(2, spec.order + 1, dtype=float)
    projector = unit_projector * row_scale[:, None] * _dof_scaling(spec.order, spec.length)[None, :]
    return ProjectionSystem(curvature_gram(spec), projection_rhs(spec), projector)


def projected_polynomial(spec: ElementSpec, dofs) -> np.ndarray:
    """Coefficients (constant term first) of the projected deflection.

    The constant and linear coefficients are the left-end deflection and
    rotation; the higher coefficients come from the projection system.
    """
    values = np.asarray(dofs, dtype=float)
    if values.shape != (spec.n_bending_dofs,):
        raise ValueError(
            f"expected DOF vector of length {spec.n_bending_dofs}, got shape {values.shape}"
        )
    coeffs = np.empty(spec.order + 1)
    coeffs[0] = values[0]
    coeffs[1] = values[1]
    coeffs[2:] = build_projection(spec).projector @ values
    return coeffs


def element_stiffness(spec: ElementSpec) -> np.ndarray:
    """Bending stiffness EI * P^T G P in the DOF basis.

    Symmetric positive semidefinite of rank n - 1; the kernel is spanned by
    the DOF vectors of rigid translation and rigid rotation.
    """
    _, unit_stiffness = _unit_projection(spec.order)
    scale = _dof_scaling(spec.order, spec.length)
    factor = spec.material.flexural_rigidity / spec.length**3
    return factor * unit_stiffness * scale[:, None] * scale[None, :]


def element_load(spec: ElementSpec, load: LoadSpec) -> np.ndarray:
    """Consistent load vector for the bending DOFs.

    Distributed coefficients pair one-to-one with the internal moments: the
    entry for m_k is q_k * L^(k+1).  An order-3 element has no internal
    moments and therefore accepts point loads only.
    """
    coeffs = tuple(load.distributed)
    if len(coeffs) > spec.n_moments:
        raise ValueError(
            f"distributed load with {len(coeffs)} coefficients needs element order "
            f">= {len(coeffs) + 3}, got order {spec.order}"
        )
    vec = np.zeros(spec.n_bending_dofs)
    vec[:4] = load.nodal
    for k, q in enumerate(coeffs):
        vec[4 + k] = q * spec.length ** (k + 1)
    return vec


def axial_stiffness(spec: ElementSpec) -> np.ndarray:
    """Linear bar stiffness EA/L * [[1, -1], [-1, 1]] for the end displacements."""
    k = spec.material.axial_rigidity / spec.length
    return np.array([[k, -k], [-k, k]])


def dof_vector_from_polynomial(spec: ElementSpec, coefficients) -> np.ndarray:
    """DOF vector of a polynomial deflection w(x) = sum c_i x^i of degree <= n.

    Nodal entries are direct evaluations of w and w'; the internal moments
    are the scaled integrals L^-(k+1) * int x^k w dx in closed form.  This
    construction never touches the projection system, which makes it a
    suitable independent check of polynomial reproduction.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 1 or c.size > spec.order + 1:
        raise ValueError("coefficient vector must be 1-D with degree <= element order")
    poly = np.polynomial.Polynomial(c)
    slope = poly.deriv()
    dofs = np.empty(spec.n_bending_dofs)
    dofs[0] = poly(0.0)
    dofs[1] = slope(0.0)
    dofs[2] = poly(spec.length)
    dofs[3] = slope(spec.length)
    for m in range(spec.n_moments):
        weighted = sum(ci * monomial_integral(spec.length, m + i) for i, ci in enumerate(c))
        dofs[4 + m] = weighted / spec.length ** (m + 1)
    return dofs
