"""Displacement fields over a frame mesh and the H1 error between them.

A displacement field is anything that can report, for an element index and
local coordinates along that element, the member-local (axial, transverse)
displacement components and their first derivative with respect to the
member coordinate.  The error between two fields combines the L2 norm of
the difference and the L2 norm of the derivative difference, summed
componentwise over both local components and over all elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np

from .frame import FrameModel, GlobalSolution, Mesh, discretize

__all__ = [
    "DisplacementField",
    "VemDisplacementField",
    "AnalyticMemberField",
    "ErrorReport",
    "h1_error",
]


class DisplacementField(Protocol):
    mesh: Mesh

    def evaluate(self, element_index: int, local_x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and derivatives, each of shape (npoints, 2): [axial, transverse]."""


class VemDisplacementField:
    """Field of a solved frame: linear axial part plus the projected polynomial."""

    def __init__(self, solution: GlobalSolution):
        self.solution = solution
        self.mesh = solution.mesh

    def evaluate(self, element_index: int, local_x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        elem = self.mesh.elements[element_index]
        x = np.asarray(local_x, dtype=float)
        u1, u2 = self.solution.element_axial[element_index]
        coeffs = self.solution.element_coefficients[element_index]
        poly = np.polynomial.Polynomial(coeffs)
        slope = poly.deriv()
        values = np.stack([u1 + (u2 - u1) * x / elem.length, poly(x)], axis=-1)
        derivatives = np.stack([np.full_like(x, (u2 - u1) / elem.length), slope(x)], axis=-1)
        return values, derivatives


class AnalyticMemberField:
    """Closed-form field given per member in the member coordinate.

    Each callable receives (member_index, x_member_array) and returns an
    array; omitted components are zero.
    """

    def __init__(
        self,
        mesh: Mesh,
        axial: Callable | None = None,
        transverse: Callable | None = None,
        axial_derivative: Callable | None = None,
        transverse_derivative: Callable | None = None,
    ):
        self.mesh = mesh
        self._axial = axial
        self._transverse = transverse
        self._axial_derivative = axial_derivative
        self._transverse_derivative = transverse_derivative

    @staticmethod
    def _apply(fn: Callable | None, member: int, x: np.ndarray) -> np.ndarray:
        if fn is None:
            return np.zeros_like(x)
        return np.asarray(fn(member, x), dtype=float)

    def evaluate(self, element_index: int, local_x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        elem = self.mesh.elements[element_index]
        x = elem.offset + np.asarray(local_x, dtype=float)
        values = np.stack(
            [self._apply(self._axial, elem.member, x), self._apply(self._transverse, elem.member, x)],
            axis=-1,
        )
        derivatives = np.stack(
            [
                self._apply(self._axial_derivative, elem.member, x),
                self._apply(self._transverse_derivative, elem.member, x),
            ],
            axis=-1,
        )
        return values, derivatives


@dataclass(frozen=True)
class ErrorReport:
    """H1 error split into its L2 and gradient parts.

    ``relative_h1`` is normalized by the H1 norm of the reference field
    (the second field passed to :func:`h1_error`).
    """

    h1_error: float
    l2_error: float
    gradient_l2_error: float
    relative_h1: float


@lru_cache(maxsize=None)
def _gauss_rule(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    points, weights = np.polynomial.legendre.leggauss(npoints)
    return points, weights


def h1_error(
    field: DisplacementField,
    reference: DisplacementField,
    mesh: Mesh | FrameModel,
    quadrature_points: int | None = None,
) -> ErrorReport:
    """Gauss-Legendre H1 error of ``field`` against ``reference`` on ``mesh``.

    Per element the rule uses ceil((2n + 1) / 2) points unless overridden,
    which integrates products of two order-n polynomials exactly.
    """
    if isinstance(mesh, FrameModel):
        mesh = discretize(mesh)
    for candidate in (field, reference):
        candidate_mesh = getattr(candidate, "mesh", None)
        if candidate_mesh is not None and candidate_mesh.signature() != mesh.signature():
            raise ValueError("field was built on a different mesh than the one supplied")
    l2_sq = 0.0
    grad_sq = 0.0
    ref_l2_sq = 0.0
    ref_grad_sq = 0.0
    for index, elem in enumerate(mesh.elements):
        npts = quadrature_points or (elem.spec.order + 1)
        xi, wi = _gauss_rule(npts)
        x = 0.5 * elem.length * (xi + 1.0)
        w = 0.5 * elem.length * wi
        values, derivatives = field.evaluate(index, x)
        ref_values, ref_derivatives = reference.evaluate(index, x)
        l2_sq += float(np.sum(w[:, None] * (values - ref_values) ** 2))
        grad_sq += float(np.sum(w[:, None] * (derivatives - ref_derivatives) ** 2))
        ref_l2_sq += float(np.sum(w[:, None] * ref_values**2))
        ref_grad_sq += float(np.sum(w[:, None] * ref_derivatives**2))
    h1 = float(np.sqrt(l2_sq + grad_sq))
    reference_norm = float(np.sqrt(ref_l2_sq + ref_grad_sq))
    if reference_norm > 0.0:
        relative = h1 / reference_norm
    else:
        relative = 0.0 if h1 == 0.0 else float("inf")
    return ErrorReport(
        h1_error=h1,
        l2_error=float(np.sqrt(l2_sq)),
        gradient_l2_error=float(np.sqrt(grad_sq)),
        relative_h1=relative,
    )
