"""Planar frame models built from virtual beam elements.

A :class:`FrameModel` describes the structure at member level (node pairs,
material, subdivision count, element order, distributed transverse load in
member-local coordinates).  :func:`discretize` expands it into a
:class:`Mesh` of elements with three DOFs per node (ux, uy, theta in the
global frame) plus the internal-moment DOFs appended after all nodal DOFs.
:func:`assemble_and_solve` runs the direct stiffness method with supports
imposed by row/column elimination and returns the solved displacement state
together with the projected deflection polynomial of every element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .element import (
    ElementSpec,
    LoadSpec,
    MaterialParams,
    axial_stiffness,
    element_load,
    element_stiffness,
    projected_polynomial,
)

__all__ = [
    "Member",
    "Support",
    "PointLoad",
    "FrameModel",
    "MeshElement",
    "Mesh",
    "GlobalSolution",
    "SingularModelError",
    "SolveAccuracyError",
    "build_portico",
    "discretize",
    "transform_element",
    "assemble_system",
    "assemble_and_solve",
]

# relative residual allowed on the reduced system after refinement
_RESIDUAL_TOLERANCE = 1e-9


class SingularModelError(ValueError):
    """The reduced stiffness is singular: the structure has a free mechanism."""


class SolveAccuracyError(RuntimeError):
    """The direct solve could not reach the required residual tolerance."""


@dataclass(frozen=True)
class Member:
    """A straight prismatic member subdivided into equal-length elements."""

    node_i: int
    node_j: int
    material: MaterialParams
    n_elements: int = 1
    order: int = 3
    distributed: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.n_elements < 1:
            raise ValueError("members need at least one element")
        if self.order < 3:
            raise ValueError("element order must be at least 3")
        if self.distributed and len(self.distributed) > self.order - 3:
            raise ValueError(
                f"distributed load of degree {len(self.distributed) - 1} requires "
                f"order >= {len(self.distributed) + 3}, member has order {self.order}"
            )


@dataclass(frozen=True)
class Support:
    """Constrained displacement components of one node (True = fixed)."""

    node: int
    ux: bool = False
    uy: bool = False
    theta: bool = False


@dataclass(frozen=True)
class PointLoad:
    """Concentrated nodal load in global components."""

    node: int
    fx: float = 0.0
    fy: float = 0.0
    moment: float = 0.0


@dataclass(frozen=True)
class FrameModel:
    """Member-level description of a planar frame."""

    nodes: tuple[tuple[float, float], ...]
    members: tuple[Member, ...]
    supports: tuple[Support, ...]
    point_loads: tuple[PointLoad, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.nodes)
        for member in self.members:
            if not (0 <= member.node_i < n and 0 <= member.node_j < n):
                raise ValueError(f"member references unknown node: {member}")
            if self.member_length(member) <= 0.0:
                raise ValueError(f"member has zero length: {member}")
        for support in self.supports:
            if not 0 <= support.node < n:
                raise ValueError(f"support references unknown node {support.node}")
        for load in self.point_loads:
            if not 0 <= load.node < n:
                raise ValueError(f"point load references unknown node {load.node}")

    def member_length(self, member: Member) -> float:
        xi, yi = self.nodes[member.node_i]
        xj, yj = self.nodes[member.node_j]
        return math.hypot(xj - xi, yj - yi)


@dataclass(frozen=True)
class MeshElement:
    """One element of the discretized frame, in member-local coordinates."""

    member: int
    index: int
    node_a: int
    node_b: int
    offset: float
    spec: ElementSpec
    load: LoadSpec
    cos: float
    sin: float

    @property
    def length(self) -> float:
        return self.spec.length


@dataclass(frozen=True)
class Mesh:
    """Discretized frame: node table, element table and the DOF map.

    Nodal DOFs come first, three per node in node order; the internal-moment
    DOFs of all elements follow, element by element.
    """

    model: FrameModel
    node_coords: np.ndarray
    elements: tuple[MeshElement, ...]
    support_flags: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_node_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def n_dofs(self) -> int:
        return self.n_node_dofs + sum(e.spec.n_moments for e in self.elements)

    def node_dofs(self, node: int) -> np.ndarray:
        base = 3 * node
        return np.array([base, base + 1, base + 2])

    def moment_dofs(self, element_index: int) -> np.ndarray:
        start = self.n_node_dofs
        for i, elem in enumerate(self.elements):
            if i == element_index:
                return np.arange(start, start + elem.spec.n_moments)
            start += elem.spec.n_moments
        raise IndexError(element_index)

    def element_dofs(self, element_index: int) -> np.ndarray:
        elem = self.elements[element_index]
        return np.concatenate(
            [self.node_dofs(elem.node_a), self.node_dofs(elem.node_b), self.moment_dofs(element_index)]
        )

    def constrained_dofs(self) -> np.ndarray:
        fixed = []
        for support in self.model.supports:
            base = 3 * support.node
            if support.ux:
                fixed.append(base)
            if support.uy:
                fixed.append(base + 1)
            if support.theta:
                fixed.append(base + 2)
        return np.unique(np.array(fixed, dtype=int))

    def signature(self) -> tuple:
        return (
            tuple(map(tuple, np.round(self.node_coords, 12))),
            tuple((e.node_a, e.node_b, e.spec.order) for e in self.elements),
        )


def _shift_polynomial(coeffs: tuple[float, ...], offset: float) -> tuple[float, ...]:
    """Re-expand q(x) around x - offset, so q_elem(t) = q_member(offset + t)."""
    if not coeffs:
        return ()
    shifted = np.polynomial.Polynomial(coeffs)(np.polynomial.Polynomial([offset, 1.0]))
    out = list(shifted.coef)
    while len(out) < len(coeffs):
        out.append(0.0)
    return tuple(float(c) for c in out[: len(coeffs)])


def discretize(model: FrameModel) -> Mesh:
    """Expand members into elements, appending the interior nodes."""
    coords = [tuple(map(float, xy)) for xy in model.nodes]
    elements: list[MeshElement] = []
    for mi, member in enumerate(model.members):
        xi, yi = model.nodes[member.node_i]
        xj, yj = model.nodes[member.node_j]
        length = model.member_length(member)
        cos, sin = (xj - xi) / length, (yj - yi) / length
        h = length / member.n_elements
        chain = [member.node_i]
        for k in range(1, member.n_elements):
            coords.append((xi + cos * h * k, yi + sin * h * k))
            chain.append(len(coords) - 1)
        chain.append(member.node_j)
        spec = ElementSpec(member.order, h, member.material)
        for k in range(member.n_elements):
            offset = h * k
            elements.append(
                MeshElement(
                    member=mi,
                    index=k,
                    node_a=chain[k],
                    node_b=chain[k + 1],
                    offset=offset,
                    spec=spec,
                    load=LoadSpec(distributed=_shift_polynomial(member.distributed, offset)),
                    cos=cos,
                    sin=sin,
                )
            )
    flags = np.zeros(len(coords), dtype=bool)
    for support in model.supports:
        flags[support.node] = True
    return Mesh(
        model=model,
        node_coords=np.array(coords, dtype=float),
        elements=tuple(elements),
        support_flags=flags,
    )


def local_element_matrices(elem: MeshElement) -> tuple[np.ndarray, np.ndarray]:
    """Combined local stiffness and load, DOFs [u1, w1, t1, u2, w2, t2, m...]."""
    m = elem.spec.n_moments
    size = 6 + m
    k = np.zeros((size, size))
    f = np.zeros(size)
    bend = [1, 2, 4, 5, *range(6, size)]
    k[np.ix_(bend, bend)] = element_stiffness(elem.spec)
    f[bend] = element_load(elem.spec, elem.load)
    k[np.ix_([0, 3], [0, 3])] += axial_stiffness(elem.spec)
    return k, f


def _rotation_blocks(size: int, cos: float, sin: float) -> np.ndarray:
    rot = np.array([[cos, sin, 0.0], [-sin, cos, 0.0], [0.0, 0.0, 1.0]])
    t = np.eye(size)
    t[0:3, 0:3] = rot
    t[3:6, 3:6] = rot
    return t


def transform_element(
    stiffness: np.ndarray, load: np.ndarray, angle: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rotate local nodal (u, w, theta) blocks into the global frame.

    Rotations and internal moments are invariant; only the two translational
    components of each node rotate.
    """
    t = _rotation_blocks(stiffness.shape[0], math.cos(angle), math.sin(angle))
    return t.T @ stiffness @ t, t.T @ load


def assemble_system(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Global stiffness and load vector over all DOFs (supports not applied)."""
    n = mesh.n_dofs
    stiffness = np.zeros((n, n))
    load = np.zeros(n)
    for ei, elem in enumerate(mesh.elements):
        k_local, f_local = local_element_matrices(elem)
        t = _rotation_blocks(k_local.shape[0], elem.cos, elem.sin)
        k_global = t.T @ k_local @ t
        f_global = t.T @ f_local
        dofs = mesh.element_dofs(ei)
        stiffness[np.ix_(dofs, dofs)] += k_global
        load[dofs] += f_global
    for point in mesh.model.point_loads:
        base = 3 * point.node
        load[base] += point.fx
        load[base + 1] += point.fy
        load[base + 2] += point.moment
    return stiffness, load


def _extended_residual(matrix: np.ndarray, solution: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """f - K u accumulated in extended precision, chunked to bound memory."""
    u = solution.astype(np.longdouble)
    out = rhs.astype(np.longdouble)
    chunk = max(1, 2_000_000 // max(1, matrix.shape[1]))
    for start in range(0, matrix.shape[0], chunk):
        block = matrix[start : start + chunk].astype(np.longdouble)
        out[start : start + chunk] -= block @ u
    return out.astype(float)


def _describe_dof(mesh: Mesh, dof: int) -> str:
    if dof < mesh.n_node_dofs:
        node, comp = divmod(dof, 3)
        return f"node {node} {('ux', 'uy', 'theta')[comp]}"
    offset = mesh.n_node_dofs
    for ei, elem in enumerate(mesh.elements):
        if dof < offset + elem.spec.n_moments:
            return f"element {ei} internal moment {dof - offset}"
        offset += elem.spec.n_moments
    return f"dof {dof}"


def _raise_mechanism(mesh: Mesh, k_ff: np.ndarray, free: np.ndarray) -> None:
    eigenvalues, eigenvectors = np.linalg.eigh(k_ff)
    mode = eigenvectors[:, 0]
    worst = free[int(np.argmax(np.abs(mode)))]
    raise SingularModelError(
        "reduced stiffness is singular (smallest eigenvalue "
        f"{eigenvalues[0]:.3e}); unconstrained mechanism dominated by {_describe_dof(mesh, worst)}"
    )


@dataclass(frozen=True)
class GlobalSolution:
    """Solved displacement state of a frame.

    ``dof_values`` covers every DOF (constrained entries exactly zero);
    ``element_axial`` holds the local end displacements (u1, u2) and
    ``element_coefficients`` the projected transverse polynomial of each
    element in its local coordinate.
    """

    mesh: Mesh
    dof_values: np.ndarray
    element_axial: np.ndarray
    element_coefficients: tuple[np.ndarray, ...]
    residual_norm: float
    load_norm: float

    def node_displacement(self, node: int) -> np.ndarray:
        return self.dof_values[3 * node : 3 * node + 3]


def assemble_and_solve(model: FrameModel, mesh: Mesh | None = None) -> GlobalSolution:
    """Direct stiffness solve with supports removed by elimination."""
    mesh = mesh if mesh is not None else discretize(model)
    stiffness, load = assemble_system(mesh)
    fixed = mesh.constrained_dofs()
    free = np.setdiff1d(np.arange(mesh.n_dofs), fixed)
    k_ff = stiffness[np.ix_(free, free)]
    f_f = load[free]
    load_norm = float(np.linalg.norm(f_f))
    # symmetric Jacobi equilibration: mixed DOF kinds (translations,
    # rotations, internal moments) put several orders of magnitude between
    # diagonal entries, and scaling them out saves digits at fine meshes
    diagonal = np.diag(k_ff).copy()
    scale = np.where(diagonal > 0.0, 1.0 / np.sqrt(np.where(diagonal > 0.0, diagonal, 1.0)), 1.0)
    k_scaled = k_ff * scale[:, None] * scale[None, :]
    try:
        factor = cho_factor(k_scaled, lower=True, check_finite=False)
    except LinAlgError:
        _raise_mechanism(mesh, k_ff, free)

    def solve(rhs):
        return scale * cho_solve(factor, scale * rhs, check_finite=False)

    u_f = solve(f_f)
    # mixed-precision refinement: residuals evaluated in extended precision,
    # otherwise their own rounding hides whether u is accurate
    residual = _extended_residual(k_ff, u_f, f_f)
    residual_norm = float(np.linalg.norm(residual))
    for _ in range(4):
        if residual_norm <= 1e-13 * max(load_norm, 1e-300):
            break
        candidate = u_f + solve(residual)
        candidate_residual = _extended_residual(k_ff, candidate, f_f)
        candidate_norm = float(np.linalg.norm(candidate_residual))
        if candidate_norm >= residual_norm:
            break
        u_f, residual, residual_norm = candidate, candidate_residual, candidate_norm
    # no float64 vector can have a residual below eps * || |K| |u| ||, so the
    # tolerance is widened by that representability floor
    floor = float(np.finfo(float).eps * np.linalg.norm(np.abs(k_ff) @ np.abs(u_f)))
    if load_norm > 0.0 and residual_norm > _RESIDUAL_TOLERANCE * load_norm + 8.0 * floor:
        raise SolveAccuracyError(
            f"relative residual {residual_norm / load_norm:.3e} exceeds {_RESIDUAL_TOLERANCE:.0e} "
            "beyond the float64 representability floor"
        )

    values = np.zeros(mesh.n_dofs)
    values[free] = u_f
    axial = np.zeros((len(mesh.elements), 2))
    coefficients = []
    for ei, elem in enumerate(mesh.elements):
        ga = values[3 * elem.node_a : 3 * elem.node_a + 3]
        gb = values[3 * elem.node_b : 3 * elem.node_b + 3]
        c, s = elem.cos, elem.sin
        u1, w1 = c * ga[0] + s * ga[1], -s * ga[0] + c * ga[1]
        u2, w2 = c * gb[0] + s * gb[1], -s * gb[0] + c * gb[1]
        bending = np.concatenate([[w1, ga[2], w2, gb[2]], values[mesh.moment_dofs(ei)]])
        axial[ei] = (u1, u2)
        coefficients.append(projected_polynomial(elem.spec, bending))
    return GlobalSolution(
        mesh=mesh,
        dof_values=values,
        element_axial=axial,
        element_coefficients=tuple(coefficients),
        residual_norm=residual_norm,
        load_norm=load_norm,
    )


def build_portico(
    beam_length: float = 2.0,
    elems_per_edge: int = 1,
    order: int = 3,
    material: MaterialParams | None = None,
    beam_load: tuple[float, ...] = (),
    point_loads: tuple[PointLoad, ...] = (),
) -> FrameModel:
    """Rectangular frame: two vertical columns and one horizontal beam.

    All three members have the same length and subdivision; the column bases
    are pinned (translations fixed, rotation free).  ``beam_load`` is the
    distributed transverse load polynomial on the horizontal beam in its
    local coordinate, positive upward (global +y).
    """
    if elems_per_edge < 1:
        raise ValueError("elems_per_edge must be at least 1")
    material = material if material is not None else MaterialParams(1.0, 1.0, 1.0)
    size = float(beam_length)
    nodes = ((0.0, 0.0), (0.0, size), (size, size), (size, 0.0))
    members = (
        Member(0, 1, material, elems_per_edge, order),
        Member(1, 2, material, elems_per_edge, order, distributed=tuple(beam_load)),
        Member(2, 3, material, elems_per_edge, order),
    )
    supports = (Support(0, ux=True, uy=True), Support(3, ux=True, uy=True))
    return FrameModel(nodes=nodes, members=members, supports=supports, point_loads=tuple(point_loads))
