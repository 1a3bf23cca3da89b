"""JSON serialization of frame descriptions and solutions."""

from __future__ import annotations

import json
from pathlib import Path

from .element import MaterialParams
from .frame import FrameModel, GlobalSolution, Member, PointLoad, Support

__all__ = [
    "frame_to_dict",
    "frame_from_dict",
    "read_frame",
    "write_frame",
    "solution_to_dict",
    "write_solution",
]

SCHEMA_VERSION = 1


def _material_to_dict(material: MaterialParams) -> dict:
    return {
        "E": material.elastic_modulus,
        "A": material.cross_section_area,
        "I": material.inertia_moment,
    }


def _material_from_dict(data: dict) -> MaterialParams:
    return MaterialParams(
        elastic_modulus=data["E"],
        cross_section_area=data["A"],
        inertia_moment=data["I"],
    )


def frame_to_dict(model: FrameModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "nodes": [{"id": i, "x": x, "y": y} for i, (x, y) in enumerate(model.nodes)],
        "members": [
            {
                "node_i": m.node_i,
                "node_j": m.node_j,
                "material": _material_to_dict(m.material),
                "n_elements": m.n_elements,
                "order": m.order,
                "distributed": list(m.distributed),
            }
            for m in model.members
        ],
        "supports": [
            {"node": s.node, "ux": s.ux, "uy": s.uy, "theta": s.theta} for s in model.supports
        ],
        "point_loads": [
            {"node": p.node, "fx": p.fx, "fy": p.fy, "moment": p.moment} for p in model.point_loads
        ],
    }


def frame_from_dict(data: dict, order: int | None = None, n_elements: int | None = None) -> FrameModel:
    """Rebuild a model; optional overrides replace every member's values."""
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported frame schema: {data.get('schema_version')}")
    nodes_by_id = {entry["id"]: (entry["x"], entry["y"]) for entry in data["nodes"]}
    nodes = tuple(nodes_by_id[i] for i in sorted(nodes_by_id))
    members = tuple(
        Member(
            node_i=m["node_i"],
            node_j=m["node_j"],
            material=_material_from_dict(m["material"]),
            n_elements=n_elements if n_elements is not None else m.get("n_elements", 1),
            order=order if order is not None else m.get("order", 3),
            distributed=tuple(m.get("distributed", ())),
        )
        for m in data["members"]
    )
    supports = tuple(
        Support(node=s["node"], ux=s.get("ux", False), uy=s.get("uy", False), theta=s.get("theta", False))
        for s in data["supports"]
    )
    loads = tuple(
        PointLoad(node=p["node"], fx=p.get("fx", 0.0), fy=p.get("fy", 0.0), moment=p.get("moment", 0.0))
        for p in data.get("point_loads", ())
    )
    return FrameModel(nodes=nodes, members=members, supports=supports, point_loads=loads)


def read_frame(path, order: int | None = None, n_elements: int | None = None) -> FrameModel:
    return frame_from_dict(json.loads(Path(path).read_text()), order=order, n_elements=n_elements)


def write_frame(model: FrameModel, path) -> None:
    Path(path).write_text(json.dumps(frame_to_dict(model), indent=2) + "\n")


def solution_to_dict(solution: GlobalSolution) -> dict:
    mesh = solution.mesh
    return {
        "schema_version": SCHEMA_VERSION,
        "frame": frame_to_dict(mesh.model),
        "n_dofs": mesh.n_dofs,
        "dof_values": solution.dof_values.tolist(),
        "node_displacements": [
            {
                "node": i,
                "x": float(mesh.node_coords[i, 0]),
                "y": float(mesh.node_coords[i, 1]),
                "ux": float(solution.dof_values[3 * i]),
                "uy": float(solution.dof_values[3 * i + 1]),
                "theta": float(solution.dof_values[3 * i + 2]),
            }
            for i in range(mesh.n_nodes)
        ],
        "elements": [
            {
                "member": elem.member,
                "index": elem.index,
                "node_a": elem.node_a,
                "node_b": elem.node_b,
                "length": elem.length,
                "axial": solution.element_axial[i].tolist(),
                "transverse_coefficients": solution.element_coefficients[i].tolist(),
            }
            for i, elem in enumerate(mesh.elements)
        ],
        "residual_norm": solution.residual_norm,
        "load_norm": solution.load_norm,
    }


def write_solution(solution: GlobalSolution, path) -> None:
    Path(path).write_text(json.dumps(solution_to_dict(solution)) + "\n")
