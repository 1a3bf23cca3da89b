"""Dataset generation: solved portico samples turned into per-node records.

One sample is a material draw (E, A, I log-uniform in configured ranges)
solved on the portico; every mesh node then yields one record with the
global reference displacement and the first derivatives of the local
displacement along each incident member, which later become the derivative
targets of the Sobolev loss.  Files are JSONL (one record per line) next to
a JSON manifest that echoes the full generation configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .element import MaterialParams
from .frame import (
    FrameModel,
    GlobalSolution,
    Mesh,
    SingularModelError,
    SolveAccuracyError,
    assemble_and_solve,
    build_portico,
    discretize,
)

__all__ = [
    "SamplingRanges",
    "GenerationConfig",
    "MemberDerivative",
    "DatasetRecord",
    "generate_dataset",
    "solve_sample",
    "records_for_sample",
    "write_jsonl",
    "read_jsonl",
    "write_manifest",
    "read_manifest",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SamplingRanges:
    """Log-uniform sampling bounds for the material constants (SI units)."""

    elastic_modulus: tuple[float, float] = (50e9, 250e9)
    cross_section_area: tuple[float, float] = (1e-3, 1e-2)
    inertia_moment: tuple[float, float] = (1e-6, 1e-4)

    def draw(self, rng: np.random.Generator) -> MaterialParams:
        def log_uniform(bounds):
            low, high = bounds
            return float(np.exp(rng.uniform(np.log(low), np.log(high))))

        return MaterialParams(
            elastic_modulus=log_uniform(self.elastic_modulus),
            cross_section_area=log_uniform(self.cross_section_area),
            inertia_moment=log_uniform(self.inertia_moment),
        )

    def to_dict(self) -> dict:
        return {
            "elastic_modulus": list(self.elastic_modulus),
            "cross_section_area": list(self.cross_section_area),
            "inertia_moment": list(self.inertia_moment),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingRanges":
        return cls(**{key: tuple(value) for key, value in data.items()})


@dataclass(frozen=True)
class GenerationConfig:
    """Portico geometry, load and sampling ranges for dataset generation."""

    beam_length: float = 2.0
    elems_per_edge: int = 24
    order: int = 4
    beam_load: tuple[float, ...] = (-10e3,)
    ranges: SamplingRanges = field(default_factory=SamplingRanges)

    def model(self, material: MaterialParams) -> FrameModel:
        return build_portico(
            beam_length=self.beam_length,
            elems_per_edge=self.elems_per_edge,
            order=self.order,
            material=material,
            beam_load=self.beam_load,
        )

    def to_dict(self) -> dict:
        return {
            "beam_length": self.beam_length,
            "elems_per_edge": self.elems_per_edge,
            "order": self.order,
            "beam_load": list(self.beam_load),
            "ranges": self.ranges.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationConfig":
        data = dict(data)
        ranges = SamplingRanges.from_dict(data.pop("ranges")) if "ranges" in data else SamplingRanges()
        if "beam_load" in data:
            data["beam_load"] = tuple(data["beam_load"])
        return cls(ranges=ranges, **data)


@dataclass(frozen=True)
class MemberDerivative:
    """First derivative of the local displacement along one incident member.

    ``direction`` is the member unit vector in global coordinates; the three
    derivative components are d(axial)/ds, d(transverse)/ds and d(theta)/ds
    at the node, averaged over the member's elements meeting there.
    """

    member: int
    direction: tuple[float, float]
    d_axial: float
    d_transverse: float
    d_theta: float


@dataclass(frozen=True)
class DatasetRecord:
    """One (material sample, node) pair with its reference data."""

    sample_id: int
    elastic_modulus: float
    cross_section_area: float
    inertia_moment: float
    node_id: int
    x: float
    y: float
    support: bool
    ux: float
    uy: float
    theta: float
    derivatives: tuple[MemberDerivative, ...]
    elems_per_edge: int
    order: int

    @property
    def material(self) -> MaterialParams:
        return MaterialParams(self.elastic_modulus, self.inertia_moment, self.cross_section_area)

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "material": {
                "E": self.elastic_modulus,
                "A": self.cross_section_area,
                "I": self.inertia_moment,
            },
            "node_id": self.node_id,
            "x": self.x,
            "y": self.y,
            "support": self.support,
            "displacement": {"ux": self.ux, "uy": self.uy, "theta": self.theta},
            "member_derivatives": [
                {
                    "member": d.member,
                    "direction": list(d.direction),
                    "d_axial": d.d_axial,
                    "d_transverse": d.d_transverse,
                    "d_theta": d.d_theta,
                }
                for d in self.derivatives
            ],
            "mesh": {"elems_per_edge": self.elems_per_edge, "order": self.order},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DatasetRecord":
        return cls(
            sample_id=data["sample_id"],
            elastic_modulus=data["material"]["E"],
            cross_section_area=data["material"]["A"],
            inertia_moment=data["material"]["I"],
            node_id=data["node_id"],
            x=data["x"],
            y=data["y"],
            support=data["support"],
            ux=data["displacement"]["ux"],
            uy=data["displacement"]["uy"],
            theta=data["displacement"]["theta"],
            derivatives=tuple(
                MemberDerivative(
                    member=d["member"],
                    direction=tuple(d["direction"]),
                    d_axial=d["d_axial"],
                    d_transverse=d["d_transverse"],
                    d_theta=d["d_theta"],
                )
                for d in data["member_derivatives"]
            ),
            elems_per_edge=data["mesh"]["elems_per_edge"],
            order=data["mesh"]["order"],
        )


def solve_sample(config: GenerationConfig, material: MaterialParams):
    # the mesh embeds element specs (and therefore the material), so it is
    # rebuilt per sample rather than shared
    model = config.model(material)
    mesh = discretize(model)
    return mesh, assemble_and_solve(model, mesh=mesh)


def _node_derivatives(mesh: Mesh, solution: GlobalSolution, node: int) -> tuple[MemberDerivative, ...]:
    per_member: dict[int, list[np.ndarray]] = {}
    directions: dict[int, tuple[float, float]] = {}
    for index, elem in enumerate(mesh.elements):
        if node == elem.node_a:
            x_local = 0.0
        elif node == elem.node_b:
            x_local = elem.length
        else:
            continue
        u1, u2 = solution.element_axial[index]
        poly = np.polynomial.Polynomial(solution.element_coefficients[index])
        d_axial = (u2 - u1) / elem.length
        d_transverse = float(poly.deriv()(x_local))
        d_theta = float(poly.deriv(2)(x_local))
        per_member.setdefault(elem.member, []).append(np.array([d_axial, d_transverse, d_theta]))
        directions[elem.member] = (elem.cos, elem.sin)
    out = []
    for member in sorted(per_member):
        mean = np.mean(per_member[member], axis=0)
        out.append(
            MemberDerivative(
                member=member,
                direction=directions[member],
                d_axial=float(mean[0]),
                d_transverse=float(mean[1]),
                d_theta=float(mean[2]),
            )
        )
    return tuple(out)


def records_for_sample(
    sample_id: int,
    config: GenerationConfig,
    material: MaterialParams,
    mesh: Mesh,
    solution: GlobalSolution,
) -> list[DatasetRecord]:
    records = []
    for node in range(mesh.n_nodes):
        ux, uy, theta = solution.node_displacement(node)
        records.append(
            DatasetRecord(
                sample_id=sample_id,
                elastic_modulus=material.elastic_modulus,
                cross_section_area=material.cross_section_area,
                inertia_moment=material.inertia_moment,
                node_id=node,
                x=float(mesh.node_coords[node, 0]),
                y=float(mesh.node_coords[node, 1]),
                support=bool(mesh.support_flags[node]),
                ux=float(ux),
                uy=float(uy),
                theta=float(theta),
                derivatives=_node_derivatives(mesh, solution, node),
                elems_per_edge=config.elems_per_edge,
                order=config.order,
            )
        )
    return records


def generate_dataset(config: GenerationConfig, n_train: int, n_test: int, seed: int):
    """Draw, solve and record n_train + n_test samples.

    Every sample gets its own seed stream derived from (seed, sample_id), so
    output does not depend on generation order.  Singular draws are rejected
    and redrawn from the same stream; the count lands in the manifest.
    """
    train: list[DatasetRecord] = []
    test: list[DatasetRecord] = []
    rejected = 0
    n_nodes = None
    for sample_id in range(n_train + n_test):
        rng = np.random.default_rng(np.random.SeedSequence([seed, sample_id]))
        for _ in range(100):
            material = config.ranges.draw(rng)
            try:
                mesh, solution = solve_sample(config, material)
            except (SingularModelError, SolveAccuracyError):
                rejected += 1
                continue
            break
        else:
            raise RuntimeError(f"sample {sample_id}: no solvable material draw in 100 attempts")
        n_nodes = mesh.n_nodes
        records = records_for_sample(sample_id, config, material, mesh, solution)
        (train if sample_id < n_train else test).extend(records)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "n_train": n_train,
        "n_test": n_test,
        "rejected_samples": rejected,
        "config": config.to_dict(),
        "support_nodes": sorted(s.node for s in config.model(MaterialParams(1, 1, 1)).supports),
        "records_per_sample": n_nodes,
    }
    return train, test, manifest


def write_jsonl(records, path) -> None:
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json_dict()) + "\n")


def read_jsonl(path) -> list[DatasetRecord]:
    records = []
    with open(path) as handle:
        for line in handle:
            if line.strip():
                records.append(DatasetRecord.from_json_dict(json.loads(line)))
    return records


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def read_manifest(path) -> dict:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema: {manifest.get('schema_version')}")
    return manifest
