"""Trained surrogate: network parameters plus normalization, physical units.

The surrogate predicts global (ux, uy, theta) at arbitrary coordinates for a
given material.  Node coordinates are normalized per feature; material
constants enter as normalized logarithms because their ranges span decades.
The model artifact is a single JSON document with layer sizes, activation
tags, row-major flattened weights, the normalization statistics and an echo
of the training configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .element import MaterialParams
from .frame import Mesh
from .network import Layer, NetworkParameters, forward, input_gradient

__all__ = [
    "NormalizationStats",
    "SurrogateModel",
    "SurrogateField",
    "material_features",
]

SCHEMA_VERSION = 1


def material_features(material: MaterialParams) -> np.ndarray:
    """Log-space material features (log E, log A, log I)."""
    return np.log(
        np.array(
            [material.elastic_modulus, material.cross_section_area, material.inertia_moment]
        )
    )


def _safe_std(values: np.ndarray) -> np.ndarray:
    std = values.std(axis=0)
    return np.where(std > 0.0, std, 1.0)


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature means and standard deviations (constants get std 1)."""

    node_mean: np.ndarray
    node_std: np.ndarray
    material_mean: np.ndarray
    material_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray

    @classmethod
    def from_arrays(cls, node: np.ndarray, material: np.ndarray, output: np.ndarray):
        return cls(
            node_mean=node.mean(axis=0),
            node_std=_safe_std(node),
            material_mean=material.mean(axis=0),
            material_std=_safe_std(material),
            output_mean=output.mean(axis=0),
            output_std=_safe_std(output),
        )

    def normalize_node(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.node_mean) / self.node_std

    def normalize_material(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.material_mean) / self.material_std

    def normalize_output(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.output_mean) / self.output_std

    def denormalize_output(self, scaled: np.ndarray) -> np.ndarray:
        return self.output_mean + self.output_std * scaled

    def to_dict(self) -> dict:
        return {
            "node_mean": self.node_mean.tolist(),
            "node_std": self.node_std.tolist(),
            "material_mean": self.material_mean.tolist(),
            "material_std": self.material_std.tolist(),
            "output_mean": self.output_mean.tolist(),
            "output_std": self.output_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationStats":
        return cls(**{key: np.asarray(value, dtype=float) for key, value in data.items()})


@dataclass
class SurrogateModel:
    """Network parameters, normalization and the training configuration echo."""

    params: NetworkParameters
    stats: NormalizationStats
    config: dict

    def _node_features(self, points: np.ndarray, support_flags) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.params.node_input_width == 2:
            raw = points
        else:
            flags = np.zeros(len(points)) if support_flags is None else np.asarray(support_flags, float)
            raw = np.column_stack([points, flags])
        return self.stats.normalize_node(raw)

    def predict(self, points, material: MaterialParams, support_flags=None) -> np.ndarray:
        """Physical (ux, uy, theta) rows for physical coordinate rows."""
        node = self._node_features(points, support_flags)
        mat = self.stats.normalize_material(material_features(material))
        mat = np.tile(mat, (len(node), 1))
        return self.stats.denormalize_output(forward(self.params, node, mat))

    def input_jacobian(self, points, material: MaterialParams, support_flags=None) -> np.ndarray:
        """d(ux, uy, theta)/d(x, y) in physical units, shape (batch, 3, 2)."""
        node = self._node_features(points, support_flags)
        mat = self.stats.normalize_material(material_features(material))
        mat = np.tile(mat, (len(node), 1))
        scaled = input_gradient(self.params, node, mat, n_coordinates=2)
        return scaled * self.stats.output_std[None, :, None] / self.stats.node_std[None, None, :2]

    def to_dict(self) -> dict:
        def encode(layers):
            return {
                "sizes": [layers[0].weight.shape[1], *(l.weight.shape[0] for l in layers)],
                "activations": [l.activation for l in layers],
                "layers": [
                    {"weight": l.weight.ravel().tolist(), "bias": l.bias.tolist()} for l in layers
                ],
            }

        return {
            "schema_version": SCHEMA_VERSION,
            "architecture": {
                "node": encode(self.params.node_layers),
                "material": encode(self.params.material_layers),
                "head": encode(self.params.head_layers),
            },
            "normalization": self.stats.to_dict(),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateModel":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema: {data.get('schema_version')}")

        def decode(block):
            sizes = block["sizes"]
            layers = []
            for i, item in enumerate(block["layers"]):
                weight = np.asarray(item["weight"], dtype=float).reshape(sizes[i + 1], sizes[i])
                bias = np.asarray(item["bias"], dtype=float)
                layers.append(Layer(weight, bias, block["activations"][i]))
            return layers

        arch = data["architecture"]
        params = NetworkParameters(decode(arch["node"]), decode(arch["material"]), decode(arch["head"]))
        return cls(
            params=params,
            stats=NormalizationStats.from_dict(data["normalization"]),
            config=data.get("config", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


class SurrogateField:
    """Displacement field induced by a surrogate on a frame mesh.

    Values rotate from global (ux, uy) into member-local (axial, transverse);
    the derivative along the member comes from the analytic input Jacobian
    projected on the member direction.
    """

    def __init__(self, model: SurrogateModel, mesh: Mesh, material: MaterialParams):
        self.model = model
        self.mesh = mesh
        self.material = material

    def evaluate(self, element_index: int, local_x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        elem = self.mesh.elements[element_index]
        x = np.asarray(local_x, dtype=float)
        origin = self.mesh.node_coords[elem.node_a]
        direction = np.array([elem.cos, elem.sin])
        points = origin[None, :] + x[:, None] * direction[None, :]
        outputs = self.model.predict(points, self.material)
        jacobian = self.model.input_jacobian(points, self.material)
        along = jacobian[:, :2, :] @ direction
        c, s = elem.cos, elem.sin
        values = np.stack(
            [c * outputs[:, 0] + s * outputs[:, 1], -s * outputs[:, 0] + c * outputs[:, 1]], axis=-1
        )
        derivatives = np.stack(
            [c * along[:, 0] + s * along[:, 1], -s * along[:, 0] + c * along[:, 1]], axis=-1
        )
        return values, derivatives
