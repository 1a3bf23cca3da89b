"""Minimal dense-network engine in float64 numpy.

The architecture is split: a node sub-network processes nodal features, a
material sub-network processes material features, their outputs are
concatenated and passed through head layers.  Everything needed by the
training loop is provided here: forward evaluation, reverse-mode parameter
gradients, exact Jacobians of outputs with respect to the node coordinate
features (forward tangents), reverse mode through those tangents, and the
Adam / plain-SGD update rules.

Gradients are returned as a list of (dW, db) pairs ordered like
``params.layers()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Layer",
    "NetworkParameters",
    "OptimizerState",
    "NonFiniteGradientError",
    "init_parameters",
    "forward",
    "forward_cached",
    "backward_params",
    "input_gradient",
    "forward_with_jacobian",
    "backward_unified",
    "forward_with_swapped_material",
    "backward_swapped_material",
    "zero_gradients",
    "scale_gradients",
    "add_gradients",
    "adam_step",
    "sgd_step",
]


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN or infinity; training must stop."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str  # "tanh" or "identity"

    def __post_init__(self) -> None:
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError("bias width does not match weight rows")


@dataclass
class NetworkParameters:
    node_layers: list[Layer]
    material_layers: list[Layer]
    head_layers: list[Layer]

    def __post_init__(self) -> None:
        for name, layers in (
            ("node", self.node_layers),
            ("material", self.material_layers),
            ("head", self.head_layers),
        ):
            for previous, current in zip(layers, layers[1:]):
                if current.weight.shape[1] != previous.weight.shape[0]:
                    raise ValueError(f"{name} sub-network layer widths do not chain")
        expected = self.node_layers[-1].weight.shape[0] + self.material_layers[-1].weight.shape[0]
        if self.head_layers[0].weight.shape[1] != expected:
            raise ValueError(
                f"head input width {self.head_layers[0].weight.shape[1]} must equal the "
                f"concatenated sub-network output width {expected}"
            )

    @property
    def node_input_width(self) -> int:
        return self.node_layers[0].weight.shape[1]

    @property
    def material_input_width(self) -> int:
        return self.material_layers[0].weight.shape[1]

    @property
    def output_width(self) -> int:
        return self.head_layers[-1].weight.shape[0]

    def layers(self) -> list[Layer]:
        return [*self.node_layers, *self.material_layers, *self.head_layers]

    def copy(self) -> "NetworkParameters":
        def clone(layers):
            return [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in layers]

        return NetworkParameters(clone(self.node_layers), clone(self.material_layers), clone(self.head_layers))

    def n_parameters(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers())

    def max_abs_parameter(self) -> float:
        return max(max(np.abs(l.weight).max(), np.abs(l.bias).max()) for l in self.layers())

    def gradnorm_layer_index(self) -> int:
        """Index (into ``layers()``) of the last shared hidden head layer."""
        offset = len(self.node_layers) + len(self.material_layers)
        if len(self.head_layers) >= 2:
            return offset + len(self.head_layers) - 2
        return offset


def init_parameters(
    node_sizes,
    material_sizes,
    head_sizes,
    rng: np.random.Generator,
    activation: str = "tanh",
) -> NetworkParameters:
    """Xavier-uniform initialization; the final head layer stays linear."""

    def make(sizes, final_identity):
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            last = i == len(sizes) - 2
            layers.append(Layer(weight, np.zeros(fan_out), "identity" if (final_identity and last) else activation))
        return layers

    return NetworkParameters(
        node_layers=make(list(node_sizes), False),
        material_layers=make(list(material_sizes), False),
        head_layers=make(list(head_sizes), True),
    )


def _activate(a: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(a) if kind == "tanh" else a


def _prime(z_out: np.ndarray, kind: str) -> np.ndarray:
    # derivative written in terms of the activation output
    return 1.0 - z_out**2 if kind == "tanh" else np.ones_like(z_out)


def _second_from_prime(z_out: np.ndarray, p: np.ndarray, kind: str) -> np.ndarray:
    return -2.0 * z_out * p if kind == "tanh" else np.zeros_like(z_out)


def _subnet_forward(layers, z):
    cache = []
    for layer in layers:
        z_out = _activate(z @ layer.weight.T + layer.bias, layer.activation)
        cache.append((z, z_out, _prime(z_out, layer.activation)))
        z = z_out
    return z, cache


def _subnet_backward(layers, cache, g):
    grads = []
    for layer, (z_in, _, p) in zip(reversed(layers), reversed(cache)):
        da = g * p
        grads.append((da.T @ z_in, da.sum(axis=0)))
        g = da @ layer.weight
    grads.reverse()
    return grads, g


def _check_batch(params: NetworkParameters, node_x, material_x):
    node_x = np.atleast_2d(np.asarray(node_x, dtype=float))
    material_x = np.atleast_2d(np.asarray(material_x, dtype=float))
    if node_x.shape[1] != params.node_input_width:
        raise ValueError(
            f"node feature width {node_x.shape[1]} does not match sub-network input "
            f"width {params.node_input_width}"
        )
    if material_x.shape[1] != params.material_input_width:
        raise ValueError(
            f"material feature width {material_x.shape[1]} does not match sub-network "
            f"input width {params.material_input_width}"
        )
    if node_x.shape[0] != material_x.shape[0]:
        raise ValueError("node and material batches differ in length")
    return node_x, material_x


@dataclass
class ForwardCache:
    node: list = field(repr=False, default_factory=list)
    material: list = field(repr=False, default_factory=list)
    head: list = field(repr=False, default_factory=list)
    node_width: int = 0


def forward_cached(params: NetworkParameters, node_x, material_x):
    node_x, material_x = _check_batch(params, node_x, material_x)
    node_out, node_cache = _subnet_forward(params.node_layers, node_x)
    material_out, material_cache = _subnet_forward(params.material_layers, material_x)
    merged = np.concatenate([node_out, material_out], axis=1)
    out, head_cache = _subnet_forward(params.head_layers, merged)
    cache = ForwardCache(node_cache, material_cache, head_cache, node_out.shape[1])
    return out, cache


def forward(params: NetworkParameters, node_x, material_x) -> np.ndarray:
    out, _ = forward_cached(params, node_x, material_x)
    return out


def backward_params(params: NetworkParameters, cache: ForwardCache, upstream: np.ndarray):
    """Exact gradient of sum(upstream * output) for every weight and bias."""
    head_grads, g_merged = _subnet_backward(params.head_layers, cache.head, upstream)
    g_node = g_merged[:, : cache.node_width]
    g_material = g_merged[:, cache.node_width :]
    node_grads, _ = _subnet_backward(params.node_layers, cache.node, g_node)
    material_grads, _ = _subnet_backward(params.material_layers, cache.material, g_material)
    return [*node_grads, *material_grads, *head_grads]


def _stacked_matmul(stacked, weight_t):
    # (batch, K, d_in) @ (d_in, d_out) as one flat GEMM
    batch, k, width = stacked.shape
    return (stacked.reshape(batch * k, width) @ weight_t).reshape(batch, k, -1)


def _subnet_multi_tangent(layers, z, tangents):
    """Value chain plus K stacked tangent directions, shape (batch, K, width)."""
    cache = []
    for layer in layers:
        a_t = _stacked_matmul(tangents, layer.weight.T)
        z_out = _activate(z @ layer.weight.T + layer.bias, layer.activation)
        p = _prime(z_out, layer.activation)
        t_out = p[:, None, :] * a_t
        cache.append((z, z_out, p, tangents, a_t))
        z, tangents = z_out, t_out
    return z, tangents, cache


def _subnet_multi_tangent_backward(layers, cache, g_z, g_t):
    grads = []
    for layer, (z_in, z_out, p, t_in, a_t) in zip(reversed(layers), reversed(cache)):
        da = g_z * p + (g_t * a_t).sum(axis=1) * _second_from_prime(z_out, p, layer.activation)
        dta = g_t * p[:, None, :]
        flat_dta = dta.reshape(-1, dta.shape[2])
        flat_t_in = t_in.reshape(-1, t_in.shape[2])
        grads.append((da.T @ z_in + flat_dta.T @ flat_t_in, da.sum(axis=0)))
        g_z = da @ layer.weight
        g_t = _stacked_matmul(dta, layer.weight)
    grads.reverse()
    return grads, g_z, g_t


@dataclass
class UnifiedCache:
    """One value chain shared by the plain output and all tangent directions."""

    node: list = field(repr=False, default_factory=list)
    material: list = field(repr=False, default_factory=list)
    head: list = field(repr=False, default_factory=list)
    node_width: int = 0
    n_directions: int = 0


def forward_with_jacobian(params: NetworkParameters, node_x, material_x, n_coordinates: int = 2):
    """Output and coordinate Jacobian from a single shared value chain.

    Returns (out, jacobian, cache) with jacobian of shape
    (batch, outputs, n_coordinates).
    """
    node_x, material_x = _check_batch(params, node_x, material_x)
    if n_coordinates > params.node_input_width:
        raise ValueError("more coordinates requested than node features")
    batch = node_x.shape[0]
    tangents = np.zeros((batch, n_coordinates, node_x.shape[1]))
    for j in range(n_coordinates):
        tangents[:, j, j] = 1.0
    node_out, node_t, node_cache = _subnet_multi_tangent(params.node_layers, node_x, tangents)
    material_out, material_cache = _subnet_forward(params.material_layers, material_x)
    merged = np.concatenate([node_out, material_out], axis=1)
    merged_t = np.concatenate(
        [node_t, np.zeros((batch, n_coordinates, material_out.shape[1]))], axis=2
    )
    out, out_t, head_cache = _subnet_multi_tangent(params.head_layers, merged, merged_t)
    cache = UnifiedCache(node_cache, material_cache, head_cache, node_out.shape[1], n_coordinates)
    return out, np.swapaxes(out_t, 1, 2), cache


def backward_unified(params: NetworkParameters, cache: UnifiedCache, upstream_value, upstream_jacobian):
    """Reverse mode through the shared chain for value and Jacobian cotangents.

    With no Jacobian cotangent the tangent chains carry nothing and the much
    cheaper value-only sweep applies.
    """
    if upstream_jacobian is None:
        head_value = [(z_in, z_out, p) for z_in, z_out, p, _, _ in cache.head]
        node_value = [(z_in, z_out, p) for z_in, z_out, p, _, _ in cache.node]
        head_grads, g_merged = _subnet_backward(params.head_layers, head_value, upstream_value)
        g_node = g_merged[:, : cache.node_width]
        g_material = g_merged[:, cache.node_width :]
        node_grads, _ = _subnet_backward(params.node_layers, node_value, g_node)
        material_grads, _ = _subnet_backward(params.material_layers, cache.material, g_material)
        return [*node_grads, *material_grads, *head_grads]
    g_t = np.swapaxes(upstream_jacobian, 1, 2)
    head_grads, g_merged, gt_merged = _subnet_multi_tangent_backward(
        params.head_layers, cache.head, upstream_value, g_t
    )
    g_node = g_merged[:, : cache.node_width]
    gt_node = gt_merged[:, :, : cache.node_width]
    g_material = g_merged[:, cache.node_width :]
    node_grads, _, _ = _subnet_multi_tangent_backward(params.node_layers, cache.node, g_node, gt_node)
    material_grads, _ = _subnet_backward(params.material_layers, cache.material, g_material)
    return [*node_grads, *material_grads, *head_grads]


def input_gradient(params: NetworkParameters, node_x, material_x, n_coordinates: int = 2) -> np.ndarray:
    """Jacobian of the outputs with respect to the node coordinate features.

    Coordinates are the leading entries of the node features; material
    features are parameters of the field, not differentiation variables.
    Shape (batch, outputs, n_coordinates).
    """
    _, jacobian, _ = forward_with_jacobian(params, node_x, material_x, n_coordinates)
    return jacobian


def forward_with_swapped_material(params: NetworkParameters, cache: UnifiedCache, material_x):
    """Re-run material and head chains against the cached node activations."""
    material_out, material_cache = _subnet_forward(params.material_layers, material_x)
    node_out = cache.node[-1][1] if cache.node else None
    merged = np.concatenate([node_out, material_out], axis=1)
    out, head_cache = _subnet_forward(params.head_layers, merged)
    return out, (material_cache, head_cache)


def backward_swapped_material(params: NetworkParameters, cache: UnifiedCache, swap_cache, upstream):
    """Reverse mode for a swapped-material pass; node gradients flow through
    the shared node activations."""
    material_cache, head_cache = swap_cache
    head_grads, g_merged = _subnet_backward(params.head_layers, head_cache, upstream)
    g_node = g_merged[:, : cache.node_width]
    g_material = g_merged[:, cache.node_width :]
    node_value_cache = [(z_in, z_out, p) for z_in, z_out, p, _, _ in cache.node]
    node_grads, _ = _subnet_backward(params.node_layers, node_value_cache, g_node)
    material_grads, _ = _subnet_backward(params.material_layers, material_cache, g_material)
    return [*node_grads, *material_grads, *head_grads]


def zero_gradients(params: NetworkParameters):
    return [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers()]


def scale_gradients(grads, factor: float):
    return [(factor * gw, factor * gb) for gw, gb in grads]


def add_gradients(total, extra, factor: float = 1.0):
    return [(tw + factor * ew, tb + factor * eb) for (tw, tb), (ew, eb) in zip(total, extra)]


@dataclass
class OptimizerState:
    """Adam moment buffers mirroring the parameter arrays."""

    first_moment: list
    second_moment: list
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_parameters(cls, params: NetworkParameters, learning_rate: float = 1e-3, **kwargs):
        shapes = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers()]
        return cls(
            first_moment=[(w.copy(), b.copy()) for w, b in shapes],
            second_moment=shapes,
            learning_rate=learning_rate,
            **kwargs,
        )


def adam_step(state: OptimizerState, params: NetworkParameters, grads) -> NetworkParameters:
    """Standard Adam update with bias correction; parameters change in place."""
    for gw, gb in grads:
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise NonFiniteGradientError("non-finite entries in parameter gradient")
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for layer, (m_w, m_b), (v_w, v_b), (g_w, g_b) in zip(
        params.layers(), state.first_moment, state.second_moment, grads
    ):
        m_w *= state.beta1
        m_w += (1.0 - state.beta1) * g_w
        m_b *= state.beta1
        m_b += (1.0 - state.beta1) * g_b
        v_w *= state.beta2
        v_w += (1.0 - state.beta2) * g_w**2
        v_b *= state.beta2
        v_b += (1.0 - state.beta2) * g_b**2
        layer.weight -= state.learning_rate * (m_w / correction1) / (np.sqrt(v_w / correction2) + state.epsilon)
        layer.bias -= state.learning_rate * (m_b / correction1) / (np.sqrt(v_b / correction2) + state.epsilon)
    return params


def sgd_step(weights: np.ndarray, gradient: np.ndarray, learning_rate: float) -> np.ndarray:
    """Plain gradient descent without momentum."""
    return np.asarray(weights, dtype=float) - learning_rate * np.asarray(gradient, dtype=float)
