"""Surrogate training: task losses, gradient balancing, the training loop.

Three task losses are balanced by trainable positive weights that always
renormalize to sum to the task count:

1. displacement loss: mean squared error of the normalized outputs;
2. derivative-projection (Sobolev) loss: squared error of the directional
   derivative of the outputs along random unit vectors in coordinate space,
   against the reference derivative targets from the dataset;
3. material penalty: a linear-elasticity homogeneity residual; scaling the
   elastic modulus by c must scale displacements by 1/c under a fixed load,
   so ||c m(x; cE) - m(x; E)||^2 is a data-free physics penalty.  It is
   divided componentwise by the output deviations to stay commensurate with
   the other tasks (a plain weight-decay alternative sits behind a config
   switch).

The weight update follows the gradient-norm balancing rule: per-task
gradient norms of the weighted losses, taken at the last shared hidden head
layer, are driven toward the average norm scaled by the relative inverse
training rate raised to the asymmetry exponent; targets are treated as
constants, the weight gradient uses the L1 penalty sign, the weights take a
plain gradient-descent step and are then renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DatasetRecord
from .network import (
    NetworkParameters,
    NonFiniteGradientError,
    OptimizerState,
    adam_step,
    add_gradients,
    backward_unified,
    backward_swapped_material,
    forward_cached,
    forward_with_jacobian,
    forward_with_swapped_material,
    init_parameters,
    input_gradient,
    sgd_step,
    zero_gradients,
)
from .surrogate import NormalizationStats, SurrogateModel

__all__ = [
    "SobolevConfig",
    "TrainingConfig",
    "TaskWeights",
    "TrainingBatch",
    "GradNormInfo",
    "EpochRecord",
    "TrainingState",
    "TrainingResult",
    "displacement_loss",
    "sample_unit_sphere",
    "unit_sphere_directions",
    "sobolev_loss",
    "material_penalty_loss",
    "gradnorm_update",
    "build_training_batch",
    "train",
]

WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class SobolevConfig:
    """Random-projection settings for the derivative loss."""

    n_draws: int = 8
    coordinate_dim: int = 2
    derivative_order: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.derivative_order != 1:
            raise ValueError("only first-order derivative supervision is supported")
        if self.n_draws < 1 or self.coordinate_dim < 1:
            raise ValueError("n_draws and coordinate_dim must be positive")

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "coordinate_dim": self.coordinate_dim,
            "derivative_order": self.derivative_order,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SobolevConfig":
        return cls(**data)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    weight_learning_rate: float = 2.5e-2
    alpha: float = 1.5
    divergence_threshold: float = 1e3
    seed: int = 0
    batch_size: int | None = None
    node_hidden: tuple[int, ...] = (64, 64, 32)
    material_hidden: tuple[int, ...] = (32, 32, 16)
    head_hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    material_penalty: str = "homogeneity"
    homogeneity_scale_range: tuple[float, float] = (0.5, 2.0)
    n_scale_draws: int = 1
    include_support_flag: bool = False

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")
        if self.divergence_threshold <= 0.0:
            raise ValueError("divergence threshold must be positive")
        if self.material_penalty not in ("homogeneity", "weight_decay"):
            raise ValueError(f"unknown material penalty {self.material_penalty!r}")

    def to_dict(self) -> dict:
        data = {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "weight_learning_rate": self.weight_learning_rate,
            "alpha": self.alpha,
            "divergence_threshold": self.divergence_threshold,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "node_hidden": list(self.node_hidden),
            "material_hidden": list(self.material_hidden),
            "head_hidden": list(self.head_hidden),
            "activation": self.activation,
            "material_penalty": self.material_penalty,
            "homogeneity_scale_range": list(self.homogeneity_scale_range),
            "n_scale_draws": self.n_scale_draws,
            "include_support_flag": self.include_support_flag,
        }
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        data = dict(data)
        for key in ("node_hidden", "material_hidden", "head_hidden", "homogeneity_scale_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass(frozen=True)
class TaskWeights:
    """Positive task weights summing to ``total`` plus the frozen initial losses."""

    values: np.ndarray = field(default_factory=lambda: np.ones(3))
    total: float = 3.0
    initial_losses: np.ndarray | None = None


@dataclass(frozen=True)
class TrainingBatch:
    """Normalized training arrays plus the statistics that produced them."""

    node_features: np.ndarray
    material_features: np.ndarray
    targets: np.ndarray
    jacobian_targets: np.ndarray | None
    stats: NormalizationStats


@dataclass(frozen=True)
class GradNormInfo:
    gradient_norms: np.ndarray
    targets: np.ndarray
    ratios: np.ndarray
    loss: float
    weight_gradient: np.ndarray


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    losses: tuple[float, float, float]
    weights: tuple[float, float, float]
    gradient_norms: tuple[float, float, float]


@dataclass
class TrainingState:
    params: NetworkParameters
    optimizer: OptimizerState
    weights: TaskWeights
    history: list[EpochRecord] = field(default_factory=list)


@dataclass(frozen=True)
class TrainingResult:
    model: SurrogateModel
    state: TrainingState
    status: str

    @property
    def history(self) -> list[EpochRecord]:
        return self.state.history


def sample_unit_sphere(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw on the unit sphere via a normalized Gaussian vector."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 0.0:  # zero draw has measure zero but costs nothing to guard
            return v / norm


def unit_sphere_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    return np.stack([sample_unit_sphere(dim, rng) for _ in range(count)])


def displacement_loss(batch: TrainingBatch, params: NetworkParameters) -> float:
    """Mean over the batch of the squared output error in normalized space."""
    out, _ = forward_cached(params, batch.node_features, batch.material_features)
    return float(np.mean(np.sum((out - batch.targets) ** 2, axis=1)))


def sobolev_loss(
    batch: TrainingBatch,
    params: NetworkParameters,
    config: SobolevConfig | None = None,
    directions: np.ndarray | None = None,
) -> float:
    """Mean squared error of projected directional derivatives.

    Averages over the batch and over the supplied (or freshly drawn) unit
    directions; the forward-mode directional derivative is exactly linear in
    the direction, so the Jacobian is evaluated once and projected.
    """
    if batch.jacobian_targets is None:
        raise ValueError("batch carries no derivative targets")
    config = config if config is not None else SobolevConfig()
    if directions is None:
        rng = np.random.default_rng(config.seed)
        directions = unit_sphere_directions(config.coordinate_dim, config.n_draws, rng)
    jacobian = input_gradient(
        params, batch.node_features, batch.material_features, n_coordinates=directions.shape[1]
    )
    delta = jacobian - batch.jacobian_targets
    projected = np.einsum("bij,mj->bmi", delta, directions)
    return float(np.mean(np.sum(projected**2, axis=2)))


def _scaled_material_features(batch: TrainingBatch, scale: float) -> np.ndarray:
    shifted = batch.material_features.copy()
    shifted[:, 0] += np.log(scale) / batch.stats.material_std[0]
    return shifted


def material_penalty_loss(batch: TrainingBatch, params: NetworkParameters, scales) -> float:
    """Homogeneity penalty ||c m(x; cE, A, I) - m(x; E, A, I)||^2.

    The difference is formed in physical output units and then divided
    componentwise by the output deviations: the residual itself is physics
    (displacements scale as 1/c when the elastic modulus scales by c under a
    fixed load, so it vanishes exactly at c = 1 and for any homogeneous
    network), while the non-dimensionalization keeps the task on the same
    footing as the data losses when gradient norms are balanced.
    """
    out, _ = forward_cached(params, batch.node_features, batch.material_features)
    base = batch.stats.denormalize_output(out)
    sigma = batch.stats.output_std
    total = 0.0
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    for scale in scales:
        out_scaled, _ = forward_cached(params, batch.node_features, _scaled_material_features(batch, scale))
        predicted = batch.stats.denormalize_output(out_scaled)
        total += float(np.mean(np.sum(((scale * predicted - base) / sigma) ** 2, axis=1)))
    return total / len(scales)


def _weight_decay_loss_and_grads(batch, params):
    loss = 0.0
    grads = zero_gradients(params)
    offset = len(params.node_layers)
    for i, layer in enumerate(params.material_layers):
        loss += float(np.sum(layer.weight**2))
        grads[offset + i] = (2.0 * layer.weight, np.zeros_like(layer.bias))
    return loss, grads


def _task_losses_and_grads(batch, params, directions, scales, config):
    """Values and full parameter gradients of the three task losses.

    One shared value chain serves the displacement loss, both coordinate
    tangent directions and the base side of the homogeneity penalty; the
    scaled penalty passes reuse the cached node activations.
    """
    n_rows = len(batch.node_features)
    out, jacobian, cache = forward_with_jacobian(
        params, batch.node_features, batch.material_features, n_coordinates=directions.shape[1]
    )

    diff = out - batch.targets
    loss_displacement = float(np.mean(np.sum(diff**2, axis=1)))
    grads_displacement = backward_unified(params, cache, 2.0 * diff / n_rows, None)

    delta = jacobian - batch.jacobian_targets
    second_moment = directions.T @ directions / len(directions)
    loss_sobolev = float(np.mean(np.einsum("bij,jk,bik->b", delta, second_moment, delta)))
    jacobian_bar = 2.0 * delta @ second_moment / n_rows
    grads_sobolev = backward_unified(params, cache, np.zeros_like(out), jacobian_bar)

    if config.material_penalty == "weight_decay":
        loss_material, grads_material = _weight_decay_loss_and_grads(batch, params)
    else:
        # in normalized outputs the scaled residual is c yhat1 - yhat2 plus a
        # constant offset (c - 1) mu / sigma
        offset = batch.stats.output_mean / batch.stats.output_std
        loss_material = 0.0
        grads_material = zero_gradients(params)
        base_cotangent = np.zeros_like(out)
        for scale in scales:
            out_scaled, swap_cache = forward_with_swapped_material(
                params, cache, _scaled_material_features(batch, scale)
            )
            error = scale * out_scaled - out + (scale - 1.0) * offset
            loss_material += float(np.mean(np.sum(error**2, axis=1)))
            factor = 2.0 / (n_rows * len(scales))
            grads_material = add_gradients(
                grads_material,
                backward_swapped_material(params, cache, swap_cache, factor * scale * error),
            )
            base_cotangent -= factor * error
        loss_material /= len(scales)
        grads_material = add_gradients(
            grads_material, backward_unified(params, cache, base_cotangent, None)
        )

    losses = np.array([loss_displacement, loss_sobolev, loss_material])
    return losses, [grads_displacement, grads_sobolev, grads_material]


def gradnorm_update(
    weights: TaskWeights,
    losses: np.ndarray,
    task_gradient_norms: np.ndarray,
    alpha: float,
    learning_rate: float,
) -> tuple[TaskWeights, GradNormInfo]:
    """One balancing step on the task weights, followed by renormalization.

    ``task_gradient_norms`` are the unweighted per-task gradient norms at the
    balancing layer; weighted norms are weights * norms.  Targets are treated
    as constants when differentiating.  Tasks whose initial loss was zero
    keep their loss ratio pinned at one.
    """
    if weights.initial_losses is None:
        raise ValueError("initial task losses were never recorded")
    losses = np.asarray(losses, dtype=float)
    norms = np.asarray(task_gradient_norms, dtype=float)
    initial = weights.initial_losses
    ratios = np.where(initial > 0.0, losses / np.where(initial > 0.0, initial, 1.0), 1.0)
    mean_ratio = ratios.mean()
    relative = ratios / mean_ratio if mean_ratio > 0.0 else np.ones_like(ratios)
    weighted = weights.values * norms
    targets = weighted.mean() * relative**alpha
    loss = float(np.abs(weighted - targets).sum())
    gradient = np.sign(weighted - targets) * norms
    updated = sgd_step(weights.values, gradient, learning_rate)
    updated = np.maximum(updated, WEIGHT_FLOOR)
    updated = updated * (weights.total / updated.sum())
    info = GradNormInfo(
        gradient_norms=weighted, targets=targets, ratios=relative, loss=loss, weight_gradient=gradient
    )
    return replace(weights, values=updated), info


def _global_jacobian_target(record: DatasetRecord) -> np.ndarray:
    """Least-squares completion of the per-member directional derivatives.

    Each incident member constrains J t = g with t the member direction and
    g the global derivative of (ux, uy, theta) along it; directions the
    members do not span contribute zero derivative.
    """
    if not record.derivatives:
        return np.zeros((3, 2))
    directions = []
    values = []
    for entry in record.derivatives:
        c, s = entry.direction
        directions.append([c, s])
        values.append(
            [
                c * entry.d_axial - s * entry.d_transverse,
                s * entry.d_axial + c * entry.d_transverse,
                entry.d_theta,
            ]
        )
    t_matrix = np.array(directions).T  # (2, k)
    g_matrix = np.array(values).T  # (3, k)
    return g_matrix @ np.linalg.pinv(t_matrix)


def build_training_batch(
    records: list[DatasetRecord],
    config: TrainingConfig,
    stats: NormalizationStats | None = None,
) -> tuple[TrainingBatch, NormalizationStats]:
    """Feature/target arrays plus normalization statistics from the records."""
    if not records:
        raise ValueError("empty record list")
    node_raw = np.array(
        [
            [r.x, r.y, float(r.support)] if config.include_support_flag else [r.x, r.y]
            for r in records
        ]
    )
    material_raw = np.array(
        [
            np.log([r.elastic_modulus, r.cross_section_area, r.inertia_moment])
            for r in records
        ]
    )
    output_raw = np.array([[r.ux, r.uy, r.theta] for r in records])
    if stats is None:
        stats = NormalizationStats.from_arrays(node_raw, material_raw, output_raw)
    jac_raw = np.stack([_global_jacobian_target(r) for r in records])
    jac_scaled = jac_raw * stats.node_std[None, None, :2] / stats.output_std[None, :, None]
    batch = TrainingBatch(
        node_features=stats.normalize_node(node_raw),
        material_features=stats.normalize_material(material_raw),
        targets=stats.normalize_output(output_raw),
        jacobian_targets=jac_scaled,
        stats=stats,
    )
    return batch, stats


def _batch_slice(batch: TrainingBatch, index: np.ndarray) -> TrainingBatch:
    return TrainingBatch(
        node_features=batch.node_features[index],
        material_features=batch.material_features[index],
        targets=batch.targets[index],
        jacobian_targets=batch.jacobian_targets[index],
        stats=batch.stats,
    )


def train(
    records: list[DatasetRecord],
    config: TrainingConfig | None = None,
    sobolev: SobolevConfig | None = None,
    initial_params: NetworkParameters | None = None,
) -> TrainingResult:
    """Run the full training loop and return the surrogate plus history.

    Initial task losses are captured after the first forward pass, before
    any update.  Training stops early when any parameter magnitude crosses
    the divergence threshold or a gradient turns non-finite, and the result
    status says so.
    """
    config = config if config is not None else TrainingConfig()
    sobolev = sobolev if sobolev is not None else SobolevConfig(seed=config.seed)
    full_batch, stats = build_training_batch(records, config)

    init_seed, sphere_seed, scale_seed, batch_seed = np.random.SeedSequence(config.seed).spawn(4)
    rng_init = np.random.default_rng(init_seed)
    rng_sphere = np.random.default_rng(sphere_seed)
    rng_scale = np.random.default_rng(scale_seed)
    rng_batch = np.random.default_rng(batch_seed)

    node_width = full_batch.node_features.shape[1]
    if initial_params is not None:
        params = initial_params.copy()
    else:
        params = init_parameters(
            [node_width, *config.node_hidden],
            [3, *config.material_hidden],
            [config.node_hidden[-1] + config.material_hidden[-1], *config.head_hidden, 3],
            rng_init,
            activation=config.activation,
        )
    optimizer = OptimizerState.for_parameters(params, learning_rate=config.learning_rate)
    state = TrainingState(params=params, optimizer=optimizer, weights=TaskWeights())
    theta_index = params.gradnorm_layer_index()

    n_rows = len(full_batch.node_features)
    permutation = np.arange(n_rows)
    cursor = n_rows  # forces a reshuffle on first use

    status = "completed"
    low, high = config.homogeneity_scale_range
    for epoch in range(1, config.epochs + 1):
        if config.batch_size is None or config.batch_size >= n_rows:
            batch = full_batch
        else:
            if cursor + config.batch_size > n_rows:
                permutation = rng_batch.permutation(n_rows)
                cursor = 0
            batch = _batch_slice(full_batch, permutation[cursor : cursor + config.batch_size])
            cursor += config.batch_size
        directions = unit_sphere_directions(sobolev.coordinate_dim, sobolev.n_draws, rng_sphere)
        # endpoint draws keep |log c| fixed so the penalty magnitude is stable
        # across steps; interior draws make the loss ratio pure noise
        scales = rng_scale.choice([low, high], size=config.n_scale_draws)

        losses, task_grads = _task_losses_and_grads(batch, params, directions, scales, config)
        if state.weights.initial_losses is None:
            state.weights = replace(state.weights, initial_losses=losses.copy())
        norms = np.array([np.linalg.norm(grads[theta_index][0]) for grads in task_grads])
        active_weights = state.weights.values.copy()
        new_weights, info = gradnorm_update(
            state.weights, losses, norms, config.alpha, config.weight_learning_rate
        )
        record = EpochRecord(
            epoch,
            tuple(float(v) for v in losses),
            tuple(float(v) for v in active_weights),
            tuple(float(v) for v in info.gradient_norms),
        )
        total_grads = zero_gradients(params)
        for weight, grads in zip(active_weights, task_grads):
            total_grads = add_gradients(total_grads, grads, factor=weight)
        try:
            adam_step(optimizer, params, total_grads)
        except NonFiniteGradientError:
            status = "non_finite_gradient"
            state.history.append(record)
            break
        state.weights = new_weights
        state.history.append(record)
        if params.max_abs_parameter() > config.divergence_threshold:
            status = "diverged"
            break

    mesh_echo = {"elems_per_edge": records[0].elems_per_edge, "order": records[0].order}
    model = SurrogateModel(
        params=params,
        stats=stats,
        config={
            "training": config.to_dict(),
            "sobolev": sobolev.to_dict(),
            "mesh": mesh_echo,
            "status": status,
            "final_losses": [float(v) for v in losses],
        },
    )
    return TrainingResult(model=model, state=state, status=status)
