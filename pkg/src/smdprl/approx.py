"""Self-contained fully connected network with analytic gradients.

No autodiff framework: the architecture family is fixed (affine layers,
ReLU on hidden layers, linear output), so backpropagation is derived by
hand and verified against central finite differences.  Parameters live
in one flat float64 vector; per-layer weight/bias views are reshaped
slices of it, which makes target synchronisation and checkpointing
plain vector arithmetic.

A network plus its optimizer state form a single-writer unit:
``optimizer_step`` and ``sync_target`` mutate their arrays in place and
return them for convenience.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import rng_stream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


def parameter_count(layer_sizes: Sequence[int]) -> int:
    return sum(
        layer_sizes[i + 1] * layer_sizes[i] + layer_sizes[i + 1]
        for i in range(len(layer_sizes) - 1)
    )


@dataclass
class MLP:
    """Flat-parameter multilayer perceptron."""

    layer_sizes: tuple[int, ...]
    params: np.ndarray

    def __post_init__(self) -> None:
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        expected = parameter_count(self.layer_sizes)
        if self.params.shape != (expected,):
            raise ValueError(
                f"parameter vector has shape {self.params.shape}, expected ({expected},)"
            )

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weight, bias) views into the flat parameter vector."""
        result = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            weight = self.params[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in)
            offset += fan_out * fan_in
            bias = self.params[offset : offset + fan_out]
            offset += fan_out
            result.append((weight, bias))
        return result

    def copy(self) -> "MLP":
        return MLP(self.layer_sizes, self.params.copy())


def init_mlp(layer_sizes: Sequence[int], seed_or_rng: int | np.random.Generator) -> MLP:
    """Fan-in-scaled uniform initialization, deterministic per seed."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else rng_stream(seed_or_rng, "mlp-init", tuple(layer_sizes))
    )
    chunks = []
    for fan_in, fan_out in zip(layer_sizes, list(layer_sizes)[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
        chunks.append(rng.uniform(-bound, bound, size=fan_out))
    return MLP(tuple(layer_sizes), np.concatenate(chunks))


def _forward_cached(net: MLP, inputs: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Batch forward pass returning output, pre-activations, activations."""
    activations = [inputs]
    pre_activations = []
    current = inputs
    layers = net.layers()
    for position, (weight, bias) in enumerate(layers):
        z = current @ weight.T + bias
        pre_activations.append(z)
        current = np.maximum(z, 0.0) if position < len(layers) - 1 else z
        activations.append(current)
    return current, pre_activations, activations


def forward_batch(net: MLP, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_size:
        raise ValueError(f"expected inputs of shape (batch, {net.input_size}), got {inputs.shape}")
    output, _, _ = _forward_cached(net, inputs)
    return output


def forward(net: MLP, x: np.ndarray) -> np.ndarray:
    """Per-option values for a single observation vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_size,):
        raise ValueError(f"expected input of shape ({net.input_size},), got {x.shape}")
    return forward_batch(net, x[None, :])[0]


def _backprop(
    net: MLP,
    output_grad: np.ndarray,
    pre_activations: list[np.ndarray],
    activations: list[np.ndarray],
) -> np.ndarray:
    """Gradient of a scalar loss wrt the flat parameters, given dLoss/dOutput."""
    layers = net.layers()
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(layers))
    delta = output_grad
    for position in range(len(layers) - 1, -1, -1):
        weight, _ = layers[position]
        grads[2 * position] = (delta.T @ activations[position]).ravel()
        grads[2 * position + 1] = delta.sum(axis=0)
        if position > 0:
            delta = (delta @ weight) * (pre_activations[position - 1] > 0.0)
    return np.concatenate(grads)


def loss_and_gradient(
    net: MLP,
    inputs: np.ndarray,
    option_ids: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Summed squared error on the selected outputs, plus its gradient.

    ``loss = sum_i (targets[i] - Q(x_i)[o_i])**2``.  The targets are
    treated as constants: no gradient flows through them.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    option_ids = np.asarray(option_ids, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or len(inputs) == 0:
        raise ValueError("minibatch must be a nonempty 2-D array")
    if not (len(inputs) == len(option_ids) == len(targets)):
        raise ValueError("minibatch fields must have equal length")
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    output, pre_activations, activations = _forward_cached(net, inputs)
    rows = np.arange(len(inputs))
    residual = output[rows, option_ids] - targets
    loss = float(np.dot(residual, residual))
    output_grad = np.zeros_like(output)
    output_grad[rows, option_ids] = 2.0 * residual
    return loss, _backprop(net, output_grad, pre_activations, activations)


def cross_entropy_and_gradient(
    net: MLP,
    inputs: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Summed softmax cross-entropy over logged labels, plus its gradient."""
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if inputs.ndim != 2 or len(inputs) == 0:
        raise ValueError("minibatch must be a nonempty 2-D array")
    logits, pre_activations, activations = _forward_cached(net, inputs)
    probabilities = softmax(logits)
    rows = np.arange(len(inputs))
    loss = float(-np.log(probabilities[rows, labels]).sum())
    output_grad = probabilities.copy()
    output_grad[rows, labels] -= 1.0
    return loss, _backprop(net, output_grad, pre_activations, activations)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; outputs are strictly positive and sum to one."""
    logits = np.asarray(logits, dtype=np.float64)
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits[None, :]
    shifted = logits - logits.max(axis=1, keepdims=True)
    # keep exp() above underflow so every probability stays > 0
    np.clip(shifted, -500.0, None, out=shifted)
    exp = np.exp(shifted)
    probabilities = exp / exp.sum(axis=1, keepdims=True)
    return probabilities[0] if squeeze else probabilities


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators matched to one network."""

    learning_rate: float
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON


def init_optimizer(net: MLP, learning_rate: float) -> OptimizerState:
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    zeros = np.zeros_like(net.params)
    return OptimizerState(learning_rate, zeros.copy(), zeros.copy())


def optimizer_step(net: MLP, state: OptimizerState, gradient: np.ndarray) -> tuple[MLP, OptimizerState]:
    """One adaptive-moment update; mutates ``net.params`` and ``state`` in place."""
    if gradient.shape != net.params.shape:
        raise ValueError("gradient shape does not match the parameter vector")
    if state.first_moment.shape != net.params.shape:
        raise ValueError("optimizer state does not match this network")
    state.step_count += 1
    scratch = np.multiply(gradient, 1.0 - state.beta1)
    state.first_moment *= state.beta1
    state.first_moment += scratch
    np.multiply(gradient, gradient, out=scratch)
    scratch *= 1.0 - state.beta2
    state.second_moment *= state.beta2
    state.second_moment += scratch
    bias1 = 1.0 - state.beta1**state.step_count
    bias2 = 1.0 - state.beta2**state.step_count
    np.divide(state.second_moment, bias2, out=scratch)
    np.sqrt(scratch, out=scratch)
    scratch += state.epsilon
    update = np.divide(state.first_moment, bias1)
    update /= scratch
    update *= state.learning_rate
    net.params -= update
    return net, state


def sync_target(main: MLP, target: MLP, mode: str = "lump", kappa: float | None = None) -> MLP:
    """Lump copy or gradual blend of the main parameters into the target."""
    if main.layer_sizes != target.layer_sizes:
        raise ValueError("main and target architectures differ")
    if mode == "lump":
        target.params[:] = main.params
    elif mode == "polyak":
        if kappa is None or not 0.0 < kappa <= 1.0:
            raise ValueError(f"polyak mode needs kappa in (0, 1], got {kappa}")
        target.params *= 1.0 - kappa
        target.params += kappa * main.params
    else:
        raise ValueError(f"unknown sync mode {mode!r}")
    return target


def finite_difference_gradient(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    step: float = 1e-5,
) -> np.ndarray:
    """Central finite differences of ``loss_fn`` around ``params``."""
    gradient = np.zeros_like(params)
    probe = params.copy()
    for i in range(len(params)):
        original = probe[i]
        probe[i] = original + step
        upper = loss_fn(probe)
        probe[i] = original - step
        lower = loss_fn(probe)
        probe[i] = original
        gradient[i] = (upper - lower) / (2.0 * step)
    return gradient


def run_gradient_check(
    n_instances: int = 20,
    seed: int = 0,
    layer_sizes: Sequence[int] = (9, 8, 6, 3),
    batch_size: int = 4,
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> dict:
    """Compare analytic and central finite-difference gradients.

    Per-coordinate relative error uses a small denominator floor so that
    coordinates with near-zero gradient are judged on absolute error.
    Instances whose hidden pre-activations sit within 1e-3 of a ReLU
    kink are redrawn, since finite differences are meaningless across a
    kink.  Returns a report dict with the maximum relative error.
    """
    rng = rng_stream(seed, "gradient-check")
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < n_instances:
        attempts += 1
        if attempts > 50 * n_instances:
            raise RuntimeError("could not sample enough kink-free instances")
        net = init_mlp(layer_sizes, rng)
        inputs = rng.uniform(-1.0, 1.0, size=(batch_size, layer_sizes[0]))
        option_ids = rng.integers(layer_sizes[-1], size=batch_size)
        targets = rng.normal(size=batch_size)
        _, pre_activations, _ = _forward_cached(net, inputs)
        margin = min(float(np.abs(z).min()) for z in pre_activations[:-1])
        if margin < 1e-3:
            continue
        _, analytic = loss_and_gradient(net, inputs, option_ids, targets)

        def loss_at(params: np.ndarray) -> float:
            probe_net = MLP(net.layer_sizes, params)
            value, _ = loss_and_gradient(probe_net, inputs, option_ids, targets)
            return value

        numeric = finite_difference_gradient(loss_at, net.params, step)
        denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
        relative = np.abs(analytic - numeric) / denominator
        worst = max(worst, float(relative.max()))
        checked += 1
    return {
        "instances": checked,
        "max_relative_error": worst,
        "tolerance": tolerance,
        "passed": worst < tolerance,
    }
