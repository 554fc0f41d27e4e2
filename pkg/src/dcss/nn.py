"""Dense MLP substrate: forward/backward with exact analytic gradients and Adam.

Everything is float64 and purely functional over value types; the same
(params, input) pair always produces bitwise-identical results within a
process.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

ACTIVATIONS = ("relu", "linear", "softmax")


@dataclass
class MlpParams:
    """Per-layer weights (out x in), biases (out,), and activation tags.

    The softmax tag is only permitted on the final layer; consecutive layer
    dimensions must agree.
    """

    weights: list
    biases: list
    activations: list

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        if not self.weights:
            raise ConfigError("an MLP needs at least one layer")
        for idx, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r} at layer {idx}")
            if act == "softmax" and idx != len(self.weights) - 1:
                raise ConfigError("softmax is only permitted on the final layer")
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {idx}: weight {w.shape} and bias {b.shape} disagree")
            if idx > 0 and w.shape[1] != self.weights[idx - 1].shape[0]:
                raise ShapeError(
                    f"layer {idx}: input dim {w.shape[1]} != previous output "
                    f"{self.weights[idx - 1].shape[0]}"
                )

    @property
    def layer_dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self):
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


@dataclass
class ForwardCache:
    """Per-layer tensors kept for the backward pass."""

    inputs: list  # inputs[l] is the input of layer l; inputs[0] is the batch
    preacts: list  # affine outputs before the activation
    output: np.ndarray


@dataclass
class AdamState:
    """First/second-moment accumulators mirroring an MlpParams instance."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params):
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
        )


def init_params(layer_dims, activations, seed):
    """He-scaled random weights (std sqrt(2/fan_in)) and zero biases.

    Identical seeds produce bitwise-identical parameters.
    """
    if len(layer_dims) < 2:
        raise ConfigError("layer_dims needs at least an input and an output size")
    if len(activations) != len(layer_dims) - 1:
        raise ConfigError("need one activation tag per layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.standard_normal((fan_out, fan_in)) * scale)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, list(activations))


def softmax(z):
    """Row-wise softmax, stabilized by max subtraction."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mlp_forward(params, x):
    """Run the net on a batch (rows are samples); returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"input must be 2-D, got shape {x.shape}")
    if x.shape[1] != params.weights[0].shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} features, first layer expects {params.weights[0].shape[1]}"
        )
    inputs, preacts = [x], []
    h = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        z = h @ w.T + b
        preacts.append(z)
        if act == "relu":
            h = np.maximum(z, 0.0)
        elif act == "linear":
            h = z
        else:
            h = softmax(z)
        inputs.append(h)
    return h, ForwardCache(inputs=inputs, preacts=preacts, output=h)


def mlp_backward(params, cache, output_grad):
    """Backpropagate d(loss)/d(output) through the cached forward pass.

    Returns (param_grads, input_grad) where param_grads mirrors the
    MlpParams layout.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache.output.shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {cache.output.shape}")
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for idx in range(len(params.weights) - 1, -1, -1):
        act = params.activations[idx]
        if act == "relu":
            gz = g * (cache.preacts[idx] > 0.0)
        elif act == "linear":
            gz = g
        else:
            y = cache.inputs[idx + 1]
            gz = y * (g - (g * y).sum(axis=1, keepdims=True))
        grad_w[idx] = gz.T @ cache.inputs[idx]
        grad_b[idx] = gz.sum(axis=0)
        g = gz @ params.weights[idx]
    return MlpParams(grad_w, grad_b, list(params.activations)), g


def adam_step(params, grads, state, lr):
    """One Adam update with bias correction; returns (params', state').

    Raises NumericError naming the first layer whose gradient is non-finite.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    new_w, new_b = [], []
    m_w, v_w, m_b, v_b = [], [], [], []
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for idx in range(len(params.weights)):
        for g in (grads.weights[idx], grads.biases[idx]):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient at layer {idx}")
        mw = b1 * state.m_w[idx] + (1 - b1) * grads.weights[idx]
        vw = b2 * state.v_w[idx] + (1 - b2) * grads.weights[idx] ** 2
        mb = b1 * state.m_b[idx] + (1 - b1) * grads.biases[idx]
        vb = b2 * state.v_b[idx] + (1 - b2) * grads.biases[idx] ** 2
        new_w.append(params.weights[idx] - lr * (mw / corr1) / (np.sqrt(vw / corr2) + eps))
        new_b.append(params.biases[idx] - lr * (mb / corr1) / (np.sqrt(vb / corr2) + eps))
        m_w.append(mw)
        v_w.append(vw)
        m_b.append(mb)
        v_b.append(vb)
    params_out = MlpParams(new_w, new_b, list(params.activations))
    state_out = AdamState(m_w, v_w, m_b, v_b, t=t, beta1=b1, beta2=b2, eps=eps)
    return params_out, state_out
