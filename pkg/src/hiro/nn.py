"""Feed-forward tanh networks with analytic gradients, Adam, and soft updates.

Parameters of a network live in one contiguous float64 vector; the per-layer
weight matrices and bias vectors are views into it.  Optimizer state and
target-network averaging then work on a single array.

Inputs may be a single vector ``(n_in,)`` or a batch ``(batch, n_in)``.  For a
batch, parameter gradients are summed over rows.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError

# tanh saturates to exactly +-1 in float64; clamp so scaled outputs stay strictly inside the range
_TANH_LIMIT = 1.0 - 1e-12


def _layer_views(flat, layer_sizes):
    weights, biases = [], []
    offset = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = flat[offset:offset + n_in * n_out].reshape(n_out, n_in)
        offset += n_in * n_out
        b = flat[offset:offset + n_out]
        offset += n_out
        weights.append(w)
        biases.append(b)
    return weights, biases


def param_count(layer_sizes):
    return sum(i * o + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


class Mlp:
    """Weights and biases of a tanh MLP.

    ``output_range`` of ``None`` gives an identity output layer; a pair
    ``(low, high)`` squashes the output with tanh and rescales it into that box.
    """

    def __init__(self, layer_sizes, output_range=None, flat=None):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvalidArgumentError(f"bad layer sizes {layer_sizes}")
        n = param_count(self.layer_sizes)
        if flat is None:
            flat = np.zeros(n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise InvalidArgumentError(f"expected {n} parameters, got {flat.shape}")
        self.flat = flat
        self.weights, self.biases = _layer_views(self.flat, self.layer_sizes)
        if output_range is None:
            self.output_transform = "identity"
            self.out_low = self.out_high = None
        else:
            low, high = output_range
            n_out = self.layer_sizes[-1]
            self.out_low = np.broadcast_to(np.asarray(low, dtype=np.float64), (n_out,)).copy()
            self.out_high = np.broadcast_to(np.asarray(high, dtype=np.float64), (n_out,)).copy()
            if np.any(self.out_high <= self.out_low):
                raise InvalidArgumentError("output range must have high > low")
            self.output_transform = "tanh"

    @classmethod
    def initialized(cls, layer_sizes, rng, output_range=None):
        """Uniform init in +-1/sqrt(fan_in) for weights and biases."""
        net = cls(layer_sizes, output_range)
        for w, b in zip(net.weights, net.biases):
            bound = 1.0 / np.sqrt(w.shape[1])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return net

    @property
    def output_range(self):
        if self.output_transform == "identity":
            return None
        return self.out_low, self.out_high

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def copy(self):
        return Mlp(self.layer_sizes, self.output_range, self.flat.copy())

    def unflatten(self, flat):
        """Split a parameter-shaped vector (e.g. a gradient) into ``(weights, biases)`` views."""
        flat = np.asarray(flat)
        if flat.shape != self.flat.shape:
            raise InvalidArgumentError("vector is not congruent with parameters")
        return _layer_views(flat, self.layer_sizes)

    def __call__(self, x):
        return forward(self, x)


@dataclass
class _Cache:
    inputs: list  # input to each layer
    pre_output: np.ndarray
    squashed: np.ndarray = None
    squeeze: bool = False


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.n_in:
        raise InvalidArgumentError(f"input shape {x.shape} does not match n_in={params.n_in}")
    return x.reshape(1, -1) if x.ndim == 1 else x, x.ndim == 1


def forward_with_cache(params, x):
    h, squeeze = _as_batch(params, x)
    inputs = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T
        z += b
        h = np.tanh(z, out=z) if i < last else z
    cache = _Cache(inputs, z, squeeze=squeeze)
    if params.output_transform == "tanh":
        t = np.tanh(z)
        cache.squashed = t
        half = 0.5 * (params.out_high - params.out_low)
        h = np.clip(t, -_TANH_LIMIT, _TANH_LIMIT)
        h *= half
        h += params.out_low + half
    return (h[0] if squeeze else h), cache


def forward(params, x):
    return forward_with_cache(params, x)[0]


def backward_from_cache(params, cache, output_gradient, want_params=True):
    g = np.asarray(output_gradient, dtype=np.float64)
    g = g.reshape(1, -1) if g.ndim == 1 else g
    if g.shape != cache.pre_output.shape:
        raise InvalidArgumentError(f"output gradient shape {g.shape} != {cache.pre_output.shape}")
    if params.output_transform == "tanh":
        t = cache.squashed
        half = 0.5 * (params.out_high - params.out_low)
        g = g * half * (1.0 - t * t) * (np.abs(t) < _TANH_LIMIT)
    grad = np.zeros_like(params.flat) if want_params else None
    if want_params:
        dws, dbs = _layer_views(grad, params.layer_sizes)
    for i in range(len(params.weights) - 1, -1, -1):
        h = cache.inputs[i]
        if want_params:
            dws[i][...] = g.T @ h
            dbs[i][...] = g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            g = g * (1.0 - h * h)
    return grad, (g[0] if cache.squeeze else g)


def backward(params, x, output_gradient):
    """Gradients of ``sum(output * output_gradient)``.

    Returns ``(param_gradient, input_gradient)``; the parameter gradient is a
    flat vector laid out like ``params.flat`` (see :meth:`Mlp.unflatten`).
    """
    _, cache = forward_with_cache(params, x)
    return backward_from_cache(params, cache, output_gradient)


@dataclass
class AdamState:
    n_params: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default=None)
    second_moment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.n_params)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.n_params)

    @classmethod
    def for_params(cls, params, learning_rate):
        return cls(params.flat.size, learning_rate)


def adam_step(state, params, gradient):
    """One bias-corrected Adam descent step, applied to ``params`` in place."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != params.flat.shape or state.first_moment.shape != params.flat.shape:
        raise InvalidArgumentError("gradient not congruent with parameters")
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient")
    state.step_count += 1
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** state.step_count)
    v_hat = v / (1.0 - state.beta2 ** state.step_count)
    params.flat -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


def soft_update(target, online, tau):
    """Polyak averaging: ``target <- (1 - tau) * target + tau * online``."""
    if target.layer_sizes != online.layer_sizes:
        raise InvalidArgumentError("target and online networks differ in shape")
    if not 0.0 <= tau <= 1.0:
        raise InvalidArgumentError(f"tau={tau} outside [0, 1]")
    if tau == 1.0:
        target.flat[...] = online.flat
    else:
        target.flat *= 1.0 - tau
        target.flat += tau * online.flat
