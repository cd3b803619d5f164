"""Small dense ReLU networks with hand-written backprop and Adam.

Parameters live in one contiguous float64 vector. Layer ``k`` occupies a
weight block of shape ``(out, in)`` in row-major order followed by its bias
of length ``out``; ``MlpParams.layers`` exposes views into that vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

OUTPUT_INIT_LIMIT = 3e-3


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ConfigError("an MLP needs an input, >=1 hidden and an output layer")
        if min(widths) < 1:
            raise ConfigError("layer widths must be >= 1")

    @classmethod
    def build(cls, n_in: int, hidden_layers: int, hidden_units: int, n_out: int) -> "MlpSpec":
        return cls((n_in,) + (hidden_units,) * hidden_layers + (n_out,))

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def shapes(self) -> list:
        return [(o, i) for i, o in zip(self.widths[:-1], self.widths[1:])]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.shapes)


class MlpParams:
    """Weights and biases of one network, backed by a flat vector."""

    def __init__(self, spec: MlpSpec, flat=None):
        self.spec = spec
        if flat is None:
            flat = np.zeros(spec.n_params)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (spec.n_params,):
            raise ConfigError(
                f"parameter count {flat.size} does not match spec ({spec.n_params})"
            )
        self.flat = flat
        self.layers = []
        off = 0
        for o, i in spec.shapes:
            W = flat[off:off + o * i].reshape(o, i)
            off += o * i
            b = flat[off:off + o]
            off += o
            self.layers.append((W, b))

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, self.flat.copy())

    def assign(self, other: "MlpParams") -> None:
        self.flat[:] = other.flat

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat)))

    def __repr__(self):
        return f"MlpParams(widths={self.spec.widths})"


def init_params(spec: MlpSpec, rng) -> MlpParams:
    """He-uniform hidden weights, small uniform output weights, zero biases."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    params = MlpParams(spec)
    last = len(params.layers) - 1
    for k, (W, b) in enumerate(params.layers):
        limit = OUTPUT_INIT_LIMIT if k == last else np.sqrt(6.0 / W.shape[1])
        W[:] = rng.uniform(-limit, limit, size=W.shape)
        b[:] = 0.0
    return params


def he_limit(fan_in: int) -> float:
    return float(np.sqrt(6.0 / fan_in))


def mlp_forward(params: MlpParams, x):
    """Forward pass; returns ``(y, cache)``. ``x`` is ``(in,)`` or ``(batch, in)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[-1] != params.spec.n_in:
        raise ConfigError(f"input width {a.shape[-1]} != {params.spec.n_in}")
    inputs = []
    last = len(params.layers) - 1
    for k, (W, b) in enumerate(params.layers):
        inputs.append(a)
        z = a @ W.T + b
        a = z if k == last else np.maximum(z, 0.0)
    return (a[0] if single else a), (single, inputs)


def mlp_backward(params: MlpParams, cache, grad_out):
    """Reverse pass. Returns ``(param_grads, input_grad)``.

    ``param_grads`` is an ``MlpParams`` holding gradients in the same layout.
    """
    single, inputs = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (inputs[0].shape[0], params.spec.n_out):
        raise ConfigError(f"output gradient shape {g.shape} does not match forward pass")
    grads = MlpParams(params.spec)
    for k in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[k]
        gW, gb = grads.layers[k]
        a_in = inputs[k]
        gW[:] = g.T @ a_in
        gb[:] = g.sum(axis=0)
        g = g @ W
        if k > 0:
            # inputs[k] is relu(z) of the layer below; relu'(0) := 0
            g = g * (a_in > 0.0)
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat), lr=lr, **kw)


def adam_update(params: MlpParams, grads: MlpParams, state: AdamState):
    """One bias-corrected Adam step, applied in place. Returns ``(params, state)``."""
    g = grads.flat if isinstance(grads, MlpParams) else np.asarray(grads)
    if g.shape != params.flat.shape:
        raise ConfigError("gradient shape does not match parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    params.flat -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
