"""Minimal deterministic MLP engine with hand-written reverse-mode gradients.

Tensors are plain numpy arrays (float32 for training, float64 for gradient
checks). The only kernel is a batched dense matrix multiply; the supported
topology is a stack of linear layers with per-layer activations and optional
skip concatenations, which is all the radiance field needs. There is no
general autodiff graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("relu", "sigmoid", "none")


def require_finite(arr: np.ndarray, what: str) -> None:
    """Raise if any entry is NaN or infinite."""
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


def init_weights(out_dim: int, in_dim: int, seed, dtype=np.float32) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (in + out)), seeded deterministically."""
    rng = np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)


@dataclass
class LinearLayer:
    """One fully connected layer. weights is [out_dim, in_dim]."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.out_dim * self.in_dim + self.out_dim

    @classmethod
    def create(cls, in_dim: int, out_dim: int, seed, dtype=np.float32) -> "LinearLayer":
        w = init_weights(out_dim, in_dim, seed, dtype)
        b = np.zeros(out_dim, dtype=dtype)
        return cls(w, b)


@dataclass
class Mlp:
    """A stack of linear layers with activation tags and optional skip inputs.

    ``skip_inputs`` maps a layer index to the name of an auxiliary input that
    is concatenated to that layer's input (after the previous activation).
    A forward pass with ``record=True`` stores the intermediates needed by
    :func:`mlp_backward`.
    """

    layers: list[LinearLayer]
    activations: list[str]
    skip_inputs: dict[int, str] = field(default_factory=dict)
    _cache: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.layers) != len(self.activations):
            raise ValueError("one activation tag per layer required")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @classmethod
    def from_dims(
        cls,
        dims: Sequence[tuple[int, int]],
        activations: Sequence[str],
        skip_inputs: dict[int, str] | None = None,
        seed: int | tuple = 0,
        dtype=np.float32,
    ) -> "Mlp":
        """Build layers for the given (in_dim, out_dim) pairs.

        Per-layer seeds are derived from the single run seed (an int or a
        tuple of non-negative ints) so that the initialization of layer k
        does not depend on the other layers.
        """
        base = (seed,) if isinstance(seed, int) else tuple(seed)
        layers = [
            LinearLayer.create(i, o, seed=list(base) + [k], dtype=dtype)
            for k, (i, o) in enumerate(dims)
        ]
        return cls(layers, list(activations), dict(skip_inputs or {}))

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def astype(self, dtype) -> "Mlp":
        layers = [LinearLayer(l.weights.astype(dtype), l.bias.astype(dtype)) for l in self.layers]
        return Mlp(layers, list(self.activations), dict(self.skip_inputs))


def _apply_activation(tag: str, z: np.ndarray) -> np.ndarray:
    # in place: z is a fresh matmul result and the backward pass only needs
    # the post-activation values (for relu the masks y>0 and z>0 coincide)
    if tag == "relu":
        return np.maximum(z, 0.0, out=z)
    if tag == "sigmoid":
        return expit(z, out=z)
    return z


def mlp_forward(
    mlp: Mlp,
    x: np.ndarray,
    aux_inputs: dict[str, np.ndarray] | None = None,
    record: bool = False,
) -> np.ndarray:
    """Run the MLP on a [batch, in_dim] input.

    Raises ValueError on width mismatches or missing skip sources and
    FloatingPointError if the output is non-finite.
    """
    aux_inputs = aux_inputs or {}
    h = x
    cache = [] if record else None
    for i, (layer, act) in enumerate(zip(mlp.layers, mlp.activations)):
        if i in mlp.skip_inputs:
            name = mlp.skip_inputs[i]
            if name not in aux_inputs:
                raise ValueError(f"skip input {name!r} not supplied for layer {i}")
            h = np.concatenate([h, aux_inputs[name]], axis=1)
        if h.shape[1] != layer.in_dim:
            raise ValueError(
                f"layer {i} expects width {layer.in_dim}, got {h.shape[1]}"
            )
        z = h @ layer.weights.T
        z += layer.bias
        y = _apply_activation(act, z)
        if record:
            cache.append((h, y))
        h = y
    require_finite(h, "mlp output")
    if record:
        mlp._cache = cache
    return h


@dataclass
class MlpGrads:
    """Gradients from one backward pass, aligned with Mlp.parameters()."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    input_grad: np.ndarray
    aux_grads: dict[str, np.ndarray]

    def flat(self) -> list[np.ndarray]:
        out = []
        for dw, db in self.layers:
            out.append(dw)
            out.append(db)
        return out


def mlp_backward(mlp: Mlp, output_grad: np.ndarray) -> MlpGrads:
    """Backpropagate through the recorded forward pass."""
    if mlp._cache is None:
        raise RuntimeError("backward called without a recorded forward pass")
    cache = mlp._cache
    g = output_grad
    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(mlp.layers)
    aux_grads: dict[str, np.ndarray] = {}
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer, act = mlp.layers[i], mlp.activations[i]
        h_in, y = cache[i]
        if g.shape != y.shape:
            raise ValueError(f"output_grad shape {g.shape} != layer {i} output {y.shape}")
        if act == "relu":
            g = g * (y > 0)
        elif act == "sigmoid":
            g = g * (y * (1.0 - y))
        dw = g.T @ h_in
        db = g.sum(axis=0)
        layer_grads[i] = (dw, db)
        dh = g @ layer.weights
        if i in mlp.skip_inputs:
            # input to layer i was concat(prev, aux); prev width is the
            # previous layer's out_dim
            if i == 0:
                raise ValueError("skip concatenation on the first layer is ambiguous")
            prev_width = mlp.layers[i - 1].out_dim
            aux_grads[mlp.skip_inputs[i]] = dh[:, prev_width:]
            dh = dh[:, :prev_width]
        g = dh
    mlp._cache = None
    return MlpGrads(layer_grads, g, aux_grads)


@dataclass
class OptimizerState:
    """Adam-family state: per-parameter moments plus hyperparameters.

    ``rectified=True`` applies the variance-rectified update (the warmup
    rectification only changes early steps); ``False`` is plain Adam.
    """

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rectified: bool = True

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 5e-4,
                   rectified: bool = True) -> "OptimizerState":
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        return cls(m=m, v=v, lr=lr, rectified=rectified)

    def hyperparams(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "rectified": self.rectified, "step": self.step_count,
        }


def optimizer_step(
    state: OptimizerState,
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
) -> Sequence[np.ndarray]:
    """Apply one optimizer update in place; returns the updated params.

    Rectified variant: with bias-corrected first moment m_hat and the
    approximated SMA length rho_t = rho_inf - 2 t b2^t / (1 - b2^t), the step
    is lr * r_t * m_hat / (sqrt(v_hat) + eps) when rho_t > 4 and the
    un-adapted lr * m_hat otherwise, where r_t is the variance rectifier.
    Zero gradients leave parameters unchanged.
    """
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("param/grad count does not match optimizer state")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    if state.rectified:
        rho_inf = 2.0 / (1.0 - b2) - 1.0
        rho_t = rho_inf - 2.0 * t * (b2 ** t) / bc2
        if rho_t > 4.0:
            rect = math.sqrt(
                ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
            )
        else:
            rect = None
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / bc1
        if state.rectified:
            if rect is None:
                p -= (state.lr * m_hat).astype(p.dtype, copy=False)
            else:
                denom = np.sqrt(v / bc2) + state.eps
                p -= (state.lr * rect * m_hat / denom).astype(p.dtype, copy=False)
        else:
            denom = np.sqrt(v / bc2) + state.eps
            p -= (state.lr * m_hat / denom).astype(p.dtype, copy=False)
    return params


def _loss_and_grad(mlp: Mlp, x: np.ndarray, loss_tag: str,
                   aux_inputs=None) -> tuple[float, list[np.ndarray]]:
    out = mlp_forward(mlp, x, aux_inputs, record=True)
    if loss_tag == "sum":
        loss = float(out.sum())
        dout = np.ones_like(out)
    elif loss_tag == "sumsq":
        loss = float(np.square(out).sum())
        dout = 2.0 * out
    else:
        raise ValueError(f"unknown loss tag {loss_tag!r}")
    grads = mlp_backward(mlp, dout)
    return loss, grads.flat()


def max_relative_error(
    loss_fn: Callable[[], tuple[float, list[np.ndarray]]],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` evaluates the current params and returns (loss, grads aligned
    with params). Params must be float64 for the differences to resolve at
    the 1e-4 scale. Returns max over entries of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    _, analytic = loss_fn()
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g, dtype=np.float64).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = loss_fn()
            flat[idx] = orig - h
            lm, _ = loss_fn()
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * h)
            a = gflat[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst


def gradient_check(mlp: Mlp, x: np.ndarray, loss_tag: str = "sum",
                   h: float = 1e-5, aux_inputs=None) -> float:
    """Finite-difference check of mlp_backward; use 64-bit inputs/weights."""
    if mlp.dtype != np.float64:
        raise ValueError("gradient_check requires a float64 MLP")
    params = mlp.parameters()
    return max_relative_error(
        lambda: _loss_and_grad(mlp, x, loss_tag, aux_inputs), params, h=h
    )


def num_params(arrays: Sequence[np.ndarray]) -> int:
    """Total scalar count across arrays (enumeration oracle for counts)."""
    return int(sum(a.size for a in arrays))
