"""Small dense-network stack for the actor and critics.

Weights are stored ``(out, in)``; inputs are rows, so a layer computes
``x @ W.T + b``.  Hidden layers use ReLU (sub-gradient 0 at 0); the head is
``tanh`` or identity.  Parameters are updated in place by :func:`adam_step`
and :func:`polyak_update`, which bump ``MlpParams.version`` so a forward cache
taken before the update can no longer be fed to :func:`backward`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

ACTIVATIONS = ("tanh", "identity")


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        object.__setattr__(self, "widths", widths)

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1


class MlpParams:
    """Per-layer weights and biases, all views into one flat buffer."""

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray], version: int = 0):
        shapes = []
        for w, b in zip(weights, biases):
            shapes.extend((w.shape, b.shape))
        dtype = np.result_type(*weights) if weights else np.float64
        self.flat = np.empty(sum(int(np.prod(s)) for s in shapes), dtype=dtype)
        self.weights, self.biases = [], []
        views = _carve(self.flat, shapes)
        for i, (w, b) in enumerate(zip(weights, biases)):
            vw, vb = views[2 * i], views[2 * i + 1]
            if w is not None:
                vw[...] = w
                vb[...] = b
            self.weights.append(vw)
            self.biases.append(vb)
        self.version = version

    @classmethod
    def empty_like(cls, other: "MlpParams") -> "MlpParams":
        out = cls.__new__(cls)
        out.flat = np.empty_like(other.flat)
        views = _carve(out.flat, [a.shape for a in other.arrays()])
        out.weights, out.biases = views[0::2], views[1::2]
        out.version = 0
        return out

    def arrays(self) -> List[np.ndarray]:
        """``[W0, b0, W1, b1, ...]`` as views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        out = MlpParams.empty_like(self)
        out.flat[...] = self.flat
        return out

    def n_params(self) -> int:
        return self.flat.size

    def bit_equal(self, other: "MlpParams") -> bool:
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(
            x.dtype == y.dtype and x.shape == y.shape and x.tobytes() == y.tobytes()
            for x, y in zip(a, b)
        )

    def to_lists(self) -> dict:
        return {
            "dtype": str(self.flat.dtype),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_lists(cls, d: dict) -> "MlpParams":
        dt = np.dtype(d["dtype"])
        return cls(
            [np.array(w, dtype=dt) for w in d["weights"]],
            [np.array(b, dtype=dt) for b in d["biases"]],
        )

    def check_spec(self, spec: MlpSpec) -> None:
        if len(self.weights) != spec.n_layers:
            raise ValueError(f"params have {len(self.weights)} layers, spec has {spec.n_layers}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (spec.widths[i + 1], spec.widths[i])
            if w.shape != want or b.shape != (want[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {want}")


def _carve(flat: np.ndarray, shapes) -> List[np.ndarray]:
    views, k = [], 0
    for s in shapes:
        n = int(np.prod(s))
        views.append(flat[k:k + n].reshape(s))
        k += n
    return views


def init_mlp(spec: MlpSpec, rng: np.random.Generator, dtype=np.float64) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights, biases)


def zeros_like(params: MlpParams) -> MlpParams:
    out = MlpParams.empty_like(params)
    out.flat[...] = 0
    return out


class Cache(NamedTuple):
    params_id: int
    version: int
    squeeze: bool
    inputs: list  # per layer: the activation fed into it
    output: np.ndarray


def forward(params: MlpParams, spec: MlpSpec, x):
    x = np.asarray(x)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != spec.n_in:
        raise ValueError(f"input has shape {x.shape}, network expects width {spec.n_in}")
    h = h.astype(params.weights[0].dtype, copy=False)
    inputs = []
    last = spec.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T
        z += b
        if i < last:
            np.maximum(z, 0.0, out=z)
        elif spec.output_activation == "tanh":
            np.tanh(z, out=z)
        h = z
    cache = Cache(id(params), params.version, squeeze, inputs, h)
    return (h[0] if squeeze else h), cache


def backward(params: MlpParams, spec: MlpSpec, cache: Cache, output_grad, need_param_grads: bool = True):
    """Reverse-mode gradients of a scalar whose gradient w.r.t. the output is ``output_grad``.

    Returns ``(param_grads, input_grad)``; ``param_grads`` is ``None`` when
    ``need_param_grads`` is false (used when only the input gradient matters).
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    g = np.asarray(output_grad, dtype=cache.output.dtype)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.output.shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {cache.output.shape}")
    if spec.output_activation == "tanh":
        g = g * (1.0 - cache.output * cache.output)
    grads = MlpParams.empty_like(params) if need_param_grads else None
    for i in range(spec.n_layers - 1, -1, -1):
        a = cache.inputs[i]
        if need_param_grads:
            np.matmul(g.T, a, out=grads.weights[i])
            np.sum(g, axis=0, out=grads.biases[i])
        g = g @ params.weights[i]
        if i > 0:
            g *= a > 0
    return grads, (g[0] if cache.squeeze else g)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: MlpParams) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat))

    def to_lists(self) -> dict:
        return {"dtype": str(self.m.dtype), "t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_lists(cls, d: dict) -> "AdamState":
        dt = np.dtype(d["dtype"])
        return cls(np.array(d["m"], dtype=dt), np.array(d["v"], dtype=dt), int(d["t"]))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(params: MlpParams, grads: MlpParams, adam: AdamState, lr: float):
    """One bias-corrected Adam update, in place.  Returns ``(params, adam)``."""
    p, g = params.flat, grads.flat
    if p.shape != g.shape or p.shape != adam.m.shape:
        raise ValueError("parameter, gradient and optimizer state shapes differ")
    if not np.isfinite(g).all():
        raise FloatingPointError("non-finite gradient passed to adam_step")
    adam.t += 1
    b1, b2 = adam.beta1, adam.beta2
    c1 = 1.0 - b1**adam.t
    c2 = 1.0 - b2**adam.t
    m, v = adam.m, adam.v
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    g2 = g * g
    g2 *= 1.0 - b2
    v += g2
    if lr != 0.0:
        denom = v / c2
        np.sqrt(denom, out=denom)
        denom += adam.eps
        step = m / denom
        step *= lr / c1
        p -= step
    params.version += 1
    return params, adam


def polyak_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """``target <- tau * online + (1 - tau) * target`` in place."""
    if target.flat.shape != online.flat.shape or any(
        a.shape != b.shape for a, b in zip(target.arrays(), online.arrays())
    ):
        raise ValueError("polyak_update needs identically shaped networks")
    t = target.flat
    t *= 1.0 - tau
    t += tau * online.flat
    target.version += 1
    return target


def copy_into(dst: MlpParams, src: MlpParams) -> None:
    dst.flat[...] = src.flat
    dst.version += 1


# -- finite-difference gradient checking ----------------------------------


def _relu_pattern(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> bytes:
    _, cache = forward(params, spec, x)
    return b"".join((a > 0).tobytes() for a in cache.inputs[1:])


def gradient_check(
    spec: MlpSpec,
    rng: np.random.Generator,
    batch: int = 4,
    h: float = 1e-5,
    max_coords_per_array: Optional[int] = 64,
    floor: float = 1e-6,
):
    """Compare :func:`backward` against central differences on a float64 net.

    The scalar checked is ``sum(out * c)`` for a random ``c``.  Coordinates
    whose ±h perturbation flips a ReLU are skipped (the function is not
    differentiable there).  Relative error is
    ``|a - n| / max(|a|, |n|, floor)``.

    Returns a dict with ``max_rel_err``, ``checked`` and ``skipped_kinks``.
    """
    params = init_mlp(spec, rng, np.float64)
    # non-zero biases so their gradients are exercised away from the init point
    for b in params.biases:
        b[...] = rng.normal(0.0, 0.1, size=b.shape)
    x = rng.normal(0.0, 1.0, size=(batch, spec.n_in))
    c = rng.normal(0.0, 1.0, size=(batch, spec.n_out))

    def loss() -> float:
        out, _ = forward(params, spec, x)
        return float(np.sum(out * c))

    _, cache = forward(params, spec, x)
    grads, gx = backward(params, spec, cache, c)
    base_pattern = _relu_pattern(params, spec, x)

    worst, checked, skipped = 0.0, 0, 0

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), floor)

    for p, g in zip(params.arrays(), grads.arrays()):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        idx = np.arange(flat_p.size)
        if max_coords_per_array is not None and flat_p.size > max_coords_per_array:
            idx = rng.choice(flat_p.size, size=max_coords_per_array, replace=False)
        for k in idx:
            old = flat_p[k]
            flat_p[k] = old + h
            lp, pat_p = loss(), _relu_pattern(params, spec, x)
            flat_p[k] = old - h
            lm, pat_m = loss(), _relu_pattern(params, spec, x)
            flat_p[k] = old
            if pat_p != base_pattern or pat_m != base_pattern:
                skipped += 1
                continue
            worst = max(worst, rel(float(flat_g[k]), (lp - lm) / (2 * h)))
            checked += 1

    flat_x = x.reshape(-1)
    for k in range(flat_x.size):
        old = flat_x[k]
        flat_x[k] = old + h
        lp, pat_p = loss(), _relu_pattern(params, spec, x)
        flat_x[k] = old - h
        lm, pat_m = loss(), _relu_pattern(params, spec, x)
        flat_x[k] = old
        if pat_p != base_pattern or pat_m != base_pattern:
            skipped += 1
            continue
        worst = max(worst, rel(float(gx.reshape(-1)[k]), (lp - lm) / (2 * h)))
        checked += 1
    return {"max_rel_err": worst, "checked": checked, "skipped_kinks": skipped}
