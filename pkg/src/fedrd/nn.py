"""Small dense network engine with manual reverse-mode gradients.

Models are stacks of ``Linear -> [LayerNorm] -> activation`` blocks. Inputs
may be a single vector or a 2-D array of row vectors; layer normalization is
computed per row, so a batched call is exactly a stack of per-sample calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import rng as rng_mod
from .exceptions import DomainError, InvalidSpecError, NumericError, ParameterError, ShapeError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "none")
LN_EPS = 1e-5
PRED_CLAMP = 1e-7


@dataclass(frozen=True)
class LayerSpec:
    in_width: int
    out_width: int
    norm: bool = False
    activation: str = "none"


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    def validate(self) -> None:
        if not self.layers:
            raise InvalidSpecError("model needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.in_width < 1 or layer.out_width < 1:
                raise InvalidSpecError(f"layer {i} has a zero width")
            if layer.activation not in ACTIVATIONS:
                raise InvalidSpecError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.norm and layer.out_width < 2:
                raise InvalidSpecError(f"layer {i}: normalization needs at least 2 units")
            if i and self.layers[i - 1].out_width != layer.in_width:
                raise InvalidSpecError(
                    f"layer {i} input width {layer.in_width} does not match "
                    f"previous output width {self.layers[i - 1].out_width}"
                )

    @property
    def in_width(self) -> int:
        return self.layers[0].in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].out_width


def embedding_spec(in_width: int, embedding_size: int, hidden: Sequence[int] = (128, 64)) -> ModelSpec:
    """Transaction/account body: normalized hidden layers, ReLU after the
    last hidden normalization, tanh on the embedding."""
    widths = [in_width, *hidden]
    layers = []
    for j in range(len(hidden)):
        act = "relu" if j == len(hidden) - 1 else "none"
        layers.append(LayerSpec(widths[j], widths[j + 1], norm=True, activation=act))
    layers.append(LayerSpec(widths[-1], embedding_size, norm=False, activation="tanh"))
    return ModelSpec(tuple(layers))


def fusion_spec(in_width: int, hidden: int = 32) -> ModelSpec:
    """Fusion head: one normalized hidden layer and a sigmoid output unit."""
    return ModelSpec(
        (
            LayerSpec(in_width, hidden, norm=True, activation="relu"),
            LayerSpec(hidden, 1, norm=False, activation="sigmoid"),
        )
    )


@dataclass
class ParamSet:
    """Per-layer parameter arrays: ``W`` (out, in), ``b``; ``gamma``/``beta``
    for normalized layers. Gradients use the same container."""

    spec: ModelSpec
    layers: list[dict[str, np.ndarray]]

    @property
    def size(self) -> int:
        return int(sum(a.size for layer in self.layers for a in layer.values()))

    def items(self) -> Iterator[tuple[int, str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, arr in layer.items():
                yield i, name, arr

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, [{k: v.copy() for k, v in layer.items()} for layer in self.layers])

    def zeros_like(self) -> "ParamSet":
        return ParamSet(self.spec, [{k: np.zeros_like(v) for k, v in layer.items()} for layer in self.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, _, arr in self.items()])

    def from_flat(self, vec: np.ndarray) -> "ParamSet":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ShapeError(f"expected flat vector of length {self.size}, got {vec.shape}")
        out, pos = [], 0
        for layer in self.layers:
            d = {}
            for k, v in layer.items():
                d[k] = vec[pos : pos + v.size].reshape(v.shape).copy()
                pos += v.size
            out.append(d)
        return ParamSet(self.spec, out)

    def tobytes(self) -> bytes:
        return self.flat().tobytes()

    def scaled(self, factor: float) -> "ParamSet":
        return ParamSet(self.spec, [{k: v * factor for k, v in layer.items()} for layer in self.layers])

    def __add__(self, other: "ParamSet") -> "ParamSet":
        return ParamSet(
            self.spec,
            [{k: a[k] + b[k] for k in a} for a, b in zip(self.layers, other.layers)],
        )

    def equal(self, other: "ParamSet") -> bool:
        return self.tobytes() == other.tobytes()


@dataclass
class Tape:
    spec: ModelSpec
    caches: list[dict[str, np.ndarray]]
    vector_input: bool
    consumed: bool = field(default=False)


def build_model(spec: ModelSpec, seed: int) -> ParamSet:
    """Fan-in uniform initialization, deterministic in ``(spec, seed)``."""
    spec.validate()
    gen = rng_mod.stream(seed, rng_mod.INIT)
    layers = []
    for layer in spec.layers:
        bound = 1.0 / np.sqrt(layer.in_width)
        d = {
            "W": gen.uniform(-bound, bound, size=(layer.out_width, layer.in_width)),
            "b": gen.uniform(-bound, bound, size=layer.out_width),
        }
        if layer.norm:
            d["gamma"] = np.ones(layer.out_width)
            d["beta"] = np.zeros(layer.out_width)
        layers.append(d)
    return ParamSet(spec, layers)


def _activate(kind: str, u: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "tanh":
        return np.tanh(u)
    if kind == "sigmoid":
        # split form avoids overflow in exp for large |u|
        out = np.empty_like(u)
        pos = u >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
        e = np.exp(u[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return u


def _activation_grad(kind: str, u: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return g * (u > 0)
    if kind == "tanh":
        return g * (1.0 - a * a)
    if kind == "sigmoid":
        return g * a * (1.0 - a)
    return g


def forward(params: ParamSet, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=float)
    vector_input = x.ndim == 1
    h = x[None, :] if vector_input else x
    if h.ndim != 2 or h.shape[1] != params.spec.in_width:
        raise ShapeError(f"input width {h.shape[-1]} does not match model input width {params.spec.in_width}")
    if not np.isfinite(h).all():
        raise DomainError("non-finite model input")
    caches = []
    for layer, p in zip(params.spec.layers, params.layers):
        cache = {"x": h}
        u = h @ p["W"].T + p["b"]
        if layer.norm:
            mu = u.mean(axis=1, keepdims=True)
            inv_std = 1.0 / np.sqrt(u.var(axis=1, keepdims=True) + LN_EPS)
            xhat = (u - mu) * inv_std
            cache["xhat"] = xhat
            cache["inv_std"] = inv_std
            u = xhat * p["gamma"] + p["beta"]
        h = _activate(layer.activation, u)
        cache["u"] = u
        cache["a"] = h
        caches.append(cache)
    out = h[0] if vector_input else h
    return out, Tape(params.spec, caches, vector_input)


def backward(params: ParamSet, tape: Tape, grad_out: np.ndarray) -> tuple[ParamSet, np.ndarray]:
    """Gradients of ``sum(output * grad_out)`` w.r.t. parameters and input.

    For batched input the parameter gradient is summed over rows and the
    input gradient is returned per row.
    """
    if tape.consumed:
        raise ParameterError("tape already consumed by a previous backward call")
    if tape.spec != params.spec or len(tape.caches) != len(params.layers):
        raise ShapeError("tape was recorded for a different model")
    g = np.asarray(grad_out, dtype=float)
    if tape.vector_input:
        g = g[None, :]
    expected = tape.caches[-1]["a"].shape
    if g.shape != expected:
        raise ShapeError(f"grad_out shape {g.shape} does not match output shape {expected}")
    tape.consumed = True

    grads: list[dict[str, np.ndarray]] = [dict() for _ in params.layers]
    for i in range(len(params.layers) - 1, -1, -1):
        layer, p, cache = params.spec.layers[i], params.layers[i], tape.caches[i]
        g = _activation_grad(layer.activation, cache["u"], cache["a"], g)
        if layer.norm:
            xhat = cache["xhat"]
            grads[i]["gamma"] = (g * xhat).sum(axis=0)
            grads[i]["beta"] = g.sum(axis=0)
            dxhat = g * p["gamma"]
            g = cache["inv_std"] * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            )
        grads[i]["W"] = g.T @ cache["x"]
        grads[i]["b"] = g.sum(axis=0)
        g = g @ p["W"]
    # keep key order identical to the parameter dicts
    ordered = [{k: grads[i][k] for k in p} for i, p in enumerate(params.layers)]
    grad_in = g[0] if tape.vector_input else g
    return ParamSet(params.spec, ordered), grad_in


def bce_loss(pred, label):
    """Binary cross-entropy and its derivative w.r.t. the prediction.

    Predictions are clamped to ``[1e-7, 1 - 1e-7]``; the derivative is taken
    at the clamped value. Works elementwise on arrays.
    """
    y = np.asarray(label, dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DomainError("labels must be 0 or 1")
    p = np.clip(np.asarray(pred, dtype=float), PRED_CLAMP, 1.0 - PRED_CLAMP)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    dpred = (1.0 - y) / (1.0 - p) - y / p
    if loss.ndim == 0:
        return float(loss), float(dpred)
    return loss, dpred


def check_finite(grads: ParamSet) -> None:
    for i, layer in enumerate(grads.layers):
        for name, arr in layer.items():
            if not np.isfinite(arr).all():
                raise NumericError(f"non-finite gradient in layer {i} ({name})", layer=i)


class Optimizer:
    """SGD or bias-corrected Adam over a :class:`ParamSet`.

    :meth:`delta` advances the state and returns the amount to subtract, so a
    single state can drive several identical replicas.
    """

    def __init__(self, kind: str = "adam", lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if kind not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {kind!r}")
        if lr <= 0:
            raise ParameterError("learning rate must be positive")
        self.kind = kind
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: ParamSet | None = None
        self.v: ParamSet | None = None

    def delta(self, grads: ParamSet) -> ParamSet:
        check_finite(grads)
        if self.kind == "sgd":
            return grads.scaled(self.lr)
        if self.m is None:
            self.m = grads.zeros_like()
            self.v = grads.zeros_like()
        elif self.m.spec != grads.spec:
            raise ShapeError("gradient shapes do not match optimizer state")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for gl, ml, vl in zip(grads.layers, self.m.layers, self.v.layers):
            d = {}
            for k, g in gl.items():
                ml[k] = self.beta1 * ml[k] + (1.0 - self.beta1) * g
                vl[k] = self.beta2 * vl[k] + (1.0 - self.beta2) * g * g
                d[k] = self.lr * (ml[k] / c1) / (np.sqrt(vl[k] / c2) + self.eps)
            out.append(d)
        return ParamSet(grads.spec, out)

    def step(self, params: ParamSet, grads: ParamSet) -> ParamSet:
        """Update ``params`` in place and return it."""
        if grads.spec != params.spec:
            raise ShapeError("gradient shapes do not match parameters")
        apply_delta(params, self.delta(grads))
        return params


def apply_delta(params: ParamSet, delta: ParamSet) -> None:
    for pl, dl in zip(params.layers, delta.layers):
        for k in pl:
            pl[k] -= dl[k]
