"""Minimal dense MLP engine: forward/backward, Adam, checkpoints.

Everything is float64 numpy for deterministic desk-scale verification.
Parameters are plain lists of (W, b) arrays; forward returns a cache that
backward consumes, so nets stay cheap to snapshot and restore.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

CHECKPOINT_VERSION = 1


class ShapeMismatch(Exception):
    pass


class CorruptFile(Exception):
    pass


class VersionMismatch(Exception):
    pass


class Act(str, Enum):
    LEAKY_RELU = "leaky_relu"  # slope 0.01
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    LINEAR = "linear"


_LEAK = 0.01


def _act_forward(act: Act, z):
    if act is Act.RELU:
        return np.maximum(z, 0.0)
    if act is Act.LEAKY_RELU:
        return np.where(z > 0.0, z, _LEAK * z)
    if act is Act.TANH:
        return np.tanh(z)
    if act is Act.SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _act_backward(act: Act, z, a):
    if act is Act.RELU:
        return (z > 0.0).astype(float)
    if act is Act.LEAKY_RELU:
        return np.where(z > 0.0, 1.0, _LEAK)
    if act is Act.TANH:
        return 1.0 - a * a
    if act is Act.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple  # (input, h1, ..., output)
    activations: tuple  # one Act per weight layer

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "activations", tuple(Act(a) for a in self.activations))
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError("need at least input and output sizes >= 1")
        if len(self.activations) != len(self.layer_sizes) - 1:
            raise ValueError("one activation per weight layer")


MlpParams = list  # list[(W, b)] with W (out, in), b (out,)


def init(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """He init for ReLU-family layers, Xavier for the rest; zero biases."""
    params = []
    for i, act in enumerate(spec.activations):
        fan_in, fan_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        if act in (Act.RELU, Act.LEAKY_RELU):
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        params.append((rng.normal(0.0, std, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return params


def forward(params: MlpParams, spec: MlpSpec, x):
    """Return (output, cache). Accepts (n,) or (batch, n) inputs."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[-1] != spec.layer_sizes[0]:
        raise ShapeMismatch(f"input width {a.shape[-1]} != {spec.layer_sizes[0]}")
    cache = {"inputs": [a], "zs": []}
    for (w, b), act in zip(params, spec.activations):
        z = a @ w.T + b
        a = _act_forward(act, z)
        cache["zs"].append(z)
        cache["inputs"].append(a)
    out = a[0] if single else a
    return out, cache


def backward(params: MlpParams, spec: MlpSpec, cache, output_gradient):
    """Exact reverse-mode gradients; returns (param grads, input gradient)."""
    g = np.asarray(output_gradient, dtype=float)
    single = g.ndim == 1
    if single:
        g = g[None, :]
    grads = [None] * len(params)
    for i in reversed(range(len(params))):
        w, _ = params[i]
        z = cache["zs"][i]
        a_out = cache["inputs"][i + 1]
        a_in = cache["inputs"][i]
        gz = g * _act_backward(spec.activations[i], z, a_out)
        grads[i] = (gz.T @ a_in, gz.sum(axis=0))
        g = gz @ w
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: list = field(default_factory=list)  # [(mW, vW, mb, vb)]

    def _ensure(self, params):
        if not self.moments:
            self.moments = [
                (np.zeros_like(w), np.zeros_like(w), np.zeros_like(b), np.zeros_like(b))
                for w, b in params
            ]


def adam_step(params: MlpParams, grads, state: AdamState) -> MlpParams:
    """One Adam update with bias correction; returns new params."""
    state._ensure(params)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    out = []
    for (w, b), (gw, gb), mom in zip(params, grads, state.moments):
        mw, vw, mb, vb = mom
        mw *= b1
        mw += (1 - b1) * gw
        vw *= b2
        vw += (1 - b2) * gw * gw
        mb *= b1
        mb += (1 - b1) * gb
        vb *= b2
        vb += (1 - b2) * gb * gb
        mw_hat = mw / (1 - b1**t)
        vw_hat = vw / (1 - b2**t)
        mb_hat = mb / (1 - b1**t)
        vb_hat = vb / (1 - b2**t)
        out.append(
            (
                w - state.learning_rate * mw_hat / (np.sqrt(vw_hat) + state.eps),
                b - state.learning_rate * mb_hat / (np.sqrt(vb_hat) + state.eps),
            )
        )
    return out


def copy_params(params: MlpParams) -> MlpParams:
    return [(w.copy(), b.copy()) for w, b in params]


def save_checkpoint(params: MlpParams, spec: MlpSpec, path, adam_state: AdamState | None = None, extra: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "spec": {"layer_sizes": list(spec.layer_sizes), "activations": [a.value for a in spec.activations]},
        "layers": [
            {"w": w.ravel().tolist(), "b": b.tolist(), "shape": list(w.shape)} for w, b in params
        ],
    }
    if extra:
        payload["extra"] = extra
    if adam_state is not None:
        payload["adam"] = {
            "learning_rate": adam_state.learning_rate,
            "beta1": adam_state.beta1,
            "beta2": adam_state.beta2,
            "eps": adam_state.eps,
            "step_count": adam_state.step_count,
            "moments": [
                {"mw": mw.ravel().tolist(), "vw": vw.ravel().tolist(), "mb": mb.tolist(), "vb": vb.tolist()}
                for mw, vw, mb, vb in adam_state.moments
            ],
        }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Return (params, spec, adam_state_or_None, extra dict)."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(str(exc)) from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise CorruptFile("missing checkpoint header")
    if payload["version"] != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {payload['version']} != {CHECKPOINT_VERSION}")
    try:
        spec = MlpSpec(tuple(payload["spec"]["layer_sizes"]), tuple(payload["spec"]["activations"]))
        params = []
        for layer in payload["layers"]:
            w = np.array(layer["w"], dtype=float).reshape(layer["shape"])
            b = np.array(layer["b"], dtype=float)
            if w.shape[0] != b.shape[0]:
                raise CorruptFile("weight/bias shape mismatch")
            params.append((w, b))
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptFile(str(exc)) from exc
    expected = [(spec.layer_sizes[i + 1], spec.layer_sizes[i]) for i in range(len(spec.activations))]
    if [w.shape for w, _ in params] != expected:
        raise CorruptFile("layer shapes do not match spec")
    adam = None
    if "adam" in payload:
        a = payload["adam"]
        adam = AdamState(a["learning_rate"], a["beta1"], a["beta2"], a["eps"], a["step_count"])
        adam.moments = [
            (
                np.array(mo["mw"], dtype=float).reshape(w.shape),
                np.array(mo["vw"], dtype=float).reshape(w.shape),
                np.array(mo["mb"], dtype=float),
                np.array(mo["vb"], dtype=float),
            )
            for mo, (w, _) in zip(a["moments"], params)
        ]
    return params, spec, adam, payload.get("extra", {})


def gradient_check(spec: MlpSpec, params: MlpParams, x, target, eps: float = 1e-5) -> float:
    """Max relative error of backprop vs central differences on an MSE loss."""

    def loss(p):
        y, _ = forward(p, spec, x)
        return 0.5 * float(np.sum((y - target) ** 2))

    y, cache = forward(params, spec, x)
    grads, _ = backward(params, spec, cache, y - target)
    worst = 0.0
    for li, (w, b) in enumerate(params):
        for arr, g in ((w, grads[li][0]), (b, grads[li][1])):
            flat = arr.ravel()
            gflat = np.asarray(g).ravel()
            idx = np.linspace(0, flat.size - 1, min(flat.size, 25)).astype(int)
            for j in idx:
                old = flat[j]
                flat[j] = old + eps
                up = loss(params)
                flat[j] = old - eps
                dn = loss(params)
                flat[j] = old
                fd = (up - dn) / (2 * eps)
                denom = max(abs(fd), abs(gflat[j]), 1e-6)
                worst = max(worst, abs(fd - gflat[j]) / denom)
    return worst
