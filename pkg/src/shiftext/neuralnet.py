"""Minimal float64 MLP: forward pass, MSE-on-selected-action backprop, Adam, checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1

# list of (weight (fan_in, fan_out), bias (fan_out,)) pairs
Params = list[tuple[np.ndarray, np.ndarray]]


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> Params:
    """He-uniform weights, zero biases. ``sizes`` = [inputs, hidden..., outputs]."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params.append((w, np.zeros(fan_out)))
    return params


def layer_sizes(params: Params) -> list[int]:
    return [params[0][0].shape[0]] + [w.shape[1] for w, _ in params]


def forward(params: Params, x: np.ndarray) -> np.ndarray:
    """Affine+ReLU chain with a linear output layer; ``x`` is (F,) or (B, F)."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != params[0][0].shape[0]:
        raise ShapeError(f"input width {h.shape[-1]} != {params[0][0].shape[0]}")
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def _forward_cache(params: Params, x: np.ndarray):
    acts = [x]
    h = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def mse_loss_and_gradient(
    params: Params, inputs: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, Params]:
    """Mean of ``(target - Q(s, a))**2`` over the batch and its gradient w.r.t. every parameter.

    Only the output unit of each sample's action receives an error signal.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    if actions.shape != (n,) or targets.shape != (n,):
        raise ShapeError("actions and targets must be 1-D and match the batch size")
    acts = _forward_cache(params, x)
    q = acts[-1]
    rows = np.arange(n)
    err = q[rows, actions] - targets
    loss = float(np.mean(err**2))
    delta = np.zeros_like(q)
    delta[rows, actions] = 2.0 * err / n
    grads: Params = [None] * len(params)  # type: ignore[list-item]
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w.T) * (acts[i] > 0.0)
    return loss, grads


def clone_params(params: Params) -> Params:
    return [(w.copy(), b.copy()) for w, b in params]


def params_equal(a: Params, b: Params) -> bool:
    return len(a) == len(b) and all(
        np.array_equal(wa, wb) and np.array_equal(ba, bb) for (wa, ba), (wb, bb) in zip(a, b)
    )


def _check_shapes(params: Params, other: Params, what: str) -> None:
    if len(params) != len(other) or any(
        w.shape != gw.shape or b.shape != gb.shape for (w, b), (gw, gb) in zip(params, other)
    ):
        raise ShapeError(f"{what} shapes do not match parameters")


@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
        m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        return cls(m, v, 0, lr, beta1, beta2, eps)


def adam_step(params: Params, state: AdamState, grads: Params) -> Params:
    """In-place bias-corrected Adam update; returns ``params`` for chaining."""
    _check_shapes(params, grads, "gradient")
    _check_shapes(params, state.m, "Adam moment")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for (p_w, p_b), (g_w, g_b), (m_w, m_b), (v_w, v_b) in zip(params, grads, state.m, state.v):
        for p, g, m, v in ((p_w, g_w, m_w, v_w), (p_b, g_b, m_b, v_b)):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------- checkpoints

def _dump(params: Params) -> list[dict]:
    return [
        {"weight_shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()} for w, b in params
    ]


def _load(layers: list[dict]) -> Params:
    out = []
    for i, layer in enumerate(layers):
        shape = tuple(layer["weight_shape"])
        w = np.asarray(layer["weight"], dtype=np.float64)
        b = np.asarray(layer["bias"], dtype=np.float64)
        if len(shape) != 2 or w.size != shape[0] * shape[1] or b.shape != (shape[1],):
            raise CheckpointError(f"layer {i}: inconsistent shapes")
        out.append((w.reshape(shape), b))
    for i in range(1, len(out)):
        if out[i][0].shape[0] != out[i - 1][0].shape[1]:
            raise CheckpointError(f"layer {i}: input width does not chain")
    return out


@dataclass
class Checkpoint:
    params: Params
    catalog_fingerprint: str
    adam: AdamState | None = None
    meta: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        doc = {
            "version": CHECKPOINT_VERSION,
            "catalog_fingerprint": self.catalog_fingerprint,
            "layers": _dump(self.params),
            "meta": self.meta,
        }
        if self.adam is not None:
            a = self.adam
            doc["adam"] = {
                "step": a.step,
                "lr": a.lr,
                "beta1": a.beta1,
                "beta2": a.beta2,
                "eps": a.eps,
                "m": _dump(a.m),
                "v": _dump(a.v),
            }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path, expected_fingerprint: str | None = None) -> Checkpoint:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
        fp = doc.get("catalog_fingerprint")
        if expected_fingerprint is not None and fp != expected_fingerprint:
            raise CheckpointError(f"catalog fingerprint {fp} does not match {expected_fingerprint}")
        params = _load(doc["layers"])
        adam = None
        if "adam" in doc:
            a = doc["adam"]
            m, v = _load(a["m"]), _load(a["v"])
            _check_shapes(params, m, "Adam moment")
            _check_shapes(params, v, "Adam moment")
            adam = AdamState(m, v, int(a["step"]), a["lr"], a["beta1"], a["beta2"], a["eps"])
        return cls(params, fp, adam, doc.get("meta", {}))
