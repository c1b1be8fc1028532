"""Minimal tanh recurrent network with hand-derived backpropagation.

Shared by the speaker encoder (mean-pooled, normalized output head) and the
landmark animator (per-frame output head). Parameters live in a plain
dataclass of numpy arrays; gradients are exact and are verified against
central finite differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RnnParams:
    Wx: np.ndarray  # (d_in, hidden)
    Wh: np.ndarray  # (hidden, hidden)
    bh: np.ndarray  # (hidden,)
    Wo: np.ndarray  # (hidden, d_out)
    bo: np.ndarray  # (d_out,)

    def names(self):
        return ("Wx", "Wh", "bh", "Wo", "bo")

    def as_dict(self):
        return {n: getattr(self, n) for n in self.names()}

    def copy(self) -> "RnnParams":
        return RnnParams(**{n: getattr(self, n).copy() for n in self.names()})


def init_params(rng: np.random.Generator, d_in: int, hidden: int, d_out: int) -> RnnParams:
    return RnnParams(
        Wx=rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, hidden)),
        Wh=rng.normal(0.0, 0.5 / np.sqrt(hidden), (hidden, hidden)),
        bh=np.zeros(hidden),
        Wo=rng.normal(0.0, 0.5 / np.sqrt(hidden), (hidden, d_out)),
        bo=np.zeros(d_out),
    )


def forward_hidden(params: RnnParams, X: np.ndarray) -> np.ndarray:
    """Run the recurrence over X (batch, time, d_in) -> hidden (batch, time, H)."""
    B, T, _ = X.shape
    H = params.bh.shape[0]
    out = np.empty((B, T, H))
    h = np.zeros((B, H))
    for t in range(T):
        h = np.tanh(X[:, t] @ params.Wx + h @ params.Wh + params.bh)
        out[:, t] = h
    return out


def backward_hidden(params: RnnParams, X: np.ndarray, Hseq: np.ndarray,
                    dH: np.ndarray) -> dict:
    """Backprop dL/dHseq through the recurrence; returns parameter grads."""
    B, T, _ = X.shape
    grads = {
        "Wx": np.zeros_like(params.Wx),
        "Wh": np.zeros_like(params.Wh),
        "bh": np.zeros_like(params.bh),
    }
    carry = np.zeros((B, params.bh.shape[0]))
    for t in range(T - 1, -1, -1):
        acc = dH[:, t] + carry
        da = acc * (1.0 - Hseq[:, t] ** 2)
        grads["Wx"] += X[:, t].T @ da
        prev = Hseq[:, t - 1] if t > 0 else np.zeros_like(Hseq[:, 0])
        grads["Wh"] += prev.T @ da
        grads["bh"] += da.sum(axis=0)
        carry = da @ params.Wh.T
    return grads


def head_per_frame(params: RnnParams, Hseq: np.ndarray) -> np.ndarray:
    return Hseq @ params.Wo + params.bo


def head_pooled_normalized(params: RnnParams, Hseq: np.ndarray):
    """Mean-pool over time, project, L2-normalize rows. Returns (E, cache)."""
    P = Hseq.mean(axis=1)
    Z = P @ params.Wo + params.bo
    r = np.linalg.norm(Z, axis=1, keepdims=True)
    E = Z / np.maximum(r, 1e-12)
    return E, (P, r, E)


def backward_per_frame(params: RnnParams, Hseq: np.ndarray, dY: np.ndarray):
    """Returns (head grads, dHseq) for the per-frame output head."""
    B, T, _ = Hseq.shape
    dWo = np.einsum("bth,bto->ho", Hseq, dY)
    dbo = dY.sum(axis=(0, 1))
    dH = dY @ params.Wo.T
    return {"Wo": dWo, "bo": dbo}, dH


def backward_pooled_normalized(params: RnnParams, Hseq: np.ndarray, cache,
                               dE: np.ndarray):
    """Returns (head grads, dHseq) for the pooled normalized head."""
    P, r, E = cache
    dZ = (dE - E * np.sum(E * dE, axis=1, keepdims=True)) / np.maximum(r, 1e-12)
    dWo = P.T @ dZ
    dbo = dZ.sum(axis=0)
    dP = dZ @ params.Wo.T
    T = Hseq.shape[1]
    dH = np.repeat(dP[:, None, :], T, axis=1) / T
    return {"Wo": dWo, "bo": dbo}, dH


def global_norm(grads: dict, extra=()) -> float:
    total = sum(float(np.sum(g ** 2)) for g in grads.values())
    total += sum(float(g ** 2) for g in extra)
    return float(np.sqrt(total))


def clip_grads(grads: dict, extra: list, max_norm: float) -> float:
    norm = global_norm(grads, extra)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
        for i in range(len(extra)):
            extra[i] = extra[i] * scale
    return norm


def apply_grads(params: RnnParams, grads: dict, lr: float) -> None:
    for name in params.names():
        if name in grads:
            setattr(params, name, getattr(params, name) - lr * grads[name])


def params_to_jsonable(params: RnnParams) -> dict:
    return {n: getattr(params, n).tolist() for n in params.names()}


def params_from_jsonable(blob: dict) -> RnnParams:
    return RnnParams(**{n: np.asarray(blob[n], dtype=np.float64) for n in blob})
