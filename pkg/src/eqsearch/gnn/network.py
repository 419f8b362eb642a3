"""Three-layer graph-attention actor/critic networks.

Fixed architecture: 7 -> 30 -> 30 -> head_dim, ELU activations on the two
hidden layers and a linear head (the head activation is deliberately
unconstrained so the actor's mu / sigma_raw outputs cover the real line).
Forward passes record a trace; `network_backward` replays it in reverse to
produce exact parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from ..rtree import GraphEncoding

INPUT_DIM = 7
HIDDEN_DIM = 30


@dataclass
class GatLayerParams:
    W: np.ndarray  # (in_dim, out_dim)
    a: np.ndarray  # (2 * out_dim,)
    leaky_slope: float = 0.2


@dataclass
class GatNetworkParams:
    layers: list[GatLayerParams]
    head_dim: int

    def copy(self) -> "GatNetworkParams":
        return GatNetworkParams(
            layers=[GatLayerParams(l.W.copy(), l.a.copy(), l.leaky_slope) for l in self.layers],
            head_dim=self.head_dim,
        )

    def flat(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out.extend([l.W, l.a])
        return out


@dataclass
class Gradients:
    layers: list[tuple[np.ndarray, np.ndarray]]  # (dW, da) per layer

    def flat(self) -> list[np.ndarray]:
        out = []
        for dW, da in self.layers:
            out.extend([dW, da])
        return out


def init_params(seed: int, head_dim: int) -> GatNetworkParams:
    """Xavier-uniform initialization, deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = [INPUT_DIM, HIDDEN_DIM, HIDDEN_DIM, head_dim]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        W = rng.uniform(-limit, limit, size=(d_in, d_out))
        a_limit = np.sqrt(6.0 / (2 * d_out + 1))
        a = rng.uniform(-a_limit, a_limit, size=2 * d_out)
        layers.append(GatLayerParams(W=W, a=a))
    return GatNetworkParams(layers=layers, head_dim=head_dim)


def _sorted_edges(edges, n_nodes: int):
    """Edge arrays grouped by destination plus segment start offsets."""
    arr = np.asarray(sorted(edges, key=lambda e: (e[1], e[0])), dtype=np.int64)
    src, dst = arr[:, 0], arr[:, 1]
    offsets = np.searchsorted(dst, np.arange(n_nodes), side="left").astype(np.int64)
    return np.ascontiguousarray(src), np.ascontiguousarray(dst), offsets


@dataclass
class ForwardTrace:
    caches: list
    outputs: np.ndarray  # (N, head_dim)
    encoding: GraphEncoding
    attention: list[np.ndarray] = field(default_factory=list)  # alpha per layer


def network_forward(enc: GraphEncoding, params: GatNetworkParams) -> ForwardTrace:
    H = np.ascontiguousarray(enc.node_features, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != INPUT_DIM:
        raise ValueError(f"node features must be (N, {INPUT_DIM}), got {H.shape}")
    src, dst, offsets = _sorted_edges(enc.edges, H.shape[0])
    caches = []
    attention = []
    n_layers = len(params.layers)
    for i, layer in enumerate(params.layers):
        activate = i < n_layers - 1
        H, cache = backend.layer_forward(
            H, layer.W, layer.a, src, dst, offsets, layer.leaky_slope, activate
        )
        caches.append(cache)
        attention.append(cache["alpha"].copy())
    return ForwardTrace(caches=caches, outputs=H, encoding=enc, attention=attention)


def network_backward(trace: ForwardTrace, dOut: np.ndarray) -> Gradients:
    """Reverse-mode gradients of a scalar loss with upstream gradient dOut."""
    if dOut.shape != trace.outputs.shape:
        raise ValueError(f"upstream gradient shape {dOut.shape} != {trace.outputs.shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    d = np.asarray(dOut, dtype=np.float64)
    for cache in reversed(trace.caches):
        d, dW, da = backend.layer_backward(cache, d)
        grads.append((dW, da))
    return Gradients(layers=list(reversed(grads)))


def critic_value(trace: ForwardTrace) -> float:
    """Graph readout for the critic: mean of the per-node scalar head."""
    return float(trace.outputs[:, 0].mean())


def critic_upstream(trace: ForwardTrace) -> np.ndarray:
    n = trace.outputs.shape[0]
    d = np.zeros_like(trace.outputs)
    d[:, 0] = 1.0 / n
    return d


def actor_readout(trace: ForwardTrace) -> tuple[float, float]:
    """(mu_raw, sigma_raw) read at the cursor row."""
    row = trace.outputs[trace.encoding.cursor_index]
    return float(row[0]), float(row[1])


def actor_upstream(trace: ForwardTrace, d_mu: float, d_sigma_raw: float) -> np.ndarray:
    d = np.zeros_like(trace.outputs)
    d[trace.encoding.cursor_index, 0] = d_mu
    d[trace.encoding.cursor_index, 1] = d_sigma_raw
    return d
