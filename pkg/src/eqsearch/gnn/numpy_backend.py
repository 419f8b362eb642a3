"""Numpy implementation of the graph-attention layer kernels.

Edges must be grouped by destination node (the network code sorts them and
passes group start offsets); every node is guaranteed at least one incoming
edge through its self-loop, so the segment reductions are total.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def layer_forward(H, W, a, src, dst, offsets, slope, activate):
    """One attention layer: e = LeakyReLU(a.[Wh_i || Wh_j]), softmax, aggregate.

    Returns (out, cache); cache holds everything the backward pass needs.
    """
    out_dim = W.shape[1]
    Z = H @ W
    a_dst, a_src = a[:out_dim], a[out_dim:]
    pre = Z[dst] @ a_dst + Z[src] @ a_src
    e = np.where(pre > 0, pre, slope * pre)
    m = np.maximum.reduceat(e, offsets)
    ex = np.exp(e - m[dst])
    denom = np.add.reduceat(ex, offsets)
    alpha = ex / denom[dst]
    S = np.zeros_like(Z)
    np.add.at(S, dst, alpha[:, None] * Z[src])
    out = np.where(S > 0, S, np.expm1(S)) if activate else S
    cache = {
        "H": H, "W": W, "a": a, "src": src, "dst": dst, "offsets": offsets,
        "slope": slope, "activate": activate, "Z": Z, "pre": pre,
        "alpha": alpha, "S": S,
    }
    return out, cache


def layer_backward(cache, dOut):
    """Gradients (dH, dW, da) for one layer given dLoss/dOut."""
    H, W, a = cache["H"], cache["W"], cache["a"]
    src, dst, offsets = cache["src"], cache["dst"], cache["offsets"]
    slope, Z, pre = cache["slope"], cache["Z"], cache["pre"]
    alpha, S = cache["alpha"], cache["S"]
    out_dim = W.shape[1]
    a_dst, a_src = a[:out_dim], a[out_dim:]

    dS = dOut * np.where(S > 0, 1.0, np.exp(S)) if cache["activate"] else dOut.copy()

    dalpha = np.sum(dS[dst] * Z[src], axis=1)
    dZ = np.zeros_like(Z)
    np.add.at(dZ, src, alpha[:, None] * dS[dst])

    # softmax backward per destination segment
    t = np.add.reduceat(alpha * dalpha, offsets)
    de = alpha * (dalpha - t[dst])
    dpre = de * np.where(pre > 0, 1.0, slope)

    da_dst = dpre @ Z[dst]
    da_src = dpre @ Z[src]
    np.add.at(dZ, dst, dpre[:, None] * a_dst[None, :])
    np.add.at(dZ, src, dpre[:, None] * a_src[None, :])

    dW = H.T @ dZ
    dH = dZ @ W.T
    return dH, dW, np.concatenate([da_dst, da_src])
