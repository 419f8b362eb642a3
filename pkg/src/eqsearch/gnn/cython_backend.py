"""Compiled-kernel backend; mirrors numpy_backend's interface exactly."""

from __future__ import annotations

import numpy as np

from . import _gatkernel as _k

NAME = "cython"


def layer_forward(H, W, a, src, dst, offsets, slope, activate):
    Z = np.ascontiguousarray(H @ W)
    pre, alpha, S, out = _k.edge_forward(
        Z, np.ascontiguousarray(a), src, dst, offsets, float(slope), bool(activate)
    )
    cache = {
        "H": H, "W": W, "a": a, "src": src, "dst": dst, "offsets": offsets,
        "slope": slope, "activate": activate, "Z": Z, "pre": pre,
        "alpha": alpha, "S": S,
    }
    return out, cache


def layer_backward(cache, dOut):
    H, W, a = cache["H"], cache["W"], cache["a"]
    dZ, da = _k.edge_backward(
        cache["Z"], np.ascontiguousarray(a), cache["src"], cache["dst"],
        cache["offsets"], float(cache["slope"]), bool(cache["activate"]),
        cache["pre"], cache["alpha"], cache["S"],
        np.ascontiguousarray(dOut, dtype=np.float64),
    )
    dW = H.T @ dZ
    dH = dZ @ W.T
    return dH, dW, da
