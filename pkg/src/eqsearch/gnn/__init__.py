"""Graph-attention actor/critic with a compiled kernel and numpy fallback.

The attention kernels exist twice: a Cython extension (built at install
time) and a pure numpy implementation.  Selection happens here at import;
set EQSEARCH_GAT_BACKEND to "numpy" or "cython" to force one, default
"auto" prefers the compiled kernel when present.
"""

import os

from . import numpy_backend

_requested = os.environ.get("EQSEARCH_GAT_BACKEND", "auto").lower()

backend = numpy_backend
if _requested in ("auto", "cython"):
    try:
        from . import cython_backend

        backend = cython_backend
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "EQSEARCH_GAT_BACKEND=cython but the compiled kernel is missing; "
                "reinstall the package with a C compiler available"
            )
elif _requested != "numpy":
    raise ValueError(f"unknown EQSEARCH_GAT_BACKEND value: {_requested}")

BACKEND_NAME = backend.NAME

from .network import (  # noqa: E402
    GatLayerParams,
    GatNetworkParams,
    Gradients,
    ForwardTrace,
    init_params,
    network_forward,
    network_backward,
    critic_value,
    critic_upstream,
    actor_readout,
    actor_upstream,
    HIDDEN_DIM,
    INPUT_DIM,
)
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointFormatError  # noqa: E402
from .optim import Adam  # noqa: E402

__all__ = [
    "backend",
    "BACKEND_NAME",
    "numpy_backend",
    "GatLayerParams",
    "GatNetworkParams",
    "Gradients",
    "ForwardTrace",
    "init_params",
    "network_forward",
    "network_backward",
    "critic_value",
    "critic_upstream",
    "actor_readout",
    "actor_upstream",
    "HIDDEN_DIM",
    "INPUT_DIM",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointFormatError",
    "Adam",
]
