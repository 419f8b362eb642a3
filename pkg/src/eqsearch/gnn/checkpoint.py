"""Binary checkpoint format for the actor/critic parameter pair.

Layout: 8-byte magic, 4-byte little-endian header length, UTF-8 JSON header
(format version, head dims, seed, matrix shapes), then every matrix in
declared order as raw little-endian float64.  A JSON sidecar next to the
file carries free-form training metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import GatLayerParams, GatNetworkParams

MAGIC = b"EQGATCK1"
FORMAT_VERSION = 1


class CheckpointFormatError(Exception):
    pass


def _shapes(params: GatNetworkParams) -> list[list[int]]:
    out = []
    for layer in params.layers:
        out.append(list(layer.W.shape))
        out.append(list(layer.a.shape))
    return out


def save_checkpoint(
    path: str | Path,
    actor: GatNetworkParams,
    critic: GatNetworkParams,
    seed: int,
    metadata: dict | None = None,
) -> None:
    path = Path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "actor_head_dim": actor.head_dim,
        "critic_head_dim": critic.head_dim,
        "seed": seed,
        "actor_shapes": _shapes(actor),
        "critic_shapes": _shapes(critic),
    }
    header_bytes = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for mat in actor.flat() + critic.flat():
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(metadata or {}, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path):
    """Returns (actor_params, critic_params, seed, metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    (header_len,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12 : 12 + header_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: format version {header.get('format_version')} != {FORMAT_VERSION}"
        )

    offset = 12 + header_len

    def read_net(shapes, head_dim) -> GatNetworkParams:
        nonlocal offset
        mats = []
        for shape in shapes:
            count = int(np.prod(shape))
            end = offset + 8 * count
            if end > len(raw):
                raise CheckpointFormatError(f"{path}: truncated parameter data")
            mats.append(np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy())
            offset = end
        layers = [
            GatLayerParams(W=mats[i], a=mats[i + 1]) for i in range(0, len(mats), 2)
        ]
        return GatNetworkParams(layers=layers, head_dim=head_dim)

    actor = read_net(header["actor_shapes"], header["actor_head_dim"])
    critic = read_net(header["critic_shapes"], header["critic_head_dim"])

    sidecar = path.with_suffix(path.suffix + ".meta.json")
    metadata = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return actor, critic, header["seed"], metadata
