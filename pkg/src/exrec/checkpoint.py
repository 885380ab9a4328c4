"""Named-tensor checkpoint container.

Layout: one ASCII header line ``exrec-ckpt 1 <catalog> <dim> <decay> <alpha>``
followed by binary tensor records, each ``(u32 name length, name bytes,
u32 rank, u32 dims..., float32 little-endian payload)``. Tensors are written
in sorted-name order so the same state always produces the same bytes, and
save(load(path)) round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1
_MAGIC = "exrec-ckpt"


@dataclass
class Checkpoint:
    catalog_size: int
    dim: int
    decay: float
    alpha: float
    tensors: dict[str, np.ndarray]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header = (
        f"{_MAGIC} {FORMAT_VERSION} {ckpt.catalog_size} {ckpt.dim} "
        f"{ckpt.decay!r} {ckpt.alpha!r}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for name in sorted(ckpt.tensors):
            data = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 6 or header[0] != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(header[1]) != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header[1]}")
        catalog_size, dim = int(header[2]), int(header[3])
        decay, alpha = float(header[4]), float(header[5])
        tensors: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            payload = fh.read(4 * count)
            if len(payload) != 4 * count:
                raise ValueError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return Checkpoint(catalog_size, dim, decay, alpha, tensors)
