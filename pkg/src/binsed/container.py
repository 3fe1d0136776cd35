"""Binary feature container.

Little-endian layout:

    magic      4 bytes  b"BSF1"
    version    uint32   (currently 1)
    frames     uint32
    blocks     uint32
    per block: name_len uint16, name utf-8 bytes, width uint32
    data       frames * total_width float32, row-major

Event-activity rolls reuse the container with one width-1 block per class,
so targets and features share one on-disk format.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import DataError
from .layout import FeatureLayout, FeatureMatrix

MAGIC = b"BSF1"
VERSION = 1


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    tmp = f"{os.fspath(path)}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_features(path: str | os.PathLike, matrix: FeatureMatrix) -> None:
    """Serialise a feature matrix; the write is atomic."""
    parts = [MAGIC,
             struct.pack("<III", VERSION, matrix.frame_count,
                         len(matrix.layout.blocks))]
    for name, width in matrix.layout.blocks:
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", width))
    parts.append(np.ascontiguousarray(matrix.values,
                                      dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_features(path: str | os.PathLike) -> FeatureMatrix:
    """Read a feature container back into a FeatureMatrix (float32 precision)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read feature container: {exc}") from exc
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise DataError(f"not a feature container: {path}")
    version, frames, block_count = struct.unpack("<III", blob[4:16])
    if version != VERSION:
        raise DataError(f"unsupported feature container version {version}")
    offset = 16
    blocks = []
    for _ in range(block_count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (width,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        blocks.append((name, width))
    layout = FeatureLayout(tuple(blocks))
    expected = frames * layout.width * 4
    if len(blob) - offset != expected:
        raise DataError(f"feature container payload truncated: {path}")
    values = np.frombuffer(blob, dtype="<f4", count=frames * layout.width,
                           offset=offset).reshape(frames, layout.width)
    return FeatureMatrix(values=values.astype(np.float64), layout=layout)


def export_csv(path: str | os.PathLike, matrix: FeatureMatrix) -> None:
    """Plain-text mirror of a container: header of column names, one row per frame."""
    lines = [",".join(matrix.layout.column_names())]
    for row in matrix.values:
        lines.append(",".join(format(v, ".9g") for v in row))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
