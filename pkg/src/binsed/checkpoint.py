"""Checkpoint serialisation.

A checkpoint freezes everything needed both to run detection (best
parameters, scaler, class order, feature combination) and to resume
training bit-exactly from an epoch boundary (current parameters, Adam
moments, early-stopping counters, RNG state, history).

Little-endian binary layout: magic ``BSC1``, version, then length-prefixed
strings and count-prefixed float64 arrays in the order written below.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .container import atomic_write_bytes
from .errors import DataError
from .layout import FeatureLayout
from .training import AdamState, EpochRecord, Scaler, TrainState

MAGIC = b"BSC1"
VERSION = 1


@dataclass
class Checkpoint:
    state: TrainState
    scaler: Scaler
    class_order: tuple[str, ...]
    combination: str
    layout: FeatureLayout


def _pack_string(text: str) -> bytes:
    encoded = text.encode("utf-8")
    return struct.pack("<H", len(encoded)) + encoded


def _pack_array(values: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(values, dtype="<f8")
    return struct.pack("<Q", flat.size) + flat.tobytes()


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.offset = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.blob):
            raise DataError(f"checkpoint truncated: {self.path}")
        out = self.blob[self.offset:self.offset + count]
        self.offset += count
        return out

    def unpack(self, fmt: str):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values[0] if len(values) == 1 else values

    def string(self) -> str:
        return self.take(self.unpack("<H")).decode("utf-8")

    def array(self) -> np.ndarray:
        size = self.unpack("<Q")
        return np.frombuffer(self.take(size * 8), dtype="<f8").copy()


def save_checkpoint(path: str | os.PathLike, checkpoint: Checkpoint) -> None:
    state = checkpoint.state
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(_pack_string(checkpoint.combination))
    parts.append(struct.pack("<I", len(checkpoint.class_order)))
    parts.extend(_pack_string(name) for name in checkpoint.class_order)
    parts.append(struct.pack("<I", len(checkpoint.layout.blocks)))
    for name, width in checkpoint.layout.blocks:
        parts.append(_pack_string(name))
        parts.append(struct.pack("<I", width))
    parts.append(struct.pack("<I", len(state.layer_sizes)))
    parts.append(struct.pack(f"<{len(state.layer_sizes)}I", *state.layer_sizes))
    parts.append(_pack_array(checkpoint.scaler.mean))
    parts.append(_pack_array(checkpoint.scaler.std))
    parts.append(_pack_array(state.params_vector))
    has_best = state.best_params_vector is not None
    parts.append(struct.pack("<B", int(has_best)))
    if has_best:
        parts.append(_pack_array(state.best_params_vector))
    parts.append(struct.pack("<Q", state.adam.step))
    parts.append(_pack_array(state.adam.first_moment))
    parts.append(_pack_array(state.adam.second_moment))
    best_er = state.best_validation_er
    parts.append(struct.pack("<QdQB", state.epoch,
                             best_er if math.isfinite(best_er) else math.inf,
                             state.epochs_since_improvement,
                             int(state.stopped)))
    rng_state = state.rng.bit_generator.state
    if rng_state["bit_generator"] != "PCG64":
        raise ValueError("only PCG64 training RNGs can be checkpointed")
    parts.append(rng_state["state"]["state"].to_bytes(16, "little"))
    parts.append(rng_state["state"]["inc"].to_bytes(16, "little"))
    parts.append(struct.pack("<II", int(rng_state["has_uint32"]),
                             int(rng_state["uinteger"])))
    parts.append(struct.pack("<Q", len(state.history)))
    for record in state.history:
        parts.append(struct.pack("<Qddd", record.epoch, record.train_loss,
                                 record.validation_er, record.validation_f))
    atomic_write_bytes(path, b"".join(parts))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    if blob[:4] != MAGIC:
        raise DataError(f"not a checkpoint file: {path}")
    reader = _Reader(blob, path)
    reader.take(4)
    version = reader.unpack("<I")
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    combination = reader.string()
    class_order = tuple(reader.string()
                        for _ in range(reader.unpack("<I")))
    blocks = []
    for _ in range(reader.unpack("<I")):
        name = reader.string()
        blocks.append((name, reader.unpack("<I")))
    layout = FeatureLayout(tuple(blocks))
    size_count = reader.unpack("<I")
    layer_sizes = tuple(int(x) for x in
                        np.frombuffer(reader.take(4 * size_count), dtype="<u4"))
    scaler = Scaler(mean=reader.array(), std=reader.array())
    params_vector = reader.array()
    best_params_vector = reader.array() if reader.unpack("<B") else None
    adam_step_count = reader.unpack("<Q")
    adam = AdamState(first_moment=reader.array(),
                     second_moment=reader.array(), step=adam_step_count)
    epoch, best_er, since, stopped = reader.unpack("<QdQB")
    pcg_state = int.from_bytes(reader.take(16), "little")
    pcg_inc = int.from_bytes(reader.take(16), "little")
    has_uint32, uinteger = reader.unpack("<II")
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": pcg_state, "inc": pcg_inc},
        "has_uint32": has_uint32,
        "uinteger": uinteger,
    }
    history = []
    for _ in range(reader.unpack("<Q")):
        rec_epoch, train_loss, val_er, val_f = reader.unpack("<Qddd")
        history.append(EpochRecord(epoch=rec_epoch, train_loss=train_loss,
                                   validation_er=val_er, validation_f=val_f))
    state = TrainState(layer_sizes=layer_sizes,
                       params_vector=params_vector,
                       adam=adam, rng=rng, epoch=epoch,
                       best_validation_er=best_er,
                       best_params_vector=best_params_vector,
                       epochs_since_improvement=since,
                       stopped=bool(stopped), history=history)
    return Checkpoint(state=state, scaler=scaler, class_order=class_order,
                      combination=combination, layout=layout)
