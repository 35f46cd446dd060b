"""Binary checkpoint format shared by networks and oracle tables.

Layout (little-endian throughout)::

    magic            8 bytes  b"SMDPRLC1"
    kind             u16 length + utf-8 bytes
    config_hash      u16 length + utf-8 bytes
    seed             i64
    epoch            i64
    n_layer_sizes    i64, then i64 per entry
    n_params         i64, then f64 per entry

For network kinds the payload length must equal the parameter count
implied by the layer sizes; for ``tabular-oracle`` the header holds the
table shape and the payload its row-major entries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import approx, tabular

MAGIC = b"SMDPRLC1"
NETWORK_KINDS = ("main", "target", "cloner")
TABLE_KIND = "tabular-oracle"


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Checkpoint:
    kind: str
    layer_sizes: tuple[int, ...]
    payload: np.ndarray
    config_hash: str
    seed: int
    epoch: int

    def __post_init__(self) -> None:
        if self.kind not in NETWORK_KINDS + (TABLE_KIND,):
            raise CheckpointError(f"unknown checkpoint kind {self.kind!r}")
        if self.kind == TABLE_KIND:
            expected = int(np.prod(self.layer_sizes))
        else:
            expected = approx.parameter_count(self.layer_sizes)
        if self.payload.shape != (expected,):
            raise CheckpointError(
                f"payload length {self.payload.shape} does not match header "
                f"arithmetic ({expected},) for kind {self.kind!r}"
            )


def from_mlp(net: approx.MLP, kind: str, config_hash: str, seed: int, epoch: int) -> Checkpoint:
    return Checkpoint(kind, net.layer_sizes, net.params.copy(), config_hash, seed, epoch)


def to_mlp(checkpoint: Checkpoint) -> approx.MLP:
    if checkpoint.kind == TABLE_KIND:
        raise CheckpointError("checkpoint holds a table, not network parameters")
    return approx.MLP(checkpoint.layer_sizes, checkpoint.payload.copy())


def from_table(table: tabular.TabularQ, config_hash: str, seed: int) -> Checkpoint:
    return Checkpoint(
        TABLE_KIND,
        table.values.shape,
        table.values.ravel().copy(),
        f"{config_hash}:{table.variant_name}",
        seed,
        epoch=0,
    )


def to_table(checkpoint: Checkpoint) -> tabular.TabularQ:
    if checkpoint.kind != TABLE_KIND:
        raise CheckpointError(f"checkpoint kind {checkpoint.kind!r} is not a table")
    variant_name = checkpoint.config_hash.rsplit(":", 1)[-1]
    return tabular.TabularQ(checkpoint.payload.reshape(checkpoint.layer_sizes), variant_name)


def _write_string(chunks: list[bytes], text: str) -> None:
    encoded = text.encode("utf-8")
    chunks.append(struct.pack("<H", len(encoded)))
    chunks.append(encoded)


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    chunks: list[bytes] = [MAGIC]
    _write_string(chunks, checkpoint.kind)
    _write_string(chunks, checkpoint.config_hash)
    chunks.append(struct.pack("<qq", checkpoint.seed, checkpoint.epoch))
    chunks.append(struct.pack("<q", len(checkpoint.layer_sizes)))
    chunks.append(struct.pack(f"<{len(checkpoint.layer_sizes)}q", *checkpoint.layer_sizes))
    payload = np.ascontiguousarray(checkpoint.payload, dtype="<f8")
    chunks.append(struct.pack("<q", len(payload)))
    chunks.append(payload.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.blob):
            raise CheckpointError("truncated checkpoint file")
        piece = self.blob[self.offset : self.offset + count]
        self.offset += count
        return piece

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (length,) = self.unpack("<H")
        return self.take(length).decode("utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    kind = reader.string()
    config_hash = reader.string()
    seed, epoch = reader.unpack("<qq")
    (n_sizes,) = reader.unpack("<q")
    layer_sizes = tuple(reader.unpack(f"<{n_sizes}q"))
    (n_params,) = reader.unpack("<q")
    payload = np.frombuffer(reader.take(8 * n_params), dtype="<f8").astype(np.float64)
    return Checkpoint(kind, layer_sizes, payload, config_hash, seed, epoch)
