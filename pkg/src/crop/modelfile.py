"""Versioned binary container for model parameters.

Layout (all integers little-endian):
    magic  b"CROPMDL"
    u16    format version (currently 1)
    u8     flags (bit 0: mask bitset present)
    u8     metric code (index into METRIC_CODES)
    u32    number of layer dims, then that many u32 layer dims
    per layer: weight matrix then bias vector, float64 row-major
    mask bitset (if flagged): all weight entries flattened in layer order,
        packed 8 per byte, little bit order
    u64    metadata byte length, then UTF-8 metadata

Round trips are bit-exact; equality of files implies equality of models.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import StructureError
from .metrics import MetricKind
from .model import ModelParams
from .pruning import Mask

MAGIC = b"CROPMDL"
VERSION = 1
METRIC_CODES = (MetricKind.ACCURACY, MetricKind.BALANCED_ACCURACY, MetricKind.F1_BINARY)


@dataclass
class ModelFile:
    model: ModelParams
    metric: MetricKind = MetricKind.ACCURACY
    mask: Mask | None = None
    metadata: str = ""

    def to_bytes(self) -> bytes:
        dims = self.model.layer_dims
        out = bytearray()
        out += MAGIC
        out += struct.pack("<H", VERSION)
        out += struct.pack("<B", 1 if self.mask is not None else 0)
        out += struct.pack("<B", METRIC_CODES.index(MetricKind(self.metric)))
        out += struct.pack("<I", len(dims))
        out += struct.pack(f"<{len(dims)}I", *dims)
        for w, b in zip(self.model.weights, self.model.biases):
            out += np.ascontiguousarray(w, dtype="<f8").tobytes()
            out += np.ascontiguousarray(b, dtype="<f8").tobytes()
        if self.mask is not None:
            if not self.mask.congruent_with(self.model):
                raise StructureError("mask does not match the model it is stored with")
            bits = self.mask.flat().astype(np.uint8)
            out += np.packbits(bits, bitorder="little").tobytes()
        meta = self.metadata.encode("utf-8")
        out += struct.pack("<Q", len(meta))
        out += meta
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelFile":
        if blob[:7] != MAGIC:
            raise StructureError("bad magic: not a model file")
        at = 7
        (version,) = struct.unpack_from("<H", blob, at)
        at += 2
        if version != VERSION:
            raise StructureError(f"unsupported model file version {version}")
        (flags,) = struct.unpack_from("<B", blob, at)
        at += 1
        (metric_code,) = struct.unpack_from("<B", blob, at)
        at += 1
        if metric_code >= len(METRIC_CODES):
            raise StructureError(f"unknown metric code {metric_code}")
        (n_dims,) = struct.unpack_from("<I", blob, at)
        at += 4
        dims = list(struct.unpack_from(f"<{n_dims}I", blob, at))
        at += 4 * n_dims
        if n_dims < 2:
            raise StructureError("model file must hold at least two layer dims")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(blob, dtype="<f8", count=fan_out * fan_in, offset=at)
            at += 8 * fan_out * fan_in
            b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=at)
            at += 8 * fan_out
            weights.append(w.reshape(fan_out, fan_in).copy())
            biases.append(b.copy())
        model = ModelParams(weights, biases)
        mask = None
        if flags & 1:
            n_entries = model.num_weights
            n_bytes = (n_entries + 7) // 8
            bits = np.unpackbits(
                np.frombuffer(blob, dtype=np.uint8, count=n_bytes, offset=at),
                bitorder="little",
            )[:n_entries].astype(np.float64)
            at += n_bytes
            masks, pos = [], 0
            for w in model.weights:
                masks.append(bits[pos : pos + w.size].reshape(w.shape))
                pos += w.size
            mask = Mask(masks)
        (meta_len,) = struct.unpack_from("<Q", blob, at)
        at += 8
        metadata = blob[at : at + meta_len].decode("utf-8")
        at += meta_len
        if at != len(blob):
            raise StructureError(f"{len(blob) - at} trailing bytes in model file")
        return cls(model=model, metric=METRIC_CODES[metric_code], mask=mask, metadata=metadata)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelFile":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
