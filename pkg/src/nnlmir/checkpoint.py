"""Binary container for model parameters and document-vector tables.

Layout (all integers little-endian)::

    magic   8 bytes  b"NNLMCKPT"
    u32     format version (1)
    u32     config length L, then L bytes of UTF-8 JSON (NeuralConfig fields)
    u32     tensor count, then per tensor:
              u32 name length, UTF-8 name
              u32 ndim, ndim x u64 dims
              prod(dims) float64, row-major
    u32     document-vector table count, then per table:
              u32 name length, UTF-8 name
              u32 mode length, UTF-8 mode ("sum" | "product")
              u32 dim, u32 row count, then per row:
                u32 doc_id length, UTF-8 doc_id, dim x float64

A file may hold tensors, tables, or both. The Huffman tree is not stored;
it is rebuilt deterministically from the vocabulary frequencies.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import DataError
from .nnlm import DocVector, NeuralConfig, NeuralParams

MAGIC = b"NNLMCKPT"
VERSION = 1


def _w_u32(f, x: int) -> None:
    f.write(struct.pack("<I", x))


def _w_str(f, s: str) -> None:
    raw = s.encode("utf-8")
    _w_u32(f, len(raw))
    f.write(raw)


def _r(f, n: int) -> bytes:
    raw = f.read(n)
    if len(raw) != n:
        raise DataError("truncated checkpoint")
    return raw


def _r_u32(f) -> int:
    return struct.unpack("<I", _r(f, 4))[0]


def _r_str(f) -> str:
    return _r(f, _r_u32(f)).decode("utf-8")


def write_checkpoint(f, config: Optional[NeuralConfig] = None,
                     tensors: Optional[Mapping[str, np.ndarray]] = None,
                     docvec_tables: Optional[Mapping[str, Mapping[str, DocVector]]] = None) -> None:
    f.write(MAGIC)
    _w_u32(f, VERSION)
    cfg = json.dumps(asdict(config) if config is not None else {}, sort_keys=True)
    _w_str(f, cfg)
    tensors = tensors or {}
    _w_u32(f, len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        _w_str(f, name)
        _w_u32(f, arr.ndim)
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(arr.tobytes())
    docvec_tables = docvec_tables or {}
    _w_u32(f, len(docvec_tables))
    for name, table in docvec_tables.items():
        modes = {dv.mode for dv in table.values()}
        if len(modes) > 1:
            raise ValueError(f"table {name!r} mixes merge modes")
        dims = {dv.z.shape[0] for dv in table.values()}
        _w_str(f, name)
        _w_str(f, modes.pop() if modes else "sum")
        _w_u32(f, dims.pop() if dims else 0)
        _w_u32(f, len(table))
        for doc_id in sorted(table):
            _w_str(f, doc_id)
            f.write(np.ascontiguousarray(table[doc_id].z, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path):
    """Returns ``(config or None, tensors, docvec_tables)``."""
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        version = _r_u32(f)
        if version != VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        cfg = json.loads(_r_str(f))
        config = NeuralConfig(**cfg) if cfg else None
        tensors = {}
        for _ in range(_r_u32(f)):
            name = _r_str(f)
            ndim = _r_u32(f)
            shape = struct.unpack(f"<{ndim}Q", _r(f, 8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            tensors[name] = np.frombuffer(_r(f, 8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        tables = {}
        for _ in range(_r_u32(f)):
            name = _r_str(f)
            mode = _r_str(f)
            dim = _r_u32(f)
            rows = {}
            for _ in range(_r_u32(f)):
                doc_id = _r_str(f)
                rows[doc_id] = DocVector(np.frombuffer(_r(f, 8 * dim), dtype="<f8").astype(np.float64), mode)
            tables[name] = rows
    return config, tensors, tables


def params_from_tensors(tensors: Mapping[str, np.ndarray]) -> NeuralParams:
    missing = {"embeddings", "A", "b", "hsm"} - set(tensors)
    if missing:
        raise DataError(f"checkpoint lacks tensors {sorted(missing)}")
    return NeuralParams(
        tensors["embeddings"].copy(), tensors["A"].copy(), tensors["b"].copy(),
        tensors["B"].copy() if "B" in tensors else None, tensors["hsm"].copy(),
    )


def save_model(f, config: NeuralConfig, params: NeuralParams) -> None:
    write_checkpoint(f, config, params.tensors())


def load_model(path: str | Path) -> tuple[NeuralConfig, NeuralParams]:
    config, tensors, _ = read_checkpoint(path)
    if config is None:
        raise DataError(f"{path}: checkpoint has no model config")
    return config, params_from_tensors(tensors)
