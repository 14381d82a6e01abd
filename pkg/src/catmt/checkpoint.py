"""Binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic "CATMT001"
    u32       format version (1)
    u32       header length L, then L bytes of UTF-8 JSON:
              {"config": ModelConfig, "meta": {...}, "optimizer": {step, beta1, beta2, eps},
               "lowercase": {"src": bool, "tgt": bool}}
    32 bytes  SHA-256 digest of the source vocabulary
    32 bytes  SHA-256 digest of the target vocabulary
    u32       tensor count N, then N records:
                u16 name length, name (UTF-8), u8 dtype (0 = float32), u8 ndim,
                ndim x u32 shape, raw float32 data in C order
    u32       CRC-32 of every preceding byte

Tensor names are model parameter names; Adam moments are stored as
``adam.m:<name>`` and ``adam.v:<name>``. The vocabularies themselves are written
next to the checkpoint as ``<path>.src.vocab`` and ``<path>.tgt.vocab``.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .model import ModelConfig, check_params
from .tokenizer import Vocab

if TYPE_CHECKING:
    from .trainer import AdamState

MAGIC = b"CATMT001"
VERSION = 1
_F32 = 0


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    optimizer: "AdamState | None"
    src_vocab: Vocab
    tgt_vocab: Vocab
    meta: dict = field(default_factory=dict)


def vocab_paths(path: str | Path) -> tuple[Path, Path]:
    return Path(f"{path}.src.vocab"), Path(f"{path}.tgt.vocab")


def to_bytes(ckpt: Checkpoint) -> bytes:
    opt = ckpt.optimizer
    header = {
        "config": asdict(ckpt.config),
        "meta": ckpt.meta,
        "optimizer": None if opt is None else {"step": opt.step, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps},
        "lowercase": {"src": ckpt.src_vocab.lowercase, "tgt": ckpt.tgt_vocab.lowercase},
    }
    tensors = dict(ckpt.params)
    if opt is not None:
        tensors.update({f"adam.m:{n}": a for n, a in opt.m.items()})
        tensors.update({f"adam.v:{n}": a for n, a in opt.v.items()})

    buf = io.BytesIO()
    buf.write(MAGIC)
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<II", VERSION, len(raw_header)))
    buf.write(raw_header)
    buf.write(ckpt.src_vocab.digest())
    buf.write(ckpt.tgt_vocab.digest())
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw_name = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(struct.pack("<HBB", len(raw_name), _F32, arr.ndim))
        buf.write(raw_name)
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes, src_vocab: Vocab, tgt_vocab: Vocab) -> Checkpoint:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if len(data) < 16:
        raise CheckpointError("checkpoint is truncated")
    if zlib.crc32(data[:-4]) != struct.unpack("<I", data[-4:])[0]:
        # distinguish a short file from a corrupted one for the message
        raise CheckpointError("checkpoint is truncated or corrupted (CRC mismatch)")
    r = _Reader(data[:-4])
    r.take(8)
    version, header_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(r.take(header_len).decode("utf-8"))
    src_digest, tgt_digest = r.take(32), r.take(32)
    if src_digest != src_vocab.digest() or tgt_digest != tgt_vocab.digest():
        raise CheckpointError("vocabulary files do not match the checkpoint digests")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        name_len, dtype, ndim = r.unpack("<HBB")
        name = r.take(name_len).decode("utf-8")
        if dtype != _F32:
            raise CheckpointError(f"{name}: unknown dtype code {dtype}")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.data):
        raise CheckpointError("trailing bytes after tensor table")

    from .trainer import AdamState

    config = ModelConfig(**header["config"])
    params = {n: a for n, a in tensors.items() if not n.startswith("adam.")}
    check_params(params, config)
    optimizer = None
    if header["optimizer"] is not None:
        o = header["optimizer"]
        optimizer = AdamState(
            {n: tensors[f"adam.m:{n}"] for n in params},
            {n: tensors[f"adam.v:{n}"] for n in params},
            o["step"],
            o["beta1"],
            o["beta2"],
            o["eps"],
        )
    return Checkpoint(config, params, optimizer, src_vocab, tgt_vocab, header["meta"])


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Atomic: each file is written to a temporary name and renamed into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    src_path, tgt_path = vocab_paths(path)
    for target, payload in (
        (src_path, ckpt.src_vocab.to_text().encode("utf-8")),
        (tgt_path, ckpt.tgt_vocab.to_text().encode("utf-8")),
        (path, to_bytes(ckpt)),
    ):
        tmp = target.with_name(target.name + ".tmp")
        with open(tmp, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, target)


def load_checkpoint(path: str | Path, expected_config: ModelConfig | None = None) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    # vocab case modes live in the header; peek at it before building the vocabs
    try:
        (header_len,) = struct.unpack("<I", data[12:16])
        header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
        lowercase = header["lowercase"]
    except (struct.error, ValueError, KeyError) as e:
        raise CheckpointError(f"{path}: checkpoint is truncated or corrupted") from e
    src_path, tgt_path = vocab_paths(path)
    ckpt = from_bytes(data, Vocab.load(src_path, lowercase["src"]), Vocab.load(tgt_path, lowercase["tgt"]))
    if expected_config is not None and ckpt.config != expected_config:
        raise CheckpointError(f"{path}: checkpoint config {ckpt.config} does not match {expected_config}")
    return ckpt
