"""Single-file tensor container.

Layout: 8 bytes little-endian uint64 header length, then a JSON header
(format version, free-form config and metadata dicts, tensor index with
dtype/shape/byte offset per entry), then the raw little-endian tensor bytes
back to back.  Loading reproduces every array bit for bit, which is what the
resume-equivalence guarantees rest on.  The same container doubles as the
on-disk format for generated dataset packs.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError

FORMAT_VERSION = 1
_MAX_HEADER_BYTES = 64 * 1024 * 1024


@dataclass
class Checkpoint:
    tensors: dict
    model_config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def save_checkpoint(path, tensors: dict, model_config: dict = None,
                    metadata: dict = None) -> None:
    """Write tensors plus config/metadata dicts; the write is atomic."""
    index = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        orig = np.asarray(tensors[name])
        # ascontiguousarray promotes 0-d to 1-d, so record the shape first
        arr = np.ascontiguousarray(orig)
        le = arr.dtype.newbyteorder("<")
        arr = arr.astype(le, copy=False)
        raw = arr.tobytes()
        index[name] = {"dtype": le.str, "shape": list(orig.shape), "offset": offset}
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model_config or {},
        "metadata": metadata or {},
        "tensors": index,
        "payload_bytes": offset,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    """Read a container back; any structural problem raises CheckpointError."""
    try:
        with open(path, "rb") as fh:
            prefix = fh.read(8)
            if len(prefix) != 8:
                raise CheckpointError(f"{path}: truncated before the header length")
            (head_len,) = struct.unpack("<Q", prefix)
            if head_len == 0 or head_len > _MAX_HEADER_BYTES:
                raise CheckpointError(f"{path}: implausible header length {head_len}")
            head = fh.read(head_len)
            if len(head) != head_len:
                raise CheckpointError(f"{path}: truncated header")
            try:
                header = json.loads(head.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CheckpointError(f"{path}: header is not valid JSON: {exc}") from exc
            version = header.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(
                    f"{path}: unsupported format version {version!r} "
                    f"(this build reads {FORMAT_VERSION})"
                )
            payload = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc

    expected = header.get("payload_bytes")
    if expected is not None and expected != len(payload):
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header promised {expected}"
        )
    tensors = {}
    for name, entry in header.get("tensors", {}).items():
        try:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: malformed index entry for {name!r}") from exc
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        if shape == ():
            nbytes = dtype.itemsize
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: tensor {name!r} runs past the payload")
        tensors[name] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
    return Checkpoint(
        tensors=tensors,
        model_config=header.get("model_config", {}),
        metadata=header.get("metadata", {}),
        format_version=version,
    )
