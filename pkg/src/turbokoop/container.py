"""Self-describing binary container for fitted models.

Layout::

    magic      8 bytes   b"TKOOPMDL"
    hdr_len    uint64    little-endian length of the JSON header
    header     hdr_len bytes of UTF-8 JSON (sorted keys)
    payload    concatenated little-endian float64 arrays

The header records the format version, a type tag, free-form metadata and,
for each array, its name, shape and byte offset into the payload.  Writing
the same model twice gives identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ModelFormatError

MAGIC = b"TKOOPMDL"
FORMAT_VERSION = 1
_F8 = np.dtype("<f8")


def write_container(path, type_tag: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    index = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype=_F8)
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        buf = a.tobytes(order="C")
        chunks.append(buf)
        offset += len(buf)
    header = {
        "format_version": FORMAT_VERSION,
        "type": type_tag,
        "dtype": "<f8",
        "meta": meta,
        "arrays": index,
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hdr)))
        fh.write(hdr)
        for buf in chunks:
            fh.write(buf)


def read_container(path, expected_type: str) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    (hdr_len,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16 : 16 + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    if header.get("type") != expected_type:
        raise ModelFormatError(
            f"{path}: holds a {header.get('type')!r} model, expected {expected_type!r}"
        )
    payload = memoryview(data)[16 + hdr_len :]
    arrays = {}
    try:
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            stop = start + count * 8
            if stop > len(payload):
                raise ModelFormatError(f"{path}: array {entry['name']!r} is truncated")
            arrays[entry["name"]] = (
                np.frombuffer(payload[start:stop], dtype=_F8).reshape(shape).astype(np.float64)
            )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed array index ({exc})") from None
    return header["meta"], arrays
