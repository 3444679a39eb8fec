"""Small self-describing binary container for named double/complex arrays.

Layout: 8-byte magic, u32 version, u64 header length, JSON header, payload.
The header records array order, shapes, dtypes, and the payload SHA-256, so
files round-trip bit-exactly and corruption is detected on load.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

_VERSION = 1
_DTYPES = {"<f8": "<f8", "<c16": "<c16"}


def save_arrays(path: str, magic: bytes, header: dict,
                arrays: list[tuple[str, np.ndarray]]) -> None:
    assert len(magic) == 8
    chunks = []
    index = []
    offset = 0
    for name, arr in arrays:
        dt = "<c16" if np.iscomplexobj(arr) else "<f8"
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        index.append({"name": name, "shape": list(arr.shape),
                      "dtype": dt, "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    full_header = {
        **header,
        "arrays": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hdr = json.dumps(full_header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(_VERSION.to_bytes(4, "little"))
        fh.write(len(hdr).to_bytes(8, "little"))
        fh.write(hdr)
        fh.write(payload)


def load_arrays(path: str, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        got = fh.read(8)
        if got != magic:
            raise ValueError(f"{path}: wrong container magic {got!r}")
        version = int.from_bytes(fh.read(4), "little")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        hdr_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hdr_len))
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ValueError(f"{path}: payload checksum mismatch")
    arrays = {}
    for entry in header["arrays"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return header, arrays
