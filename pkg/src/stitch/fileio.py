"""On-disk formats: tensor dumps, PGM images, JSONL, content hashes.

Tensor dump layout (little-endian throughout):

    8 bytes   magic "STCHTNSR"
    4 bytes   rank (uint32)
    rank * 4  dims (uint32 each)
    payload   float32, C order

Mask/preview images are binary PGM (P5), maxval 255.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"STCHTNSR"


def write_tensor(path, array) -> None:
    arr = np.ascontiguousarray(array, dtype=np.float32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != TENSOR_MAGIC:
            raise ValueError(f"{path}: bad tensor magic {magic!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        payload = fh.read()
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(payload, dtype="<f4", count=count)
    return data.reshape(dims).astype(np.float32)


def write_pgm(path, gray) -> None:
    """gray: 2D uint8-compatible array, written as binary PGM."""
    arr = np.asarray(gray)
    if arr.ndim != 2:
        raise ValueError("PGM needs a 2D array")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes(order="C"))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM")
    # header: magic, width, height, maxval, single whitespace, then raster
    fields = []
    i = 2
    while len(fields) < 3:
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if blob[i : i + 1] == b"#":  # comment line
            while i < len(blob) and blob[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i : i + 1].isspace():
            i += 1
        fields.append(int(blob[start:i]))
    i += 1
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=i)
    return data.reshape(h, w).copy()


def mask_to_pgm(path, selected) -> None:
    """Binary mask -> PGM with 0 = background, 255 = selected."""
    write_pgm(path, np.where(np.asarray(selected, dtype=bool), 255, 0))


def pgm_to_mask(path) -> np.ndarray:
    return read_pgm(path) >= 128


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_jsonl(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
