"""
Tensor file format shared by frames, flow fields, stacks and checkpoints.

Layout: b"TSNT", u8 version, u8 rank, rank x u32 little-endian dims, then the
payload -- little-endian float32 for version 1, uint8 for version 2.
"""

import logging
import os
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.exceptions import TensorFormatError

logger = logging.getLogger(__name__)

MAGIC = b"TSNT"
VERSION_F32 = 1
VERSION_U8 = 2
_PAYLOAD_DTYPES = {VERSION_F32: np.dtype("<f4"), VERSION_U8: np.dtype("u1")}

PathLike = Union[str, Path]


def encode_tensor(array: np.ndarray, version: int = VERSION_F32) -> bytes:
    """Serialize an array; version 2 requires integral values in [0, 255]"""
    if version not in _PAYLOAD_DTYPES:
        raise TensorFormatError("version", f"unsupported version {version}")
    array = np.asarray(array)
    if array.ndim > 255:
        raise TensorFormatError("rank", f"rank {array.ndim} exceeds 255")
    if version == VERSION_U8:
        values = np.asarray(array, dtype=np.float64)
        if values.size and (values.min() < 0 or values.max() > 255 or np.any(values != np.round(values))):
            raise TensorFormatError("payload", "u8 payload needs integers in [0, 255]")
    header = MAGIC + struct.pack("<BB", version, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPES[version]).tobytes()
    return header + payload


def decode_tensor(buffer: bytes) -> np.ndarray:
    """Parse a serialized tensor into float64; nothing is returned on malformed input"""
    if len(buffer) < 6:
        raise TensorFormatError("header", f"truncated header ({len(buffer)} bytes)")
    if buffer[:4] != MAGIC:
        raise TensorFormatError("magic", f"expected {MAGIC!r}, got {buffer[:4]!r}")
    version, rank = struct.unpack_from("<BB", buffer, 4)
    if version not in _PAYLOAD_DTYPES:
        raise TensorFormatError("version", f"unsupported version {version}")
    dims_end = 6 + 4 * rank
    if len(buffer) < dims_end:
        raise TensorFormatError("dims", f"truncated dims for rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", buffer, 6)
    dtype = _PAYLOAD_DTYPES[version]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = buffer[dims_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            "payload", f"expected {expected} bytes for dims {dims}, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(dims)


def write_tensor(path: PathLike, array: np.ndarray, version: int = VERSION_F32) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_tensor(array, version)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    logger.debug(f"Wrote tensor {tuple(np.shape(array))} to {path}")
    return path


def read_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Tensor file not found: {path}")
    return decode_tensor(path.read_bytes())
