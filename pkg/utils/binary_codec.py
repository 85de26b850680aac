"""Little-endian binary layouts for volumes, label maps and class embeddings.

Volume/label file:
    magic  b"TSSVOL1\\0"
    u32    H, W, D
    f32    spacing (3 values, mm/voxel)
    u8     dtype tag (0 = f32 voxels, 1 = u8 labels)
    payload, row-major with D fastest

Class-embedding file:
    magic  b"TSSEMB1\\0"
    u32    K, C_t
    f32    payload, row-major K x C_t
"""
import logging
import struct
from typing import Sequence, Tuple

import numpy as np

from utils.errors import FormatError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)

VOLUME_MAGIC = b'TSSVOL1\x00'
EMBEDDING_MAGIC = b'TSSEMB1\x00'

DTYPE_F32 = 0
DTYPE_U8 = 1

_PAYLOAD_DTYPES = {
    DTYPE_F32: np.dtype('<f4'),
    DTYPE_U8: np.dtype('u1'),
}

_VOLUME_HEADER = struct.Struct('<8s3I3fB')
_EMBEDDING_HEADER = struct.Struct('<8s2I')

_validator = InputValidator()


def encode_grid(array: np.ndarray, spacing: Sequence[float], dtype_tag: int) -> bytes:
    """Serialize a 3D grid with its spacing"""
    if dtype_tag not in _PAYLOAD_DTYPES:
        raise FormatError(f"Unknown dtype tag {dtype_tag}")
    dims = _validator.validate_dims(array.shape, 'grid dims')
    spacing = _validator.validate_spacing(spacing)
    payload = np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPES[dtype_tag]).tobytes(order='C')
    header = _VOLUME_HEADER.pack(VOLUME_MAGIC, *dims, *spacing, dtype_tag)
    return header + payload


def decode_grid(data: bytes) -> Tuple[np.ndarray, Tuple[float, float, float], int]:
    """Parse a serialized grid.

    Returns:
        (array, spacing, dtype_tag)
    """
    if len(data) < _VOLUME_HEADER.size:
        raise FormatError(f"File too short for a volume header ({len(data)} bytes)")

    magic, h, w, d, sx, sy, sz, dtype_tag = _VOLUME_HEADER.unpack_from(data, 0)
    if magic != VOLUME_MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {VOLUME_MAGIC!r}")

    dims = _validator.validate_dims((h, w, d), 'stored dims')
    spacing = _validator.validate_spacing((sx, sy, sz))

    if dtype_tag not in _PAYLOAD_DTYPES:
        raise FormatError(f"Unknown dtype tag {dtype_tag}")
    payload_dtype = _PAYLOAD_DTYPES[dtype_tag]

    expected = dims[0] * dims[1] * dims[2] * payload_dtype.itemsize
    payload = data[_VOLUME_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"Payload holds {len(payload)} bytes, expected {expected} for dims {dims}")

    array = np.frombuffer(payload, dtype=payload_dtype).reshape(dims).copy()
    return array, spacing, dtype_tag


def encode_embeddings(rows: np.ndarray) -> bytes:
    """Serialize a K x C_t class-embedding matrix"""
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise FormatError(f"Embeddings must be a non-empty 2D matrix, got shape {rows.shape}")
    k, c_t = rows.shape
    payload = np.ascontiguousarray(rows, dtype='<f4').tobytes(order='C')
    return _EMBEDDING_HEADER.pack(EMBEDDING_MAGIC, k, c_t) + payload


def decode_embeddings(data: bytes) -> np.ndarray:
    """Parse a serialized class-embedding matrix"""
    if len(data) < _EMBEDDING_HEADER.size:
        raise FormatError(f"File too short for an embedding header ({len(data)} bytes)")

    magic, k, c_t = _EMBEDDING_HEADER.unpack_from(data, 0)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    if k < 1 or c_t < 1:
        raise FormatError(f"Embedding dims must be positive, got {k}x{c_t}")

    payload = data[_EMBEDDING_HEADER.size:]
    if len(payload) != k * c_t * 4:
        raise FormatError(f"Payload holds {len(payload)} bytes, expected {k * c_t * 4}")

    return np.frombuffer(payload, dtype='<f4').reshape(k, c_t).astype(np.float32)
