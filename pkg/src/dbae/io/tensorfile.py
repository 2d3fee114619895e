"""Binary tensor files.

Layout: magic ``b"DBT1"``, dtype code (u8: 0 = f32, 1 = f64), ndim (u8),
``ndim`` little-endian u32 dims, then the row-major little-endian payload.
"""

import struct

import numpy as np

from dbae.errors import MagicError, ShapeError, TruncationError

MAGIC = b"DBT1"
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_OF = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def encode_tensor(arr):
    arr = np.asarray(arr)
    if arr.dtype not in _CODE_OF:
        if arr.dtype.kind in "iub":
            arr = arr.astype(np.float64)
        else:
            raise ShapeError(f"unsupported dtype {arr.dtype}")
    if arr.ndim > 255:
        raise ShapeError("too many dimensions")
    code = _CODE_OF[arr.dtype]
    head = MAGIC + struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_CODES[code]).tobytes()


def decode_tensor(buf, source="<buffer>"):
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise MagicError(f"{source}: not a tensor file (magic {bytes(buf[:4])!r}, expected {MAGIC!r})")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in _CODES:
        raise MagicError(f"{source}: unknown dtype code {code}")
    head = 6 + 4 * ndim
    if len(buf) < head:
        raise TruncationError(f"{source}: header truncated (expected {head} bytes, got {len(buf)})")
    shape = struct.unpack_from(f"<{ndim}I", buf, 6)
    dtype = _CODES[code]
    expected = head + int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(buf) != expected:
        raise TruncationError(f"{source}: expected {expected} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=dtype, offset=head).reshape(shape).astype(dtype.newbyteorder("="))


def write_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr))


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensor(fh.read(), str(path))
