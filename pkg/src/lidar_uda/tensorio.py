"""Self-describing binary tensor container used by every pipeline stage.

Layout (little-endian): magic ``LUDA1``, u32 rank, u32 dims[rank],
u8 dtype tag, then the payload in row-major order. Round trips are
bit-exact for all supported dtypes.
"""

import os
import struct

import numpy as np

from .errors import CorruptFile

MAGIC = b"LUDA1"

_DTYPE_TAGS = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<u4"): 2,
}
_TAG_DTYPES = {tag: dt for dt, tag in _DTYPE_TAGS.items()}


def export_tensor(data, path):
    """Write ``data`` to ``path`` atomically (write-temp-then-rename)."""
    arr = np.ascontiguousarray(data)
    if arr.dtype not in _DTYPE_TAGS:
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype("<f8")
        elif np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
            arr = arr.astype("<u4")
        else:
            raise CorruptFile(f"unsupported dtype {arr.dtype}")
    tag = _DTYPE_TAGS[arr.dtype]
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<B", tag)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(arr.tobytes(order="C"))
    os.replace(tmp, path)


def import_tensor(path):
    """Read a tensor written by :func:`export_tensor`."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise CorruptFile(f"{path}: bad magic")
    off = len(MAGIC)
    (rank,) = struct.unpack_from("<I", blob, off)
    off += 4
    if rank > 8 or len(blob) < off + 4 * rank + 1:
        raise CorruptFile(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    (tag,) = struct.unpack_from("<B", blob, off)
    off += 1
    if tag not in _TAG_DTYPES:
        raise CorruptFile(f"{path}: unknown dtype tag {tag}")
    dtype = _TAG_DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = count * dtype.itemsize
    payload = blob[off:]
    if len(payload) != expected:
        raise CorruptFile(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return arr.copy()
