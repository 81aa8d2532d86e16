"""Binary weight container.

Layout, all little-endian:

    magic   4 bytes  "OBNW"
    version u16      currently 1
    arch    u64      FNV-1a hash of the architecture's canonical string
    count   u32      number of tensors
    tensor records, each:
        name_len u16, name utf-8,
        dtype    u8 (0=float32, 1=float64),
        ndim     u8, dims u32 * ndim,
        data     raw C-order bytes
    crc32   u32      over every preceding byte

Loading verifies magic, version, CRC, and (when the caller states an
architecture) the hash, so a corrupted or mismatched file fails loudly
instead of producing a silently broken policy.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .policy import DrivingPolicy, PolicyArch

MAGIC = b"OBNW"
VERSION = 1

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def arch_hash(arch: PolicyArch) -> int:
    return fnv1a64(arch.canonical().encode("utf-8"))


def dump_weights(state: dict[str, np.ndarray], arch: PolicyArch) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    out += struct.pack("<Q", arch_hash(arch))
    out += struct.pack("<I", len(state))
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise ValueError(f"{name}: unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def parse_weights(blob: bytes, arch: PolicyArch | None = None) -> dict[str, np.ndarray]:
    if len(blob) < 22:
        raise ValueError("weight blob truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError("weight blob failed CRC check")
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported weight container version {version}")
    (stored_hash,) = struct.unpack_from("<Q", blob, 6)
    if arch is not None and stored_hash != arch_hash(arch):
        raise ValueError("architecture hash mismatch; these weights belong to a different net")
    (count,) = struct.unpack_from("<I", blob, 14)
    offset = 18
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", blob, offset)
        offset += 2
        dims = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise ValueError(f"{name}: unknown dtype code {code}")
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        data = blob[offset : offset + nbytes]
        if len(data) != nbytes:
            raise ValueError(f"{name}: tensor data truncated")
        offset += nbytes
        state[name] = np.frombuffer(data, dtype=dtype).reshape(dims).copy()
    if offset != len(body):
        raise ValueError(f"{len(body) - offset} trailing bytes after last tensor")
    return state


def save_policy(path: str, net: DrivingPolicy) -> None:
    with open(path, "wb") as f:
        f.write(dump_weights(net.state_dict(), net.arch))


def load_policy(path: str, arch: PolicyArch, seed: int = 0) -> DrivingPolicy:
    with open(path, "rb") as f:
        state = parse_weights(f.read(), arch)
    net = DrivingPolicy(arch, seed=seed)
    net.load_state(state)
    return net
