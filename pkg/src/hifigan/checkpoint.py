"""HFGC checkpoint container.

Layout (little-endian): magic ``HFGC``, u32 version, u32 entry count, then for
each entry: u16 name length, UTF-8 name, u32 rank, ``rank`` x u32 dims, and the
values as f32 in row-major order. Entries keep their insertion order, which is
the parameter order of the models they came from.
"""

import os
import struct
import tempfile
from typing import Dict, Mapping, Optional

import numpy as np

MAGIC = b"HFGC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write(path, payload: bytes):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_state(state: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, value in state.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"entry name too long: {name[:40]}...")
        arr = np.array(value, dtype="<f4", order="C")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_state(raw: bytes, source="checkpoint") -> Dict[str, np.ndarray]:
    def need(offset, size, what):
        if offset + size > len(raw):
            raise CheckpointError(f"{source}: truncated while reading {what}")

    need(0, 12, "header")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{source}: bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported version {version}")
    pos = 12
    state: Dict[str, np.ndarray] = {}
    for i in range(count):
        need(pos, 2, f"entry {i} name length")
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        need(pos, nlen + 4, f"entry {i} name")
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need(pos, 4 * rank, f"dims of {name}")
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        need(pos, 4 * n, f"data of {name}")
        state[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        pos += 4 * n
    if pos != len(raw):
        raise CheckpointError(f"{source}: {len(raw) - pos} trailing bytes")
    return state


def save_state(path, state: Mapping[str, np.ndarray]):
    atomic_write(path, encode_state(state))


def load_state(path) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        return decode_state(fh.read(), source=str(path))


def save_models(path, models: Mapping[str, "object"], extra: Optional[Mapping[str, np.ndarray]] = None):
    """Save several modules under distinct name prefixes (``gen``, ``mpd``, ``msd``...)."""
    state: Dict[str, np.ndarray] = {}
    for prefix, model in models.items():
        state.update(model.state_dict(prefix))
    if extra:
        state.update(extra)
    save_state(path, state)


def load_models(path, models: Mapping[str, "object"], strict=True) -> Dict[str, np.ndarray]:
    """Load modules saved by :func:`save_models`; returns entries no model claimed.

    With ``strict`` the file may only contain entries under the given prefixes.
    """
    state = load_state(path)
    rest = dict(state)
    for prefix, model in models.items():
        own = {k: v for k, v in state.items() if k.startswith(prefix + ".")}
        model.load_state_dict(own, prefix)
        for k in own:
            rest.pop(k)
    if strict and rest:
        raise CheckpointError(f"{path}: unknown entries {sorted(rest)[:5]}")
    return rest
