"""Binary checkpoint: fixed header followed by a little-endian float32 parameter blob.

Header layout (little-endian):

    4s   magic b"AVQN"
    H    format version
    16s  architecture digest
    H    action count
    H    stack depth
    H    input height
    H    input width
    Q    parameter count
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .network import Architecture, flatten_params, unflatten_params

MAGIC = b"AVQN"
VERSION = 1
_HEADER = struct.Struct("<4sH16sHHHHQ")


def save_checkpoint(path, params, arch: Architecture):
    vec = flatten_params(params).astype("<f4")
    if len(vec) != arch.n_params():
        raise ConfigurationError("checkpoint", "parameters do not match the architecture")
    header = _HEADER.pack(MAGIC, VERSION, arch.digest(), arch.n_actions, arch.stack,
                          arch.height, arch.width, len(vec))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + vec.tobytes())
    tmp.replace(path)
    return path


def read_header(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ConfigurationError("checkpoint", f"{path}: truncated header")
    magic, version, digest, n_actions, stack, h, w, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ConfigurationError("checkpoint", f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ConfigurationError("checkpoint", f"{path}: unsupported version {version}")
    return Architecture(h, w, stack, n_actions), digest, count, data


def load_checkpoint(path, expect: Architecture | None = None, dtype=np.float32):
    """Returns (params, architecture). Refuses blobs whose layout hash does not match."""
    arch, digest, count, data = read_header(path)
    if digest != arch.digest():
        raise ConfigurationError("checkpoint", f"{path}: architecture digest mismatch")
    if expect is not None and arch != expect:
        raise ConfigurationError("checkpoint", f"{path}: checkpoint is for {arch}, expected {expect}")
    blob = data[_HEADER.size:]
    if len(blob) != 4 * count or count != arch.n_params():
        raise ConfigurationError("checkpoint", f"{path}: parameter blob has wrong length")
    vec = np.frombuffer(blob, dtype="<f4")
    return unflatten_params(vec, arch, dtype), arch
