"""Versioned binary checkpoint format for policies.

Layout (all integers little-endian unsigned, all floats little-endian
IEEE-754 binary64):

    offset  size  field
    ------  ----  -----
    0       8     magic  b"QLOCOPOL"
    8       4     format version (currently 1)
    12      4     obs_dim
    16      4     act_dim
    20      4     hidden width
    24      1     normalizer-present flag (0 or 1)
    25      8     n_params, length of the flat parameter vector
    33      8*n   flat parameter vector: policy-net weight matrices and
                  bias vectors interleaved layer by layer (row-major),
                  then the log-std vector, then the value net in the
                  same interleaved order
    ...     --    if the flag is 1: normalizer clip (f64), sample count
                  (f64), mean (obs_dim f64), sum of squared deviations
                  (obs_dim f64)

The flat vector layout matches PolicyParams.flat(), so loading is a
dimension check plus set_flat.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import PolicyParams, RunningNorm

MAGIC = b"QLOCOPOL"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sIIIIBQ")


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or incompatible."""


def save_checkpoint(path, params: PolicyParams,
                    normalizer: RunningNorm | None) -> None:
    flat = np.ascontiguousarray(params.flat(), dtype="<f8")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, params.obs_dim,
                          params.act_dim, params.hidden,
                          0 if normalizer is None else 1, flat.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flat.tobytes())
        if normalizer is not None:
            count, mean, m2 = normalizer.state_arrays()
            fh.write(struct.pack("<d", normalizer.clip))
            fh.write(np.ascontiguousarray(count, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(m2, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path) -> tuple[PolicyParams, RunningNorm | None]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise CheckpointError("checkpoint too short to hold a header")
        magic, version, obs_dim, act_dim, hidden, has_norm, n_params = \
            _HEADER.unpack(raw)
        if magic != MAGIC:
            raise CheckpointError(
                f"bad magic {magic!r}; not a policy checkpoint")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} "
                f"(this build reads version {FORMAT_VERSION})")
        params = PolicyParams(obs_dim, act_dim, hidden,
                              np.random.default_rng(0))
        expected = params.flat().size
        if n_params != expected:
            raise CheckpointError(
                f"parameter count {n_params} does not match dims "
                f"({obs_dim}, {act_dim}, {hidden}) which need {expected}")
        flat = np.frombuffer(
            _read_exact(fh, 8 * n_params, "parameters"), dtype="<f8")
        params.set_flat(flat.astype(float))
        normalizer = None
        if has_norm:
            clip, = struct.unpack("<d", _read_exact(fh, 8, "clip"))
            count = np.frombuffer(
                _read_exact(fh, 8, "sample count"), dtype="<f8")[0]
            mean = np.frombuffer(
                _read_exact(fh, 8 * obs_dim, "mean"), dtype="<f8")
            m2 = np.frombuffer(
                _read_exact(fh, 8 * obs_dim, "m2"), dtype="<f8")
            normalizer = RunningNorm.from_state(
                count, mean.astype(float), m2.astype(float), clip=clip)
        trailing = fh.read(1)
    if trailing:
        raise CheckpointError("trailing bytes after checkpoint payload")
    return params, normalizer
