"""Binary checkpoint container for :class:`trlab.model.Model`.

Layout (little-endian)::

    "TRLAB" | u16 version | u8 mode | u8 ctc_head | u8 causal
    | u32 vocab, blank_id, feat_dim, hidden_dim, joint_dim, enc_layers, stride
    | u32 metadata length | metadata (UTF-8 JSON)
    | u32 tensor count
    | per tensor: u16 name length | name | u8 ndim | u32 dims... | f64 data

Tensors follow the model's declared parameter order.
"""

import json
import struct
from collections import OrderedDict

import numpy as np

from trlab.errors import ConfigError, FormatError
from trlab.model import CTC_HEADS, MODES, Model, ModelConfig

MAGIC = b"TRLAB"
VERSION = 1
_HEADER = struct.Struct("<5sHBBB7I")


def dumps(model, metadata=None):
    c = model.config
    parts = [
        _HEADER.pack(
            MAGIC,
            VERSION,
            MODES.index(c.mode),
            CTC_HEADS.index(c.ctc_head),
            int(c.causal),
            c.vocab_size,
            c.blank_id,
            c.feat_dim,
            c.hidden_dim,
            c.joint_dim,
            c.enc_layers,
            c.stride,
        )
    ]
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)) + meta)
    parts.append(struct.pack("<I", len(model.params)))
    for name, arr in model.params.items():
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data):
    """Returns (model, metadata)."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated checkpoint")
    fields = _HEADER.unpack_from(data)
    magic, version, mode, head, causal = fields[:5]
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if mode >= len(MODES) or head >= len(CTC_HEADS):
        raise FormatError("corrupt mode/ctc_head fields")
    vocab, blank, feat, hidden, joint, layers, stride = fields[5:]
    try:
        config = ModelConfig(
            mode=MODES[mode],
            ctc_head=CTC_HEADS[head],
            vocab_size=vocab,
            feat_dim=feat,
            hidden_dim=hidden,
            joint_dim=joint,
            enc_layers=layers,
            stride=stride,
            causal=bool(causal),
            blank_id=blank,
        )
    except ConfigError as exc:
        raise FormatError(f"invalid model header: {exc}") from None
    pos = _HEADER.size

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("truncated checkpoint")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (meta_len,) = struct.unpack("<I", take(4))
    try:
        metadata = json.loads(take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError("corrupt checkpoint metadata") from None
    (count,) = struct.unpack("<I", take(4))
    params = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise FormatError("trailing bytes in checkpoint")
    try:
        return Model(config, params), metadata
    except ConfigError as exc:
        raise FormatError(f"checkpoint tensors do not match header: {exc}") from None


def save(model, path, metadata=None):
    with open(path, "wb") as f:
        f.write(dumps(model, metadata))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
