"""Binary model file for quantised NeuralTree models.

Layout (little-endian), version 1::

    header   'NTRE' | u8 version | u8 depth | u8 n_classes | u8 flags
             u16 n_specs | u8 n_bands | n_bands x (u8 len, ascii name)
    specs    n_specs x 4 bytes:
             u8 kind(low 4 bits) | u8 band_a<<4 | band_b (0xF = none)
             | u8 channel_a | u8 channel_b (0xFF = none)
    nodes    (2^depth - 1) in heap order:
             u8 flags (bit0 collapsed) | u8 n | i8 weight_frac | i8 bias_frac
             | i16 bias | n x u8 spec index | ceil(3n/2) bytes of 12-bit weights
    leaves   2^depth x (ceil(3K/2) bytes of 12-bit phi | u8 label)

12-bit values are packed two per three bytes, low nibble-first:
``b0 = v0 & 0xFF``, ``b1 = (v0 >> 8) | (v1 & 0xF) << 4``, ``b2 = v1 >> 4``.
Signed words use two's complement within 12 bits.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .neuraltree import PHI_SCALE, WEIGHT_BITS, NeuralTreeModel, QuantInfo
from .signal import FeatureKind, FeatureSpec

MAGIC = b"NTRE"
VERSION = 1
_NONE4 = 0xF
_NONE8 = 0xFF
_MASK = (1 << WEIGHT_BITS) - 1


class ModelFormatError(ValueError):
    pass


def pack12(values) -> bytes:
    vals = [int(v) & _MASK for v in values]
    if len(vals) % 2:
        vals.append(0)
    out = bytearray()
    for a, b in zip(vals[::2], vals[1::2]):
        out += bytes((a & 0xFF, (a >> 8) | ((b & 0xF) << 4), b >> 4))
    return bytes(out)


def unpack12(buf: bytes, n: int, signed: bool) -> list[int]:
    out = []
    for k in range(0, 3 * ((n + 1) // 2), 3):
        b0, b1, b2 = buf[k], buf[k + 1], buf[k + 2]
        out += [b0 | (b1 & 0xF) << 8, (b1 >> 4) | b2 << 4]
    out = out[:n]
    if signed:
        out = [v - (1 << WEIGHT_BITS) if v & (1 << (WEIGHT_BITS - 1)) else v for v in out]
    return out


def _band_table(specs) -> list[str]:
    names = []
    for s in specs:
        for b in s.bands:
            if b not in names:
                names.append(b)
    if len(names) > 15:
        raise ModelFormatError("at most 15 distinct bands fit the 4-bit band field")
    return names


def serialize(model: NeuralTreeModel) -> bytes:
    q = model.quant
    if q is None:
        raise ModelFormatError("only quantised models can be serialised")
    bands = _band_table(model.feature_specs)
    out = bytearray(MAGIC)
    out += struct.pack("<BBBBHB", VERSION, model.depth, model.n_classes, 0,
                       model.n_features, len(bands))
    for name in bands:
        raw = name.encode("ascii")
        out += struct.pack("<B", len(raw)) + raw
    for s in model.feature_specs:
        bi = [bands.index(b) for b in s.bands] + [_NONE4] * (2 - len(s.bands))
        ch = list(s.channels) + [_NONE8] * (2 - len(s.channels))
        if max(ch[:len(s.channels)]) > 254:
            raise ModelFormatError("channel ids must be below 255")
        out += struct.pack("<BBBB", s.kind.code, bi[0] << 4 | bi[1], ch[0], ch[1])
    if model.n_features > 256:
        raise ModelFormatError("at most 256 distinct features")
    for i in range(model.n_internal):
        feats = model.node_features(i)
        out += struct.pack("<BBbbh", int(model.collapsed[i]), len(feats), int(q.weight_frac[i]),
                           int(q.bias_frac[i]), int(q.bias[i]))
        out += bytes(feats)
        out += pack12(q.weights[i, feats])
    labels = model.leaf_labels()
    for leaf in range(model.n_leaves):
        out += pack12(q.phi[leaf]) + bytes((int(labels[leaf]),))
    return bytes(out)


def deserialize(buf: bytes) -> NeuralTreeModel:
    if buf[:4] != MAGIC:
        raise ModelFormatError("not a NeuralTree model file")
    try:
        version, depth, K, _flags, D, nb = struct.unpack_from("<BBBBHB", buf, 4)
        if version != VERSION:
            raise ModelFormatError(f"unsupported model version {version}")
        pos = 11
        bands = []
        for _ in range(nb):
            n = buf[pos]
            bands.append(buf[pos + 1:pos + 1 + n].decode("ascii"))
            pos += 1 + n
        kinds = list(FeatureKind)
        specs = []
        for _ in range(D):
            kc, bb, c0, c1 = struct.unpack_from("<BBBB", buf, pos)
            pos += 4
            bsel = [bands[v] for v in (bb >> 4, bb & 0xF) if v != _NONE4]
            chans = [c for c in (c0, c1) if c != _NONE8]
            specs.append(FeatureSpec(kinds[kc & 0xF], chans[0] if len(chans) == 1 else tuple(chans),
                                     None if not bsel else bsel[0] if len(bsel) == 1 else tuple(bsel)))
        I, L = (1 << depth) - 1, 1 << depth
        wf, bf = np.zeros(I, np.int64), np.zeros(I, np.int64)
        wr, br = np.zeros((I, D), np.int64), np.zeros(I, np.int64)
        collapsed = np.zeros(I, bool)
        for i in range(I):
            fl, n, wf[i], bf[i], br[i] = struct.unpack_from("<BBbbh", buf, pos)
            pos += 6
            collapsed[i] = bool(fl & 1)
            idx = list(buf[pos:pos + n])
            pos += n
            nbytes = 3 * ((n + 1) // 2)
            wr[i, idx] = unpack12(buf[pos:pos + nbytes], n, signed=True)
            pos += nbytes
        phi = np.zeros((L, K), np.int64)
        nbytes = 3 * ((K + 1) // 2)
        for leaf in range(L):
            phi[leaf] = unpack12(buf[pos:pos + nbytes], K, signed=False)
            pos += nbytes + 1
    except (struct.error, IndexError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"truncated or corrupt model file: {e}") from None
    if pos != len(buf):
        raise ModelFormatError(f"{len(buf) - pos} trailing bytes in model file")
    W = wr * 2.0 ** -wf[:, None].astype(float)
    b = br * 2.0 ** -bf.astype(float)
    return NeuralTreeModel(depth, K, tuple(specs), W, b, phi / PHI_SCALE, active=wr != 0,
                           collapsed=collapsed, quant=QuantInfo(wf, bf, wr, br, phi))


def save_model(model: NeuralTreeModel, path) -> int:
    data = serialize(model)
    Path(path).write_bytes(data)
    return len(data)


def load_model(path) -> NeuralTreeModel:
    try:
        return deserialize(Path(path).read_bytes())
    except OSError as e:
        raise ModelFormatError(f"cannot read model {path}: {e.strerror}") from None


def serialized_size(model: NeuralTreeModel) -> int:
    return len(serialize(model))
