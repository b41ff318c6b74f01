"""Binary model container.

Layout (all integers and floats little-endian)::

    header   8 bytes  magic b"BKMEKA\\x00\\x01"
             4 bytes  uint32 format version
    section* 4 bytes  ASCII tag
             8 bytes  uint64 payload length
             payload

Sections appear in this order:

    CONF  UTF-8 JSON: kernel spec, normalize flag, n, c, build config
    PERM  int64 c, then c x int64 block sizes, then the concatenated
          int64 row indices of every block (the cluster permutation)
    BLCK  one per block: int64 [index, n_i, k_i, l_i, d], then
          int64 landmarks (l_i), float64 landmark points (l_i x d),
          float64 Q (n_i x k_i), float64 signs (k_i),
          float64 U (l_i x k_i), float64 inv_sqrt (k_i)
    LINK  int64 pair count, then per pair int64 [i, j, k_i, k_j]
          followed by float64 L^{i,j} (k_i x k_j), row-major
    SELF  float64 self-similarities (n)
    SHFT  float64 lambda_shift
    END_  empty

Truncated pairs are absent from LINK. Floats are raw IEEE-754 bytes so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .kernels import KernelSpec
from .lowrank import BlockFactor
from .model import MekaModel

MAGIC = b"BKMEKA\x00\x01"
VERSION = 1

_I8 = np.dtype("<i8")
_F8 = np.dtype("<f8")


class ContainerError(ValueError):
    """Raised for unreadable, truncated or incompatible model files."""


def _section(out, tag, payload):
    out.write(tag)
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)


def _arr(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype).tobytes()


def dumps(model: MekaModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    conf = {
        "spec": model.spec.to_dict(),
        "normalize": bool(model.normalize),
        "n": int(model.n),
        "c": int(model.c),
        "config": model.config,
    }
    _section(out, b"CONF", json.dumps(conf, sort_keys=True).encode("utf-8"))
    sizes = [b.size for b in model.blocks]
    perm = _arr([model.c] + sizes, _I8) + _arr(model.permutation, _I8)
    _section(out, b"PERM", perm)
    for b in model.blocks:
        d = b.landmark_points.shape[1]
        payload = b"".join([
            _arr([b.index, b.size, b.k, len(b.landmarks), d], _I8),
            _arr(b.landmarks, _I8),
            _arr(b.landmark_points, _F8),
            _arr(b.Q, _F8),
            _arr(b.signs, _F8),
            _arr(b.U, _F8),
            _arr(b.inv_sqrt, _F8),
        ])
        _section(out, b"BLCK", payload)
    pairs = sorted(model.links)
    chunks = [_arr([len(pairs)], _I8)]
    for i, j in pairs:
        B = model.links[(i, j)]
        chunks.append(_arr([i, j, B.shape[0], B.shape[1]], _I8))
        chunks.append(_arr(B, _F8))
    _section(out, b"LINK", b"".join(chunks))
    _section(out, b"SELF", _arr(model.self_similarities, _F8))
    _section(out, b"SHFT", _arr([model.lambda_shift], _F8))
    _section(out, b"END_", b"")
    return out.getvalue()


def save(model: MekaModel, path):
    data = dumps(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


class _Reader:
    def __init__(self, buf, tag):
        self.buf = buf
        self.pos = 0
        self.tag = tag

    def take(self, count, dtype):
        nbytes = int(count) * dtype.itemsize
        if self.pos + nbytes > len(self.buf):
            raise ContainerError(f"section {self.tag} is truncated")
        a = np.frombuffer(self.buf, dtype=dtype, count=int(count), offset=self.pos).copy()
        self.pos += nbytes
        return a.astype(dtype.newbyteorder("="))

    def done(self):
        if self.pos != len(self.buf):
            raise ContainerError(f"section {self.tag} has {len(self.buf) - self.pos} trailing bytes")


def _sections(data):
    if len(data) < len(MAGIC) + 4:
        raise ContainerError("file too short for a model header")
    if data[: len(MAGIC)] != MAGIC:
        raise ContainerError("not a blockkern model file (bad magic)")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version} (this build reads version {VERSION})")
    pos = len(MAGIC) + 4
    while pos < len(data):
        if pos + 12 > len(data):
            raise ContainerError(f"truncated section header at byte {pos}")
        tag = data[pos:pos + 4].decode("ascii", "replace")
        (length,) = struct.unpack_from("<Q", data, pos + 4)
        pos += 12
        if pos + length > len(data):
            raise ContainerError(f"section {tag} is truncated")
        yield tag, data[pos:pos + length]
        pos += length
        if tag == "END_":
            return
    raise ContainerError("section END_ is missing (file truncated)")


def loads(data: bytes) -> MekaModel:
    conf = perm = None
    blocks, links = [], {}
    selfsim = shift = None
    seen = []
    for tag, payload in _sections(data):
        seen.append(tag)
        r = _Reader(payload, tag)
        if tag == "CONF":
            try:
                conf = json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ContainerError(f"section CONF is corrupt: {exc}") from None
        elif tag == "PERM":
            c = int(r.take(1, _I8)[0])
            sizes = r.take(c, _I8)
            perm = np.split(r.take(sizes.sum(), _I8), np.cumsum(sizes)[:-1])
            r.done()
        elif tag == "BLCK":
            index, size, k, l, d = (int(v) for v in r.take(5, _I8))
            lm = r.take(l, _I8)
            pts = r.take(l * d, _F8).reshape(l, d)
            Q = r.take(size * k, _F8).reshape(size, k)
            signs = r.take(k, _F8)
            U = r.take(l * k, _F8).reshape(l, k)
            inv_sqrt = r.take(k, _F8)
            r.done()
            blocks.append(BlockFactor(index, None, Q, signs, lm, pts, U, inv_sqrt))
        elif tag == "LINK":
            count = int(r.take(1, _I8)[0])
            for _ in range(count):
                i, j, ki, kj = (int(v) for v in r.take(4, _I8))
                links[(i, j)] = r.take(ki * kj, _F8).reshape(ki, kj)
            r.done()
        elif tag == "SELF":
            selfsim = r.take(len(payload) // _F8.itemsize, _F8)
            r.done()
        elif tag == "SHFT":
            shift = float(r.take(1, _F8)[0])
            r.done()
        elif tag != "END_":
            raise ContainerError(f"unknown section {tag}")
    for tag in ("CONF", "PERM", "LINK", "SELF", "SHFT"):
        if tag not in seen:
            raise ContainerError(f"section {tag} is missing")
    if len(blocks) != len(perm):
        raise ContainerError(f"section BLCK: expected {len(perm)} blocks, found {len(blocks)}")
    for b, rows in zip(blocks, perm):
        if len(rows) != b.size:
            raise ContainerError(f"section BLCK: block {b.index} size disagrees with PERM")
        b.rows = rows
    spec = KernelSpec.from_dict(conf["spec"])
    return MekaModel(spec, blocks, links, selfsim, shift, bool(conf["normalize"]), conf["config"])


def load(path) -> MekaModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
