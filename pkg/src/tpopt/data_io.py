"""IDX parsing and the package's tensor/bundle persistence format.

Tensor files::

    magic    8 bytes   b"TPOPTTNS"
    version  uint32 LE
    dtype    uint32 LE (1 = float64, 2 = int64)
    ndim     uint32 LE
    shape    ndim x uint64 LE
    payload  row-major, little-endian

A bundle is a directory of tensor files plus ``meta.json``.
"""

from dataclasses import dataclass
import gzip
import hashlib
import json
import os
import struct

import numpy as np

from .errors import ConfigurationError, IdxParseError

TENSOR_MAGIC = b"TPOPTTNS"
FORMAT_VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8")}
_DTYPE_CODES = {"f": 1, "i": 2, "u": 2, "b": 2}

# ----------------------------------------------------------------------------
# IDX

_IDX_TYPES = {
    0x08: np.dtype("u1"),
    0x09: np.dtype("i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v: k for k, v in _IDX_TYPES.items()}


@dataclass
class IdxTensor:
    type_code: int
    dims: tuple
    data: np.ndarray

    @property
    def magic(self):
        return (self.type_code << 8) | len(self.dims)

    def images(self):
        """3-D unsigned-byte tensors as float rasters in ``[0, 1]``."""
        if len(self.dims) != 3:
            raise ConfigurationError("images() needs a 3-dimensional IDX tensor")
        arr = self.data.astype(float)
        return arr / 255.0 if self.type_code == 0x08 else arr


def parse_idx(raw: bytes) -> IdxTensor:
    raw = bytes(raw)
    if len(raw) < 4:
        raise IdxParseError("file shorter than the 4-byte magic", len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise IdxParseError("magic must start with two zero bytes", 0)
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise IdxParseError(f"unknown element type 0x{code:02x}", 2)
    if ndim == 0:
        raise IdxParseError("zero-dimensional tensor", 3)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxParseError("truncated dimension header", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    need = header + count * dtype.itemsize
    if len(raw) < need:
        # offset of the first missing byte
        raise IdxParseError(f"truncated payload: need {need} bytes, have {len(raw)}", len(raw))
    if len(raw) > need:
        raise IdxParseError(f"{len(raw) - need} trailing bytes after payload", need)
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=header).reshape(dims)
    return IdxTensor(code, tuple(int(d) for d in dims), data.copy())


def serialize_idx(tensor: IdxTensor) -> bytes:
    dtype = _IDX_TYPES[tensor.type_code]
    head = bytes([0, 0, tensor.type_code, len(tensor.dims)])
    head += struct.pack(f">{len(tensor.dims)}I", *tensor.dims)
    return head + np.ascontiguousarray(tensor.data, dtype=dtype).tobytes()


def load_idx(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def idx_from_array(arr):
    arr = np.asarray(arr)
    dtype = arr.dtype.newbyteorder(">") if arr.dtype.itemsize > 1 else arr.dtype
    code = _IDX_CODES.get(np.dtype(dtype))
    if code is None:
        raise ConfigurationError(f"dtype {arr.dtype} has no IDX type code")
    return IdxTensor(code, tuple(arr.shape), arr)


# ----------------------------------------------------------------------------
# tensors and bundles


def tensor_bytes(arr) -> bytes:
    arr = np.asarray(arr)
    code = _DTYPE_CODES.get(arr.dtype.kind)
    if code is None:
        raise ConfigurationError(f"cannot persist dtype {arr.dtype}")
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    head = TENSOR_MAGIC + struct.pack("<III", FORMAT_VERSION, code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + payload.tobytes()


def tensor_from_bytes(raw: bytes):
    if raw[:8] != TENSOR_MAGIC:
        raise ConfigurationError("not a tensor file (bad magic)")
    version, code, ndim = struct.unpack("<III", raw[8:20])
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported tensor format version {version}")
    if code not in _DTYPES:
        raise ConfigurationError(f"unknown tensor dtype code {code}")
    shape = struct.unpack(f"<{ndim}Q", raw[20:20 + 8 * ndim])
    offset = 20 + 8 * ndim
    dtype = _DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) != offset + count * dtype.itemsize:
        raise ConfigurationError("tensor payload length does not match its header")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()


def write_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(tensor_bytes(arr))


def read_tensor(path):
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_bundle(directory, arrays: dict, meta: dict):
    """Write ``arrays`` as tensor files and ``meta`` as ``meta.json``."""
    os.makedirs(directory, exist_ok=True)
    for name, arr in arrays.items():
        write_tensor(os.path.join(directory, f"{name}.tensor"), arr)
    doc = {"format_version": FORMAT_VERSION, "tensors": sorted(arrays), **meta}
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        fh.write(dump_json(doc))


def load_bundle(directory):
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.exists(meta_path):
        from .errors import StageDependencyError
        raise StageDependencyError(f"missing artifact {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    arrays = {name: read_tensor(os.path.join(directory, f"{name}.tensor"))
              for name in meta["tensors"]}
    return arrays, meta


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_hashes(root):
    """``{relative path: sha256}`` for every file under ``root``."""
    out = {}
    if os.path.isfile(root):
        return {os.path.basename(root): file_hash(root)}
    for base, _, files in os.walk(root):
        for name in sorted(files):
            path = os.path.join(base, name)
            out[os.path.relpath(path, root)] = file_hash(path)
    return dict(sorted(out.items()))


# ----------------------------------------------------------------------------
# dataset / model persistence


def save_dataset(directory, ds):
    save_bundle(directory, {"x": ds.x, "y": ds.y, "params": ds.params}, {"dataset": ds.metadata()})


def load_dataset(directory):
    from .observation import Dataset

    arrays, meta = load_bundle(directory)
    info = meta["dataset"]
    return Dataset(arrays["x"], arrays["y"], arrays["params"], info["seed"], info["split"],
                   info["sigma"], info["amplitude"], info["family"])
