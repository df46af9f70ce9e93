"""Binary model container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"PSHCPM\\r\\n"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length N in bytes
    16      N     UTF-8 JSON header
    16+N    ...   payload: float64 little-endian arrays, concatenated

The header records ``kind``, ``seq_len``, ``D``, ``H``, ``n_layers``, ``K``, the
class encoding, training metadata, the payload byte length and its SHA-256,
and for every array its ``name``, ``shape`` and byte ``offset`` into the
payload.  Arrays are stored row-major.  Scaler minima/maxima are stored as
arrays named ``input_scaler.min`` etc. so they round-trip bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .lstm import LstmModel
from .scaler import MinMaxScaler

MAGIC = b"PSHCPM\r\n"
FORMAT_VERSION = 1
CLASS_ENCODING = {"no_contact": 0, "point": 1, "line": 2}


class ModelFormatError(ValueError):
    pass


def _arrays(model: LstmModel) -> dict:
    arrs = dict(model.params)
    for name, sc in (("input_scaler", model.input_scaler), ("output_scaler", model.output_scaler)):
        if sc is not None:
            arrs[f"{name}.min"] = np.atleast_1d(sc.min)
            arrs[f"{name}.max"] = np.atleast_1d(sc.max)
            arrs[f"{name}.degenerate"] = np.atleast_1d(sc.degenerate).astype(float)
    return arrs


def save_model(model: LstmModel, path) -> None:
    arrs = _arrays(model)
    entries, blobs, offset = [], [], 0
    for name in sorted(arrs):
        a = np.ascontiguousarray(arrs[name], dtype="<f8")
        blob = a.tobytes()
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "seq_len": model.seq_len,
        "D": model.input_dim,
        "H": model.hidden,
        "n_layers": model.n_layers,
        "K": model.head_size,
        "class_encoding": CLASS_ENCODING,
        "metadata": model.metadata,
        "arrays": entries,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def load_model(path) -> LstmModel:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise ModelFormatError(f"{path}: not a CPM model file (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    if len(data) < 16 + hlen:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from exc
    payload = data[16 + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise ModelFormatError(f"{path}: truncated payload ({len(payload)} of {header['payload_bytes']} bytes)")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ModelFormatError(f"{path}: payload checksum mismatch")
    arrs = {}
    for e in header["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"]).reshape(e["shape"]).astype(float)
        if not np.all(np.isfinite(a)):
            raise ModelFormatError(f"{path}: non-finite values in {e['name']}")
        arrs[e["name"]] = a

    def scaler(name):
        if f"{name}.min" not in arrs:
            return None
        return MinMaxScaler(arrs.pop(f"{name}.min"), arrs.pop(f"{name}.max"), arrs.pop(f"{name}.degenerate").astype(bool))

    in_sc, out_sc = scaler("input_scaler"), scaler("output_scaler")
    model = LstmModel(header["kind"], arrs, in_sc, out_sc, seq_len=header["seq_len"], metadata=header["metadata"])
    if model.hidden != header["H"] or model.input_dim != header["D"] or model.head_size != header["K"]:
        raise ModelFormatError(f"{path}: array shapes disagree with header")
    return model
