"""Checkpoint file: one-line JSON header + raw little-endian float64 blob.

The header carries version, model family, env kind, config, and a parameter
manifest (name, shape, byte offset into the blob). Loading is bitwise exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..envs import EnvConstants, EnvKind
from ..errors import ConfigError
from ..numerics import RngStream
from .model import EnhancedVae, RigVae, VaeConfig

CKPT_VERSION = 1


def write_stores(path: str | Path, meta: dict, stores: dict) -> None:
    """Generic variant: several named ParamStores behind one JSON header."""
    manifest = {}
    chunks = []
    offset = 0
    for store_name, store in stores.items():
        entries = []
        for name, t in store.items():
            arr = np.ascontiguousarray(t.data, dtype="<f8")
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(arr.tobytes())
            offset += arr.nbytes
        manifest[store_name] = entries
    header = {"version": CKPT_VERSION, "meta": meta, "stores": manifest,
              "blob_bytes": offset}
    Path(path).write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(chunks))


def read_stores(path: str | Path) -> tuple[dict, dict]:
    """Returns (meta, {store_name: {param_name: ndarray}})."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    if header.get("version") != CKPT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {header.get('version')}")
    blob = raw[nl + 1:]
    out = {}
    for store_name, entries in header["stores"].items():
        vals = {}
        for e in entries:
            shape = tuple(e["shape"])
            count = int(np.prod(shape)) if shape else 1
            vals[e["name"]] = np.frombuffer(blob, dtype="<f8", count=count,
                                            offset=e["offset"]).reshape(shape).copy()
        out[store_name] = vals
    return header["meta"], out


def _header_and_blob(family: str, kind: EnvKind, constants: EnvConstants,
                     cfg: VaeConfig, params) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, t in params.items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "version": CKPT_VERSION,
        "family": family,
        "env": kind.value,
        "constants": asdict(constants),
        "config": asdict(cfg),
        "params": manifest,
        "blob_bytes": offset,
    }
    return json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(chunks)


def save_model(model: EnhancedVae | RigVae, path: str | Path) -> None:
    family = "enhanced" if isinstance(model, EnhancedVae) else "rig"
    Path(path).write_bytes(_header_and_blob(family, model.kind, model.constants,
                                            model.cfg, model.params))


def load_model(path: str | Path) -> EnhancedVae | RigVae:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    if header.get("version") != CKPT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {header.get('version')}")
    blob = raw[nl + 1:]
    if len(blob) != header["blob_bytes"]:
        raise ConfigError(f"checkpoint blob truncated: {len(blob)} != {header['blob_bytes']}")
    kind = EnvKind(header["env"])
    constants = EnvConstants(**header["constants"])
    cfg_kwargs = dict(header["config"])
    cfg_kwargs["conv_channels"] = tuple(cfg_kwargs["conv_channels"])
    cfg = VaeConfig(**cfg_kwargs)
    cls = EnhancedVae if header["family"] == "enhanced" else RigVae
    model = cls(kind, constants, cfg, RngStream(0, 0))
    for entry in header["params"]:
        t = model.params[entry["name"]]
        shape = tuple(entry["shape"])
        if t.data.shape != shape:
            raise ConfigError(f"checkpoint param {entry['name']}: shape {shape} != {t.data.shape}")
        start = entry["offset"]
        count = int(np.prod(shape)) if shape else 1
        t.data = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape).copy()
    return model
