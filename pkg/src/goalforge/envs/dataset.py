"""Trajectory dataset: record-per-step little-endian float64 binary + JSON sidecar.

The sidecar documents the exact field order so the binary is self-describing.
Label masking is record-level: exactly floor(fraction * N) records carry a
physics label, chosen by a seeded permutation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .types import ACTION_DIMS, LABEL_DIMS, STATE_DIMS, EnvConstants, EnvKind

FORMAT_VERSION = 1


@dataclass
class TrajectoryData:
    """In-memory view of a collected dataset."""

    kind: EnvKind
    constants: EnvConstants
    resolution: int
    states: np.ndarray       # (N, state_dim)
    actions: np.ndarray      # (N, 3), zero-padded
    labels: np.ndarray       # (N, label_dim), always computed
    label_mask: np.ndarray   # (N,) 1.0 where the label is available for training
    appearances: np.ndarray  # (N, 2) shade, hue
    dones: np.ndarray        # (N,) 1.0 at episode ends
    images: np.ndarray       # (N, 3, H, W)

    def __len__(self) -> int:
        return self.states.shape[0]


def record_fields(kind: EnvKind, res: int) -> list[tuple[str, int]]:
    return [
        ("state", STATE_DIMS[kind]),
        ("action", 3),
        ("label", LABEL_DIMS[kind]),
        ("label_mask", 1),
        ("appearance", 2),
        ("done", 1),
        ("image", 3 * res * res),
    ]


def save(data: TrajectoryData, path: str | Path) -> None:
    path = Path(path)
    n = len(data)
    fields = record_fields(data.kind, data.resolution)
    parts = [
        data.states.reshape(n, -1),
        data.actions.reshape(n, -1),
        data.labels.reshape(n, -1),
        data.label_mask.reshape(n, 1),
        data.appearances.reshape(n, -1),
        data.dones.reshape(n, 1),
        data.images.reshape(n, -1),
    ]
    flat = np.concatenate(parts, axis=1).astype("<f8")
    for (name, width), part in zip(fields, parts):
        if part.shape[1] != width:
            raise ConfigError(f"dataset field {name!r}: expected width {width}, got {part.shape[1]}")
    path.write_bytes(flat.tobytes())

    offsets = np.concatenate([[0], np.cumsum([w for _, w in fields])])
    sidecar = {
        "version": FORMAT_VERSION,
        "env": data.kind.value,
        "resolution": data.resolution,
        "n_records": n,
        "record_width": int(offsets[-1]),
        "dtype": "<f8",
        "fields": [
            {"name": name, "offset": int(off), "size": int(w)}
            for (name, w), off in zip(fields, offsets[:-1])
        ],
        "constants": asdict(data.constants),
        "n_labeled": int(data.label_mask.sum()),
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def load(path: str | Path) -> TrajectoryData:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    if meta.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset version {meta.get('version')}")
    kind = EnvKind(meta["env"])
    res = int(meta["resolution"])
    n = int(meta["n_records"])
    width = int(meta["record_width"])
    flat = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(n, width)
    cols = {f["name"]: (f["offset"], f["size"]) for f in meta["fields"]}

    def col(name):
        off, size = cols[name]
        return np.ascontiguousarray(flat[:, off:off + size]).astype(np.float64)

    return TrajectoryData(
        kind=kind,
        constants=EnvConstants(**meta["constants"]),
        resolution=res,
        states=col("state"),
        actions=col("action"),
        labels=col("label"),
        label_mask=col("label_mask").reshape(n),
        appearances=col("appearance"),
        dones=col("done").reshape(n),
        images=col("image").reshape(n, 3, res, res),
    )


def labeled_mask(n: int, fraction: float, rng) -> np.ndarray:
    """Exactly floor(fraction * n) ones, positions drawn by seeded permutation."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"labeled fraction must be in [0, 1], got {fraction}")
    k = int(np.floor(fraction * n))
    mask = np.zeros(n)
    mask[rng.permutation(n)[:k]] = 1.0
    return mask
