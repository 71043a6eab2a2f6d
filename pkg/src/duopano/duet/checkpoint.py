"""Checkpoint bundles: a directory with ``manifest.json`` plus one NTF file per parameter."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import FormatError
from ..ntf import atomic_write_bytes, ntf_read, ntf_write
from .model import ToyConfig, ToyDenoiser

MANIFEST = "manifest.json"
FORMAT = "duopano-checkpoint-1"


def save_checkpoint(model: ToyDenoiser, directory, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for i, (name, value) in enumerate(model.state_dict().items()):
        fname = f"{i:03d}_{name.replace('.', '_')}.ntf"
        ntf_write(value.detach().cpu().numpy(), directory / fname)
        tensors[name] = {"file": fname, "shape": list(value.shape)}
    manifest = {"format": FORMAT, "config": model.config.to_dict(), "tensors": tensors, "extra": extra or {}}
    atomic_write_bytes(directory / MANIFEST, (json.dumps(manifest, indent=1, sort_keys=True) + "\n").encode())
    return directory


def load_checkpoint(directory) -> ToyDenoiser:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{directory}: unreadable checkpoint manifest ({exc})") from None
    if manifest.get("format") != FORMAT:
        raise FormatError(f"{directory}: not a checkpoint bundle")
    try:
        cfg = dict(manifest["config"])
        cfg["eppa_sites"] = tuple(cfg["eppa_sites"])
        model = ToyDenoiser(ToyConfig(**cfg))
        state = {}
        for name, entry in manifest["tensors"].items():
            arr = ntf_read(directory / entry["file"])
            if list(arr.shape) != entry["shape"]:
                raise FormatError(f"{entry['file']}: shape {arr.shape} != manifest {entry['shape']}")
            state[name] = torch.from_numpy(np.array(arr))
        model.load_state_dict(state)
    except (KeyError, TypeError, RuntimeError) as exc:
        raise FormatError(f"{directory}: inconsistent checkpoint ({exc})") from None
    return model
