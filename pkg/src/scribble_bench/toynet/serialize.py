"""Flat JSON parameter manifests: name -> {shape, row-major values}.

Portable and diff-able; the config travels alongside so a snapshot can be
reloaded without outside knowledge.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .config import NetConfig
from .net import ToyNet


def params_to_manifest(net: ToyNet) -> dict:
    params = {}
    for name, p in net.named_parameters():
        params[name] = {
            "shape": list(p.shape),
            "values": p.detach().reshape(-1).tolist(),
        }
    return {"config": asdict(net.cfg), "params": params}


def manifest_to_params(manifest: dict) -> ToyNet:
    cfg = NetConfig(**manifest["config"])
    net = ToyNet(cfg)
    stored = manifest["params"]
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name not in stored:
                raise KeyError(f"manifest missing parameter {name}")
            entry = stored[name]
            if list(p.shape) != list(entry["shape"]):
                raise ValueError(
                    f"shape mismatch for {name}: {list(p.shape)} vs {entry['shape']}"
                )
            vals = np.asarray(entry["values"], dtype=np.float64).reshape(p.shape)
            p.copy_(torch.from_numpy(vals))
    return net


def save_params(net: ToyNet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_manifest(net)))


def load_params(path: str | Path) -> ToyNet:
    return manifest_to_params(json.loads(Path(path).read_text()))
