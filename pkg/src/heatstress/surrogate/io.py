"""Parameter files: one raw little-endian blob plus a JSON manifest.

``save_params(path, ...)`` writes ``path`` (the blob) and ``path.json``. The
manifest lists every tensor (name, dtype, shape, byte offset), the network
config, the fitted input scaling and a SHA-256 of the blob.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .config import SurrogateConfig
from .network import UTCINet

FORMAT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}


def manifest_path(path) -> Path:
    return Path(str(path) + ".json")


def save_params(path, model: UTCINet, extra: dict | None = None) -> dict:
    entries, chunks, offset = [], [], 0
    for name, t in model.state_dict().items():
        if t.dtype not in _DTYPES:
            raise TypeError(f"cannot serialize {name} with dtype {t.dtype}")
        raw = t.detach().cpu().contiguous().numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        entries.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.to_json(),
        "seed": model.cfg.seed,
        "tensors": entries,
        "sha256": hashlib.sha256(blob).hexdigest(),
        **(extra or {}),
    }
    Path(path).write_bytes(blob)
    manifest_path(path).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest


def load_params(path) -> tuple[UTCINet, dict]:
    manifest = json.loads(manifest_path(path).read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported parameter format version {version}")
    blob = Path(path).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise ValueError(f"{path}: blob digest does not match its manifest")
    model = UTCINet(SurrogateConfig.from_json(manifest["config"]))
    state = {}
    for e in manifest["tensors"]:
        arr = np.frombuffer(blob, dtype=e["dtype"], count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=e["offset"]).reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, manifest
