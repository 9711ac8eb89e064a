"""Content hashing for artifact provenance chains.

Every pipeline output records the hash of each input it consumed; the verify
command re-walks those links to detect stale artifacts.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_text(text: str) -> str:
    return hash_bytes(text.encode("utf-8"))


def hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_config(obj: object) -> str:
    """Hash of the canonical JSON form of a config snapshot."""
    return hash_text(json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str))


def write_meta(artifact_path: str | Path, inputs: dict[str, str | Path],
               config: object = None, extra: dict | None = None) -> dict:
    """Write the provenance sidecar for an artifact and return its contents."""
    meta = {
        "inputs": {name: hash_file(p) for name, p in inputs.items()},
        "input_paths": {name: str(p) for name, p in inputs.items()},
    }
    if config is not None:
        meta["config_hash"] = hash_config(config)
    if extra:
        meta.update(extra)
    Path(str(artifact_path) + ".prov.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8"
    )
    return meta


def read_meta(artifact_path: str | Path) -> dict | None:
    path = Path(str(artifact_path) + ".prov.json")
    if not path.exists():
        return None
    return json.loads(path.read_text("utf-8"))
