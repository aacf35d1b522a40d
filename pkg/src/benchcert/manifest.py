"""Canonical JSON serialisation and SHA-256 locked manifests."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping


def canonical_json(obj: Any) -> str:
    # json emits floats with repr(), the shortest round-trip form.
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def default_timestamp() -> str | None:
    """ISO timestamp from ``SOURCE_DATE_EPOCH``; ``None`` keeps output reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


@dataclass(frozen=True)
class LockManifest:
    serialization: str
    digest: str
    timestamp: str | None = None

    @property
    def payload(self) -> Any:
        return json.loads(self.serialization)

    def to_json(self) -> str:
        return canonical_json({
            "digest": self.digest,
            "payload": self.payload,
            "timestamp": self.timestamp,
        })


def lock_manifest(
    decisions: Mapping[str, Any],
    parameters: Mapping[str, Any],
    probe_order: list[str] | None = None,
    timestamp: str | None = None,
) -> LockManifest:
    payload = {
        "decisions": dict(decisions),
        "parameters": dict(parameters),
        "probe_order": list(probe_order or []),
    }
    ser = canonical_json(payload)
    return LockManifest(ser, sha256_hex(ser.encode("utf-8")), timestamp)


def verify_manifest(manifest: LockManifest) -> bool:
    return sha256_hex(manifest.serialization.encode("utf-8")) == manifest.digest


def write_manifest(manifest: LockManifest, path: str | Path) -> Path:
    """Write the manifest and a sibling ``.sha256`` file of its bytes."""
    path = Path(path)
    data = (manifest.to_json() + "\n").encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    Path(str(path) + ".sha256").write_text(f"{sha256_hex(data)}  {path.name}\n", encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> LockManifest:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return LockManifest(canonical_json(obj["payload"]), obj["digest"], obj.get("timestamp"))


def verify_manifest_file(path: str | Path) -> bool:
    """True only if the file, its embedded digest and its sibling digest all agree."""
    path = Path(path)
    try:
        data = path.read_bytes()
        sidecar = Path(str(path) + ".sha256").read_text(encoding="utf-8")
        manifest = read_manifest(path)
    except (OSError, ValueError, KeyError, TypeError, UnicodeDecodeError):
        return False
    if sidecar != f"{sha256_hex(data)}  {path.name}\n":
        return False
    if data != (manifest.to_json() + "\n").encode("utf-8"):
        return False
    return verify_manifest(manifest)
