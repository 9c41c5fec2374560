"""Run manifests: canonical parameter digests and reproducible file output.

Every command writes a ``manifest.json`` holding the full parameter set, the
base seed, the artifact version and the list of output files.  The manifest
digest is the SHA-256 of the canonical JSON of everything except the digest
itself and the output list; every data file embeds that digest (JSON field,
JSONL header record, or a ``# manifest_digest=...`` comment line in CSV).
Nothing time- or host-dependent is written, so reruns with equal manifests
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

ARTIFACT_VERSION = "0.1.0"
FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    base_seed: int | None
    outputs: list[str] = field(default_factory=list)

    @property
    def config_digest(self) -> str:
        return digest_of(self.parameters)

    @property
    def digest(self) -> str:
        return digest_of({
            "format_version": FORMAT_VERSION,
            "artifact_version": ARTIFACT_VERSION,
            "command": self.command,
            "parameters": self.parameters,
            "base_seed": self.base_seed,
        })

    def as_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "artifact_version": ARTIFACT_VERSION,
            "command": self.command,
            "parameters": self.parameters,
            "base_seed": self.base_seed,
            "config_digest": self.config_digest,
            "manifest_digest": self.digest,
            "outputs": sorted(self.outputs),
        }

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        return path


def write_json(manifest: RunManifest, out_dir: Path, name: str, payload: dict) -> Path:
    path = out_dir / name
    doc = {"manifest_digest": manifest.digest, **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_default) + "\n")
    manifest.outputs.append(name)
    return path


def write_jsonl(manifest: RunManifest, out_dir: Path, name: str, records) -> Path:
    path = out_dir / name
    with path.open("w") as f:
        f.write(canonical_json({"manifest_digest": manifest.digest,
                                "format_version": FORMAT_VERSION}) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True, separators=(",", ":"),
                               default=_default) + "\n")
    manifest.outputs.append(name)
    return path


def write_csv(manifest: RunManifest, out_dir: Path, name: str,
              header: list[str], rows) -> Path:
    path = out_dir / name
    with path.open("w") as f:
        f.write(f"# manifest_digest={manifest.digest}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell(x) for x in row) + "\n")
    manifest.outputs.append(name)
    return path


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _default(o):
    import numpy as np

    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
