"""Experiment manifests: hashed inputs and outputs for exact reproduction.

Every CLI command drops a manifest.json beside its outputs recording the
argv, resolved configuration, seeds, and sha256 of every file read or
written. Re-running the same argv against the same inputs must reproduce
the output hashes byte for byte; `offsetqa replay` automates the check.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from .errors import ValidationError

MANIFEST_FORMAT = "offsetqa-manifest"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


def hash_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _entry(path, base: Optional[str]) -> dict:
    stored = os.path.relpath(path, base) if base else str(path)
    return {"path": stored, "sha256": hash_file(path)}


@dataclass
class ExperimentManifest:
    """What ran, on which bytes, producing which bytes."""

    command: str
    argv: list
    config: dict
    seeds: dict = field(default_factory=dict)
    inputs: Dict[str, dict] = field(default_factory=dict)
    outputs: Dict[str, dict] = field(default_factory=dict)
    tool_version: str = ""

    def add_input(self, name: str, path, base: Optional[str] = None) -> None:
        self.inputs[name] = _entry(path, base)

    def add_output(self, name: str, path, base: Optional[str] = None) -> None:
        self.outputs[name] = _entry(path, base)

    def to_json_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "command": self.command,
            "argv": list(self.argv),
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": self.tool_version,
        }

    def save(self, out_dir) -> str:
        path = os.path.join(out_dir, MANIFEST_NAME)
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        with open(path) as f:
            d = json.load(f)
        if d.get("format") != MANIFEST_FORMAT:
            raise ValidationError(f"not a {MANIFEST_FORMAT} document")
        if int(d.get("version", -1)) != MANIFEST_VERSION:
            raise ValidationError(f"unsupported manifest version {d.get('version')}")
        return cls(command=d["command"], argv=list(d["argv"]), config=d["config"],
                   seeds=d.get("seeds", {}), inputs=d.get("inputs", {}),
                   outputs=d.get("outputs", {}), tool_version=d.get("tool_version", ""))


def verify_outputs(manifest: ExperimentManifest, base: str) -> list:
    """Rehash recorded outputs; returns a list of mismatch descriptions."""
    problems = []
    for name, entry in sorted(manifest.outputs.items()):
        path = entry["path"]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        if not os.path.exists(path):
            problems.append(f"{name}: missing file {path}")
            continue
        got = hash_file(path)
        if got != entry["sha256"]:
            problems.append(f"{name}: sha256 {got} != recorded {entry['sha256']}")
    return problems
