"""Run manifests for reproducibility.

Every CLI invocation writes a JSON manifest beside its primary output
recording the command, the resolved config snapshot, the seed, a git
describe string, start/end timestamps, and SHA-256 digests of every input
and output file. Reruns with the same seed, config, and inputs must
produce identical output digests.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
from datetime import datetime, timezone


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(path: str) -> str:
    """Digest of a file, or of a directory's files keyed by relative path."""
    if not os.path.isdir(path):
        return file_digest(path)
    h = hashlib.sha256()
    for root, dirs, files in sorted(os.walk(path)):
        dirs.sort()
        for name in sorted(files):
            full = os.path.join(root, name)
            rel = os.path.relpath(full, path)
            h.update(rel.encode("utf-8"))
            h.update(file_digest(full).encode("ascii"))
    return h.hexdigest()


def git_describe(cwd: str | None = None) -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=cwd,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Collects inputs/outputs during a command and writes the manifest."""

    def __init__(self, command: str, config_snapshot: dict | None = None, seed: int | None = None):
        self.command = command
        self.config_snapshot = dict(config_snapshot or {})
        self.seed = seed
        self.started_at = _now()
        self.inputs: list[str] = []
        self.outputs: list[str] = []

    def add_input(self, path: str | None) -> None:
        if path and path not in self.inputs:
            self.inputs.append(path)

    def add_output(self, path: str | None) -> None:
        if path and path not in self.outputs:
            self.outputs.append(path)

    def write(self, path: str | None = None) -> str:
        """Write beside the primary output (``<output>.manifest.json``)."""
        if path is None:
            if not self.outputs:
                raise ValueError("manifest has no outputs to sit beside")
            path = self.outputs[0] + ".manifest.json"
        payload = {
            "command": self.command,
            "seed": self.seed,
            "git": git_describe(),
            "started_at": self.started_at,
            "finished_at": _now(),
            "config": self.config_snapshot,
            "inputs": {p: tree_digest(p) for p in self.inputs},
            "outputs": {p: tree_digest(p) for p in self.outputs},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def load_manifest(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def verify_outputs(manifest: dict) -> dict[str, bool]:
    """Recompute output digests; False flags a tampered or missing file."""
    out = {}
    for path, digest in manifest.get("outputs", {}).items():
        try:
            out[path] = tree_digest(path) == digest
        except OSError:
            out[path] = False
    return out
