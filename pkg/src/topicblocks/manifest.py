"""Run manifests: config echo, seed, input digests, timings, version."""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def build_manifest(command, *, config=None, seed=None, inputs=None,
                   started=None, finished=None, extra=None) -> dict:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {
            name: {"path": str(path), "sha256": file_digest(path)}
            for name, path in (inputs or {}).items()
        },
        "started": started,
        "finished": finished,
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(out_dir, manifest):
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(out_dir) -> dict:
    with open(os.path.join(out_dir, MANIFEST_NAME)) as fh:
        return json.load(fh)


def verify_inputs(manifest) -> list[str]:
    """Re-digest the manifest's inputs; returns mismatch descriptions."""
    problems = []
    for name, entry in manifest.get("inputs", {}).items():
        path = entry["path"]
        if not os.path.exists(path):
            problems.append(f"{name}: missing file {path}")
            continue
        digest = file_digest(path)
        if digest != entry["sha256"]:
            problems.append(
                f"{name}: digest changed for {path} "
                f"({entry['sha256'][:12]} -> {digest[:12]})"
            )
    return problems
