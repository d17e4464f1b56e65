"""Run manifests: a JSON record of what a command read, wrote and produced.

Every pipeline command writes exactly one run_manifest.json into its output
directory; the flag snapshot, root seed and content hashes are enough to
check that a rerun regenerated identical outputs.
"""
from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

MANIFEST_FILENAME = "run_manifest.json"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_paths(paths: list[Path], base: Path | None = None) -> dict[str, str]:
    """Content hashes for files and directory trees, keyed by relative path."""
    hashes: dict[str, str] = {}
    for path in paths:
        path = Path(path)
        if path.is_dir():
            for file in sorted(p for p in path.rglob("*") if p.is_file()):
                if file.name == MANIFEST_FILENAME:
                    continue
                key = str(file.relative_to(base)) if base else str(file)
                hashes[key] = sha256_file(file)
        elif path.is_file():
            key = str(path.relative_to(base)) if base else str(path)
            hashes[key] = sha256_file(path)
    return hashes


class RunManifest:
    """Collects inputs/outputs during a command run, then writes one file."""

    def __init__(self, command: str, args: dict, seed: int | None = None):
        self.command = command
        self.args = args
        self.seed = seed
        self._start = time.monotonic()
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def add_input(self, *paths: str | Path) -> None:
        self.inputs.extend(Path(p) for p in paths)

    def add_output(self, *paths: str | Path) -> None:
        self.outputs.extend(Path(p) for p in paths)

    def write(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "inputs": hash_paths(self.inputs),
            "outputs": hash_paths(self.outputs),
            "wall_time_s": round(time.monotonic() - self._start, 3),
        }
        path = out_dir / MANIFEST_FILENAME
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
