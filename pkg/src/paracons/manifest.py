"""Run manifests and atomic artifact writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path


def atomic_write_text(path: Path | str, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path | str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n")


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    dataset_digest: str | None = None
    endpoint: str | None = None
    seed: int | None = None
    artifacts: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def record_artifact(self, path: Path | str, root: Path | str) -> None:
        rel = os.path.relpath(Path(path), Path(root))
        self.artifacts[rel] = sha256_file(path)

    def save(self, path: Path | str) -> None:
        write_json(
            path,
            {
                "kind": "run-manifest",
                "command": self.command,
                "config": self.config,
                "dataset_digest": self.dataset_digest,
                "endpoint": self.endpoint,
                "seed": self.seed,
                "artifacts": self.artifacts,
                "timings": self.timings,
            },
        )
