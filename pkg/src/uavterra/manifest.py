"""Run manifests: config hash, output checksums, and wall-clock timings."""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from uavterra import __version__

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def describe() -> str:
    """Package version plus the git description when available."""
    base = f"uavterra {__version__}"
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True,
            text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{base} ({out.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


@dataclass(frozen=True)
class RunManifest:
    """What produced a result directory and what it contains."""

    scenario: str
    seed: int
    config_sha256: str
    describe: str
    created_utc: str
    outputs: dict = field(default_factory=dict)  # filename -> sha256
    timings_s: dict = field(default_factory=dict)  # stage -> seconds

    @classmethod
    def create(cls, scenario: str, seed: int, config_sha256: str,
               output_paths, timings_s: dict) -> "RunManifest":
        outputs = {Path(p).name: sha256_file(p) for p in output_paths}
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(scenario=scenario, seed=seed,
                   config_sha256=config_sha256, describe=describe(),
                   created_utc=stamp, outputs=outputs,
                   timings_s={k: round(v, 3) for k, v in timings_s.items()})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(self.to_json())
        return path


def load_manifest(out_dir) -> RunManifest:
    path = Path(out_dir) / MANIFEST_NAME
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot load manifest from {path}: {exc}")
    return RunManifest(**raw)
