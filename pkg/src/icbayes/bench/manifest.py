"""Reproducibility metadata written next to every CLI artifact.

A manifest records what a command ran, the content hashes of its inputs and
outputs, and the seeds it used.  Two runs with the same inputs and seeds
produce identical artifact hashes; wall times are the only field expected
to differ.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .. import __version__
from ..errors import DataError
from ..metrics import config_hash


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    run_id: str
    command: str
    argv: list
    config_hash: str
    input_hashes: dict  # path -> sha256
    seeds: dict  # name -> int
    tool_version: str
    wall_times: dict = field(default_factory=dict)  # phase -> seconds
    artifacts: dict = field(default_factory=dict)  # path -> sha256

    def to_json(self) -> str:
        return json.dumps(
            {
                "run_id": self.run_id,
                "command": self.command,
                "argv": list(self.argv),
                "config_hash": self.config_hash,
                "input_hashes": dict(self.input_hashes),
                "seeds": dict(self.seeds),
                "tool_version": self.tool_version,
                "wall_times": dict(self.wall_times),
                "artifacts": dict(self.artifacts),
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            run_id=d["run_id"],
            command=d["command"],
            argv=list(d["argv"]),
            config_hash=d["config_hash"],
            input_hashes=dict(d["input_hashes"]),
            seeds=dict(d["seeds"]),
            tool_version=d["tool_version"],
            wall_times=dict(d["wall_times"]),
            artifacts=dict(d["artifacts"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def verify(self, base_dir=".") -> list:
        """Re-hash every artifact; returns a list of problems (empty = ok)."""
        problems = []
        for rel, expected in sorted(self.artifacts.items()):
            path = os.path.join(base_dir, rel)
            if not os.path.exists(path):
                problems.append(f"{rel}: missing")
                continue
            actual = file_sha256(path)
            if actual != expected:
                problems.append(f"{rel}: hash mismatch")
        return problems


def build_manifest(
    command: str,
    argv,
    config: dict,
    *,
    inputs=(),
    seeds=None,
    wall_times=None,
    artifacts=(),
    base_dir=".",
) -> RunManifest:
    """Assemble a manifest after a command's outputs exist.

    ``inputs`` and ``artifacts`` are paths; artifacts are stored relative to
    ``base_dir`` so a results directory can be moved wholesale.  The run id
    is derived from the command, config, inputs, and seeds, so identical
    runs share it.
    """
    seeds = dict(seeds or {})
    input_hashes = {}
    for path in inputs:
        if not os.path.exists(path):
            raise DataError(f"manifest input does not exist: {path}")
        input_hashes[str(path)] = file_sha256(path)
    cfg_hash = config_hash(config)
    identity = {
        "command": command,
        "config_hash": cfg_hash,
        "input_hashes": input_hashes,
        "seeds": seeds,
    }
    run_id = f"{command}-{config_hash(identity)}"
    artifact_hashes = {}
    for path in artifacts:
        rel = os.path.relpath(path, base_dir)
        artifact_hashes[rel] = file_sha256(path)
    return RunManifest(
        run_id=run_id,
        command=command,
        argv=[str(a) for a in argv],
        config_hash=cfg_hash,
        input_hashes=input_hashes,
        seeds=seeds,
        tool_version=__version__,
        wall_times=dict(wall_times or {}),
        artifacts=artifact_hashes,
    )
