"""Run manifests: every CLI subcommand records its resolved inputs next
to its outputs so any result can be regenerated bit for bit."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    config: dict
    seed: int | None = None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    toolkit: str = "dflkit"
    version: str = "0.1.0"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


def replay(path) -> int:
    """Re-run the subcommand recorded in a manifest file."""
    from .cli import main

    return main(RunManifest.read(path).argv)
