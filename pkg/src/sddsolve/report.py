"""Machine-readable run reports."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

SCHEMA_VERSION = 1


def load_schema() -> dict:
    text = resources.files("sddsolve").joinpath("schemas/run_report.schema.json").read_text("utf-8")
    return json.loads(text)


def digest_bytes(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(len(c).to_bytes(8, "little"))
        h.update(c)
    return h.hexdigest()


def _clean(value):
    """Convert numpy scalars/arrays and make floats JSON-safe."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class RunReport:
    command: str
    input_digest: str
    config: dict
    seed: int
    timings: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    exit_status: int = 0
    message: str | None = None

    def to_dict(self, *, timings: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "input_digest": self.input_digest,
            "config": _clean(self.config),
            "seed": int(self.seed),
            "timings": _clean(self.timings) if timings else {},
            "counts": _clean(self.counts),
            "metrics": _clean(self.metrics),
            "exit_status": int(self.exit_status),
        }
        if self.message is not None:
            out["message"] = self.message
        return out

    def to_json(self, *, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings=timings), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        """Hash of the report without wall-clock fields."""
        return hashlib.sha256(self.to_json(timings=False).encode()).hexdigest()


def validate_report(data: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``data`` does not match the schema."""
    import jsonschema

    jsonschema.validate(data, load_schema())
