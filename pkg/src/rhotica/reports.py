"""Report envelopes.

Every report records the tool version and the effective configuration that
produced it: JSON reports embed it under ``"meta"``, CSV reports carry it on
a leading ``# rhotica-report {...}`` comment line, and every file written
with ``--out`` also gets a ``<file>.meta.json`` sidecar (the only place JSON
lines outputs can carry it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import RhoticaError

KINDS = ("token_map", "alignment", "contexts", "f3_track", "slopes", "slope_comparison",
         "mushra", "preference", "plan", "adapter_status", "training_manifest")
FORMATS = ("json", "csv", "jsonl")
CSV_MARKER = "# rhotica-report "


@dataclass(frozen=True)
class ReportBundle:
    kind: str
    format: str
    config: dict
    payload: tuple[str, ...] = ()
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RhoticaError(f"unknown report kind {self.kind!r}")
        if self.format not in FORMATS:
            raise RhoticaError(f"unknown report format {self.format!r}")

    def meta(self) -> dict:
        d = {"tool": "rhotica", "version": self.version, "kind": self.kind, "format": self.format,
             "config": self.config}
        if self.payload:
            d["payload"] = list(self.payload)
        if self.extra:
            d.update(self.extra)
        return d


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def render(bundle: ReportBundle, data) -> str:
    """Serialize ``data`` in the bundle's format with provenance attached.

    ``data`` is a JSON-able object for json, a CSV string (header first) for
    csv, and a JSON-lines string for jsonl.
    """
    if bundle.format == "json":
        return dumps_json({"meta": bundle.meta(), "data": data})
    if bundle.format == "csv":
        return CSV_MARKER + json.dumps(bundle.meta(), sort_keys=True) + "\n" + data
    return data


def write(bundle: ReportBundle, data, out: str | Path | None) -> str:
    """Render and, when ``out`` is given, write the report and its sidecar."""
    text = render(bundle, data)
    if out is not None:
        out = Path(out)
        out.write_text(text, encoding="utf-8")
        sidecar = ReportBundle(bundle.kind, bundle.format, bundle.config, (out.name,), bundle.version,
                               bundle.extra)
        Path(f"{out}.meta.json").write_text(dumps_json(sidecar.meta()), encoding="utf-8")
    return text


def unwrap_json(text: str):
    """The data part of a JSON report, or the whole document if it has no envelope."""
    doc = json.loads(text)
    if isinstance(doc, dict) and "meta" in doc and "data" in doc:
        return doc["data"]
    return doc


def read_meta(path: str | Path) -> dict:
    """Provenance of a report file, from its sidecar, envelope or CSV marker."""
    path = Path(path)
    sidecar = Path(f"{path}.meta.json")
    if path.name.endswith(".meta.json"):
        return json.loads(path.read_text(encoding="utf-8"))
    if sidecar.exists():
        return json.loads(sidecar.read_text(encoding="utf-8"))
    text = path.read_text(encoding="utf-8")
    if text.startswith(CSV_MARKER):
        return json.loads(text.splitlines()[0][len(CSV_MARKER):])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and isinstance(doc.get("meta"), dict):
        return doc["meta"]
    raise RhoticaError(f"{path}: no report provenance found")
