"""Deterministic file emission: CSV (RFC-4180 quoting), JSON summaries, and
two/three-column plot-data text files.

Every output file begins with a comment header carrying the config hash, the
seed, and the code version, so reruns are byte-comparable.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

from . import __version__


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _header_line(cfg_hash: str, seed) -> str:
    return f"# config_hash={cfg_hash} seed={seed} version={__version__}\n"


def write_csv(path, cfg_hash: str, seed, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row[c] if isinstance(row, dict) else row[i]
                         for i, c in enumerate(columns)])
    path.write_text(_header_line(cfg_hash, seed) + buf.getvalue())
    return path


def write_json(path, cfg_hash: str, seed, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": cfg_hash, "seed": seed, "version": __version__,
           "payload": payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_plot_data(path, cfg_hash: str, seed, columns, rows) -> Path:
    """Plain whitespace-separated columns for external plotting tools."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_header_line(cfg_hash, seed).rstrip("\n"),
             "# " + " ".join(columns)]
    for row in rows:
        lines.append(" ".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
