"""Deterministic writers: CSV at full round-trip precision, canonical JSON,
run manifests with checksums."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=",", lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def plain(obj):
    """Recursively convert numpy / complex values to JSON types (NaN and inf become null)."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [plain(obj.real), plain(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def json_text(obj) -> str:
    # json writes floats with repr, the shortest round-trip form
    return json.dumps(plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class OutputDir:
    """Collects the payload files of one run."""

    def __init__(self, root):
        self.root = Path(root)
        self.files: list[str] = []

    def _write(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        if name not in self.files:
            self.files.append(name)
        return path

    def csv(self, name: str, header, rows) -> Path:
        return self._write(name, csv_text(header, rows))

    def json(self, name: str, obj) -> Path:
        return self._write(name, json_text(obj))

    def text(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def inventory(self) -> list[dict]:
        return [{"path": n, "sha256": sha256_file(self.root / n),
                 "bytes": (self.root / n).stat().st_size} for n in sorted(self.files)]


def environment() -> dict:
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "platform": platform.platform()}


def svg_polylines(polylines, closed, bounds, points=None, size: int = 512) -> str:
    """Static SVG of complex polylines inside ``bounds = (xmin, xmax, ymin, ymax)``."""
    xmin, xmax, ymin, ymax = bounds
    s = size / max(xmax - xmin, ymax - ymin)

    def xy(z):
        return f"{(z.real - xmin) * s:.3f},{(ymax - z.imag) * s:.3f}"

    w, h = (xmax - xmin) * s, (ymax - ymin) * s
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
             f'viewBox="0 0 {w:.3f} {h:.3f}">',
             f'<rect width="{w:.3f}" height="{h:.3f}" fill="white"/>']
    for pl, c in zip(polylines, closed):
        tag = "polygon" if c else "polyline"
        pts = " ".join(xy(z) for z in pl)
        parts.append(f'<{tag} points="{pts}" fill="none" stroke="black" stroke-width="1"/>')
    for z in ([] if points is None else points):
        parts.append(f'<circle cx="{(z.real - xmin) * s:.3f}" cy="{(ymax - z.imag) * s:.3f}" '
                     f'r="2" fill="red"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
