"""On-disk recording bundles and atomic output commits.

A bundle is a directory holding ``header.json`` (channels, rate, unit and
protocol metadata), ``data.f32`` (little-endian float32, channel-major) and
``events.csv`` (``sample,label,transition`` per line).
"""
from __future__ import annotations

import contextlib
import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from ..core import ChannelMeta, Event, Recording

FORMAT = "aomi-bundle"
FORMAT_VERSION = 1
DTYPE = "<f4"


class BundleError(ValueError):
    """A bundle on disk violates the format."""


@contextlib.contextmanager
def atomic_dir(path):
    """Yield a scratch directory that replaces ``path`` only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_tree(path) -> str:
    """Hash of a file, or of every file (relative name + bytes) under a directory."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(path)).encode())
        h.update(b"\0")
        h.update(sha256_file(p).encode())
    return h.hexdigest()


def _events_text(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for e in events:
        w.writerow([e.sample, e.label, e.transition])
    return buf.getvalue()


def write_bundle(path, rec: Recording, meta: dict | None = None):
    """Write ``rec`` as a bundle directory (atomically)."""
    header = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "fs": rec.fs,
        "n_samples": rec.n_samples,
        "dtype": DTYPE,
        "channels": [{"name": c.name, "kind": c.kind, "unit": c.unit} for c in rec.channels],
        "unit": rec.channels[0].unit if rec.channels else "uV",
    }
    header.update(meta or {})
    with atomic_dir(path) as tmp:
        (tmp / "header.json").write_text(json.dumps(header, indent=1, sort_keys=True))
        (tmp / "data.f32").write_bytes(np.ascontiguousarray(rec.data, dtype=DTYPE).tobytes())
        (tmp / "events.csv").write_text(_events_text(rec.events))


def read_header(path) -> dict:
    p = Path(path) / "header.json"
    if not p.is_file():
        raise FileNotFoundError(f"no bundle header at {p}")
    try:
        header = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{p}: {exc}") from exc
    for key in ("format", "fs", "n_samples", "channels"):
        if key not in header:
            raise BundleError(f"{p}: missing key {key!r}")
    if header["format"] != FORMAT:
        raise BundleError(f"{p}: not an {FORMAT} header")
    return header


def read_bundle(path) -> tuple[Recording, dict]:
    """Load a bundle; returns the recording and its header document."""
    path = Path(path)
    header = read_header(path)
    payload = path / "data.f32"
    if not payload.is_file():
        raise FileNotFoundError(f"no payload at {payload}")
    n_ch, n = len(header["channels"]), int(header["n_samples"])
    size = payload.stat().st_size
    if size != n_ch * n * 4:
        raise BundleError(f"{payload}: {size} bytes, header implies {n_ch * n * 4}")
    data = np.fromfile(payload, dtype=DTYPE).reshape(n_ch, n)
    events = []
    ev_path = path / "events.csv"
    if ev_path.is_file():
        with open(ev_path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                if len(row) != 3:
                    raise BundleError(f"{ev_path}: bad row {row}")
                events.append(Event(int(row[0]), row[1], row[2]))
    try:
        chans = [ChannelMeta(c["name"], c["kind"], c.get("unit", "uV"))
                 for c in header["channels"]]
        rec = Recording(chans, header["fs"], data.astype(np.float64), events)
    except (KeyError, ValueError) as exc:
        raise BundleError(f"{path}: {exc}") from exc
    return rec, header
