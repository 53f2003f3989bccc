"""Recording file formats.

``raw-f32``: little-endian float32 samples, channel-major (all of channel 0,
then channel 1, ...), in ``<stem>.f32``, with a JSON header ``<stem>.json``
holding ``d``, ``T``, ``rate``, ``onset_index``, ``labels`` and
``seizure_id``.

``csv``: one row per sample, one column per channel, first row the channel
labels. Rate and onset come from the same JSON sidecar when present, or from
explicit arguments.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import Recording, validate_recording

FORMATS = ("raw-f32", "csv")

__all__ = [
    "FORMATS",
    "header_path",
    "guess_format",
    "load_recording",
    "save_recording",
    "read_header",
    "load_layout",
]


def header_path(path) -> Path:
    return Path(path).with_suffix(".json")


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".f32", ".raw", ".bin"):
        return "raw-f32"
    if suffix == ".csv":
        return "csv"
    raise ValidationError(f"unknown format for {path}; pass one of {FORMATS}")


def read_header(path) -> dict:
    hp = header_path(path)
    if not hp.exists():
        return {}
    with open(hp) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed header {hp}: {exc}") from None


def _pick(explicit, header, key, default=None):
    if explicit is not None:
        return explicit
    if key in header:
        return header[key]
    if default is not None:
        return default
    raise ValidationError(f"{key} not given and not in header")


def load_recording(
    path,
    format: str | None = None,
    rate: float | None = None,
    onset_index: int | None = None,
    seizure_id: str | None = None,
) -> Recording:
    """Read and validate a recording; explicit arguments override the header."""
    path = Path(path)
    fmt = format or guess_format(path)
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    header = read_header(path)
    sid = _pick(seizure_id, header, "seizure_id", path.stem)
    if fmt == "raw-f32":
        if not header:
            raise ValidationError(f"raw-f32 input needs a header at {header_path(path)}")
        d, T = int(header["d"]), int(header["T"])
        payload = path.read_bytes()
        if len(payload) != 4 * d * T:
            raise ValidationError(
                f"payload size mismatch: header says {d}x{T} float32 = {4 * d * T} bytes, file has {len(payload)}"
            )
        data = np.frombuffer(payload, dtype="<f4").reshape(d, T).astype(np.float64)
        labels = header.get("labels")
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValidationError(f"empty CSV file {path}")
        labels = [c.strip() for c in rows[0]]
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).T
        except ValueError as exc:
            raise ValidationError(f"non-numeric CSV value in {path}: {exc}") from None
        if data.size == 0 or data.shape[0] != len(labels):
            raise ValidationError(f"CSV {path}: row width does not match the {len(labels)} header labels")
        if "d" in header and int(header["d"]) != data.shape[0]:
            raise ValidationError("payload size mismatch: header channel count differs from CSV columns")
    return validate_recording(
        data,
        float(_pick(rate, header, "rate")),
        int(_pick(onset_index, header, "onset_index")),
        labels,
        str(sid),
    )


def save_recording(rec: Recording, path, format: str | None = None, extra: dict | None = None) -> list[Path]:
    """Write the payload and its JSON header; returns the paths written.

    raw-f32 stores float32, so float64 data is rounded once on first save.
    ``extra`` entries (e.g. ground truth) are merged into the header.
    """
    path = Path(path)
    fmt = format or guess_format(path)
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    header = {
        "d": rec.n_channels,
        "T": rec.n_samples,
        "rate": rec.rate,
        "onset_index": rec.onset_index,
        "labels": list(rec.channel_labels),
        "seizure_id": rec.seizure_id,
        "format": fmt,
    }
    if extra:
        header.update(extra)
    if fmt == "raw-f32":
        path.write_bytes(np.ascontiguousarray(rec.data, dtype="<f4").tobytes())
    else:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(rec.channel_labels)
            for row in rec.data.T:
                w.writerow([repr(float(v)) for v in row])
    hp = header_path(path)
    with open(hp, "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
    return [path, hp]


def load_layout(path) -> dict:
    """Electrode adjacency from JSON ``{"adjacency": {label: [labels...]}}`` (or a bare mapping)."""
    with open(path) as fh:
        obj = json.load(fh)
    adj = obj.get("adjacency", obj) if isinstance(obj, dict) else None
    if not isinstance(adj, dict):
        raise ValidationError(f"layout {path} must map labels to neighbour lists")
    return {str(k): [str(n) for n in v] for k, v in adj.items()}
