"""On-disk formats: single-image rasters, sample and stack directories, PGM previews.

Raster layout (all little-endian)::

    12 bytes  magic b"SLDF-RASTER\\0"
     4 bytes  uint32 format version
     4 bytes  uint32 width
     4 bytes  uint32 height
     8 bytes  float64 pixel pitch (um)
     W*H*4    float32 samples, row-major

A directory (sample or stack) holds the rasters plus a JSON document named
``manifest`` with sorted keys, so identical content gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .imagecore import Grid, Image
from .optics import OpticsConfig, SampleStack
from .patterns import PatternSpec
from .stack import RawStack

MAGIC = b"SLDF-RASTER\0"
RASTER_VERSION = 1
FORMAT_VERSION = 1
MANIFEST = "manifest"
_HEADER = struct.Struct("<12sIIId")


def write_raster(path, img: Image) -> None:
    data = np.ascontiguousarray(img.data, dtype="<f4")
    head = _HEADER.pack(MAGIC, RASTER_VERSION, img.width, img.height, float(img.pixel_pitch))
    Path(path).write_bytes(head + data.tobytes())


def read_raster(path) -> Image:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a raster header")
    magic, version, width, height, pitch = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a raster file")
    if version != RASTER_VERSION:
        raise FormatError(f"{path}: unsupported raster version {version}")
    expected = _HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(height, width)
    return Image(data.astype(np.float64), pitch)


def write_pgm(path, img: Image) -> tuple[float, float]:
    """16-bit binary PGM, min-max scaled. Returns the (min, max) used."""
    lo, hi = float(img.data.min()), float(img.data.max())
    span = hi - lo if hi > lo else 1.0
    levels = np.rint((img.data - lo) / span * 65535).astype(">u2")
    head = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(head + levels.tobytes())
    return lo, hi


def grid_dict(grid: Grid) -> dict:
    return {"width": grid.width, "height": grid.height, "pixel_pitch": grid.pixel_pitch}


def write_manifest(directory, doc: dict) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    (Path(directory) / MANIFEST).write_text(text, encoding="utf-8")


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{directory}: no manifest") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    return doc


# --- samples ---------------------------------------------------------------


def save_sample(directory, sample: SampleStack, target: dict) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    planes = []
    for k, (img, dz) in enumerate(sample.planes):
        name = f"plane_{k}.raster"
        write_raster(d / name, img)
        planes.append({"file": name, "dz_um": dz})
    write_manifest(d, {
        "format_version": FORMAT_VERSION,
        "kind": "sample",
        "grid": grid_dict(sample.grid),
        "planes": planes,
        "target": target,
    })


def load_sample(directory) -> SampleStack:
    d = Path(directory)
    doc = read_manifest(d)
    if doc.get("kind") != "sample":
        raise FormatError(f"{d}: manifest does not describe a sample")
    try:
        planes = [(read_raster(d / p["file"]), p["dz_um"]) for p in doc["planes"]]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{d}: malformed plane table ({exc})") from None
    except FileNotFoundError as exc:
        raise FormatError(f"{d}: missing plane file {exc.filename}") from None
    return SampleStack(tuple(planes))


# --- stacks --------------------------------------------------------------------


def frame_name(i: int, j: int) -> str:
    return f"frame_o{i}_p{j}.raster"


def save_stack(directory, stack: RawStack, processing: list | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    table = []
    for i, j, img in stack.iter_frames():
        write_raster(d / frame_name(i, j), img)
        table.append({"orientation": i, "phase": j, "file": frame_name(i, j)})
    write_manifest(d, {
        "format_version": FORMAT_VERSION,
        "kind": "stack",
        "grid": grid_dict(stack.grid),
        "pattern": stack.pattern.to_dict(),
        "optics": stack.optics.to_dict(),
        "frames": table,
        "provenance": stack.provenance,
        "processing": list(processing or []),
    })


def load_stack(directory) -> tuple[RawStack, dict]:
    """Read a stack directory; returns the stack and its raw manifest."""
    d = Path(directory)
    doc = read_manifest(d)
    if doc.get("kind") != "stack":
        raise FormatError(f"{d}: manifest does not describe a stack")
    try:
        pattern = PatternSpec.from_dict(doc["pattern"])
        optics = OpticsConfig.from_dict(doc["optics"])
        table = doc["frames"]
        n_o, n_p = len(pattern.orientations), len(pattern.phases)
        slots = {}
        for entry in table:
            key = (int(entry["orientation"]), int(entry["phase"]))
            if key in slots:
                raise FormatError(f"{d}: duplicate frame entry {key}")
            if not (0 <= key[0] < n_o and 0 <= key[1] < n_p):
                raise FormatError(f"{d}: frame entry {key} outside the {n_o}x{n_p} protocol")
            slots[key] = entry["file"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{d}: malformed manifest ({exc})") from None
    missing = [(i, j) for i in range(n_o) for j in range(n_p) if (i, j) not in slots]
    if missing:
        raise FormatError(f"{d}: frame table incomplete, missing {missing}")
    frames = []
    for i in range(n_o):
        row = []
        for j in range(n_p):
            path = d / slots[(i, j)]
            if not path.is_file():
                raise FormatError(f"{d}: frame file {slots[(i, j)]} does not exist")
            row.append(read_raster(path))
        frames.append(row)
    stack = RawStack(frames, pattern, optics, doc.get("provenance", {}))
    g = doc.get("grid", {})
    if (g.get("width"), g.get("height")) != (stack.grid.width, stack.grid.height):
        raise FormatError(f"{d}: manifest grid does not match the frame rasters")
    return stack, doc
