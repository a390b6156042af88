"""Image and sequence-manifest I/O.

Rasters are binary PGM (P5), 8- or 16-bit; 16-bit payloads are big-endian
per the PGM standard.  A sequence manifest is a JSON document describing the
reference sequence (one frame per cardiac phase) and the navigation sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError


@dataclass(frozen=True)
class GrayImage:
    """2D intensity raster; pixels indexed [row, col] = [y, x]."""

    pixels: np.ndarray  # uint8 or uint16, shape (height, width)

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.size == 0:
            raise ValidationError("pixels", "image must be 2D and non-empty")
        if p.dtype not in (np.uint8, np.uint16):
            raise ValidationError("pixels", f"unsupported dtype {p.dtype}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def bit_depth(self) -> int:
        return 8 if self.pixels.dtype == np.uint8 else 16


@dataclass(frozen=True)
class FrameRef:
    path: str
    phase: int


@dataclass
class SequenceManifest:
    pixel_spacing_mm: float
    frame_interval_s: float
    cycle_length: int
    reference_frames: list[FrameRef]
    navigation_frames: list[FrameRef]
    ground_truth: dict | None = None
    base_dir: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM file with maxval 255 or 65535."""
    data = Path(path).read_bytes()
    pos = 0

    def skip_ws():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break

    def token():
        nonlocal pos
        skip_ws()
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of header", offset=start)
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise FormatError(f"unsupported PGM variant {magic!r}, need binary P5", offset=0)
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError:
        raise FormatError("non-numeric PGM header field", offset=pos)
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}", offset=pos)
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported maxval {maxval}", offset=pos)
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype(np.uint8)
    need = width * height * dtype.itemsize
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, have {len(payload)}", offset=pos
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if maxval == 65535:
        arr = arr.astype(np.uint16)
    return GrayImage(pixels=arr.copy())


def write_pgm(img: GrayImage, path) -> None:
    """Write a GrayImage as binary P5; lossless round-trip with read_pgm."""
    maxval = 255 if img.bit_depth == 8 else 65535
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    if img.bit_depth == 8:
        payload = img.pixels.astype(np.uint8).tobytes()
    else:
        payload = img.pixels.astype(">u2").tobytes()
    Path(path).write_bytes(header + payload)


def _pgm_dimensions(path) -> tuple[int, int]:
    img = read_pgm(path)
    return img.width, img.height


def read_manifest(path) -> SequenceManifest:
    """Read and validate a sequence manifest JSON file.

    Checks phase coverage of the reference frames, positive pixel spacing,
    existence and consistent dimensions of all referenced images.  Navigation
    frame phase defaults to frame_index mod cycle_length when absent.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError("manifest", f"invalid JSON: {e}")
    base = path.parent

    def require(key, typ):
        if key not in doc:
            raise ValidationError(key, "missing required field")
        v = doc[key]
        if typ is float and isinstance(v, int):
            v = float(v)
        if not isinstance(v, typ):
            raise ValidationError(key, f"expected {typ.__name__}")
        return v

    spacing = require("pixel_spacing_mm", float)
    if spacing <= 0:
        raise ValidationError("pixel_spacing_mm", "must be > 0")
    interval = require("frame_interval_s", float)
    if interval <= 0:
        raise ValidationError("frame_interval_s", "must be > 0")
    cycle = require("cycle_length", int)
    if not (2 <= cycle <= 64):
        raise ValidationError("cycle_length", "must be between 2 and 64")

    refs_raw = require("reference_frames", list)
    refs = []
    seen_phases = set()
    for i, fr in enumerate(refs_raw):
        if "path" not in fr or "phase" not in fr:
            raise ValidationError(f"reference_frames[{i}]", "needs path and phase")
        ph = fr["phase"]
        if not isinstance(ph, int) or not (0 <= ph < cycle):
            raise ValidationError(f"reference_frames[{i}].phase", f"phase {ph} outside 0..{cycle - 1}")
        if ph in seen_phases:
            raise ValidationError(f"reference_frames[{i}].phase", f"duplicate phase {ph}")
        seen_phases.add(ph)
        refs.append(FrameRef(path=fr["path"], phase=ph))
    if seen_phases != set(range(cycle)):
        missing = sorted(set(range(cycle)) - seen_phases)
        raise ValidationError("reference_frames", f"missing phases {missing}")

    navs_raw = doc.get("navigation_frames", [])
    if not isinstance(navs_raw, list):
        raise ValidationError("navigation_frames", "expected list")
    navs = []
    for i, fr in enumerate(navs_raw):
        if "path" not in fr:
            raise ValidationError(f"navigation_frames[{i}]", "needs path")
        ph = fr.get("phase", i % cycle)
        if not isinstance(ph, int) or not (0 <= ph < cycle):
            raise ValidationError(f"navigation_frames[{i}].phase", f"phase {ph} outside 0..{cycle - 1}")
        navs.append(FrameRef(path=fr["path"], phase=ph))

    dims = None
    for fr in refs + navs:
        p = base / fr.path
        if not p.is_file():
            raise ValidationError("frames", f"image file not found: {fr.path}")
        d = _pgm_dimensions(p)
        if dims is None:
            dims = d
        elif d != dims:
            raise ValidationError("frames", f"image size mismatch: {fr.path} is {d}, expected {dims}")

    gt = doc.get("ground_truth")
    if gt is not None:
        if not isinstance(gt, dict) or "voi_path" not in gt:
            raise ValidationError("ground_truth", "needs voi_path")

    known = {
        "pixel_spacing_mm", "frame_interval_s", "cycle_length",
        "reference_frames", "navigation_frames", "ground_truth",
    }
    extra = set(doc) - known
    if extra:
        raise ValidationError("manifest", f"unknown fields {sorted(extra)}")

    return SequenceManifest(
        pixel_spacing_mm=spacing,
        frame_interval_s=interval,
        cycle_length=cycle,
        reference_frames=refs,
        navigation_frames=navs,
        ground_truth=gt,
        base_dir=base,
    )
