"""Readers and writers for every on-disk artifact.

Everything round-trips losslessly at its declared precision: detection
records serialize floats with shortest-exact decimal repr, depth
rasters quantize to 16-bit PGM, RGB to 8-bit PPM, and parsers raise
typed errors (never crash) on malformed input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import CalibrationError, FormatError, ParseError, TruncationError
from .evaluation import GroundTruthFrame
from .geometry import CornerBox, GaussianBox, Modality
from .projection import CalibMatrices, PointCloud
from .raster import Raster

__all__ = [
    "DetectionRecord",
    "read_kitti_labels",
    "read_velodyne",
    "read_calib",
    "read_pgm",
    "write_pgm",
    "read_ppm",
    "write_ppm",
    "read_raster",
    "write_raster",
    "read_detections",
    "write_detections",
    "group_detections",
]

# KITTI object types folded into the three evaluated classes
_KITTI_CLASS = {
    "Car": 0, "Van": 0, "Truck": 0, "Tram": 0,
    "Pedestrian": 1, "Person_sitting": 1,
    "Cyclist": 2,
}
_KITTI_IGNORED = {"DontCare", "Misc"}


@dataclass(frozen=True)
class DetectionRecord:
    """One serialized detection: its frame plus the box itself."""

    frame_id: str
    box: GaussianBox

    def __post_init__(self):
        if not self.frame_id or any(c.isspace() for c in self.frame_id):
            raise ValueError(f"frame_id must be non-empty without whitespace: {self.frame_id!r}")


def read_kitti_labels(path, *, errors: list | None = None) -> GroundTruthFrame:
    """Parse one KITTI label file into a ground-truth frame.

    Car-like types (Car, Van, Truck, Tram) map to class 0, person
    types (Pedestrian, Person_sitting) to 1, Cyclist to 2; DontCare
    and Misc lines are skipped. The frame id is the file stem.

    Malformed lines and degenerate (zero-extent) boxes raise
    :class:`ParseError` unless ``errors`` is given, in which case they
    are appended there and parsing continues.
    """
    path = Path(path)

    def report(exc: ParseError):
        if errors is None:
            raise exc
        errors.append(exc)

    objects = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            kind = fields[0]
            if kind in _KITTI_IGNORED:
                continue
            if kind not in _KITTI_CLASS:
                report(ParseError(f"unknown object type {kind!r}", path=str(path), line=line_no))
                continue
            if len(fields) < 8:
                report(ParseError(
                    f"expected at least 8 fields, got {len(fields)}", path=str(path), line=line_no
                ))
                continue
            try:
                left, top, right, bottom = (float(v) for v in fields[4:8])
            except ValueError:
                report(ParseError("non-numeric bbox fields", path=str(path), line=line_no))
                continue
            if not (right > left and bottom > top):
                report(ParseError(
                    f"degenerate box ({left}, {top}, {right}, {bottom})",
                    path=str(path), line=line_no,
                ))
                continue
            objects.append((_KITTI_CLASS[kind], CornerBox(left, top, right, bottom)))
    return GroundTruthFrame(frame_id=path.stem, objects=tuple(objects))


def read_velodyne(path) -> PointCloud:
    """Read a KITTI velodyne scan: little-endian float32 (x, y, z, i)."""
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise TruncationError(
            f"{path}: velodyne payload is {len(raw)} bytes, not a multiple of 16"
        )
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return PointCloud(data.reshape(-1, 4))


def _parse_calib_lines(path) -> dict[str, np.ndarray]:
    entries = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or ":" not in line:
                continue
            key, _, rest = line.partition(":")
            try:
                entries[key.strip()] = np.array([float(v) for v in rest.split()])
            except ValueError:
                raise CalibrationError(f"{path}: non-numeric values for key {key.strip()!r}")
    return entries


def read_calib(path) -> CalibMatrices:
    """Parse KITTI calibration (P2, R0_rect, Tr_velo_to_cam) into K, R, T.

    K is P2's left 3x3 block; P2's fourth column contributes the
    camera-frame offset K^-1 p4, so a sensor point P projects exactly
    as P2 . rect(R0) . Tr would project it.
    """
    entries = _parse_calib_lines(path)
    shapes = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}
    for key, size in shapes.items():
        if key not in entries:
            raise CalibrationError(f"{path}: missing calibration key {key!r}")
        if entries[key].size != size:
            raise CalibrationError(
                f"{path}: key {key!r} has {entries[key].size} values, expected {size}"
            )
    p2 = entries["P2"].reshape(3, 4)
    r0 = entries["R0_rect"].reshape(3, 3)
    tr = entries["Tr_velo_to_cam"].reshape(3, 4)
    k = p2[:, :3]
    try:
        cam_offset = np.linalg.solve(k, p2[:, 3])
    except np.linalg.LinAlgError:
        raise CalibrationError(f"{path}: singular intrinsics block in P2")
    rotation = r0 @ tr[:, :3]
    translation = r0 @ tr[:, 3] + cam_offset
    return CalibMatrices(intrinsics=k, rotation=rotation, translation=translation)


# -- netpbm rasters ---------------------------------------------------------

def _read_pnm_tokens(raw: bytes, count: int, path) -> tuple[list[int], int]:
    """Read `count` whitespace/comment-delimited integer tokens after the
    magic, returning them and the offset where binary data starts."""
    tokens: list[int] = []
    i = 2  # past the 2-byte magic
    n = len(raw)
    while len(tokens) < count:
        while i < n and raw[i : i + 1].isspace():
            i += 1
        if i < n and raw[i] == ord("#"):
            while i < n and raw[i] != ord("\n"):
                i += 1
            continue
        start = i
        while i < n and not raw[i : i + 1].isspace():
            i += 1
        if start == i:
            raise FormatError(f"{path}: truncated header")
        try:
            tokens.append(int(raw[start:i]))
        except ValueError:
            raise FormatError(f"{path}: non-numeric header token {raw[start:i]!r}")
    if i >= n or not raw[i : i + 1].isspace():
        raise FormatError(f"{path}: header not terminated by whitespace")
    return tokens, i + 1


def _read_pnm(path, magic: bytes, channels: int) -> Raster:
    raw = Path(path).read_bytes()
    if raw[:2] != magic:
        raise FormatError(f"{path}: bad magic {raw[:2]!r}, expected {magic!r}")
    (width, height, maxval), offset = _read_pnm_tokens(raw, 3, path)
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
    if maxval <= 0 or maxval > 65535:
        raise FormatError(f"{path}: maxval {maxval} out of (0, 65535]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * channels * dtype.itemsize
    payload = raw[offset:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if values.size and values.max() > maxval:
        raise FormatError(f"{path}: pixel value {int(values.max())} exceeds maxval {maxval}")
    values = values / float(maxval)
    if channels == 1:
        return Raster(values.reshape(height, width))
    return Raster(values.reshape(height, width, channels))


def read_pgm(path) -> Raster:
    """Read an 8- or 16-bit binary PGM (P5) as a single-channel raster."""
    return _read_pnm(path, b"P5", 1)


def read_ppm(path) -> Raster:
    """Read an 8-bit binary PPM (P6) as a 3-channel raster."""
    return _read_pnm(path, b"P6", 3)


def write_pgm(path, raster: Raster, *, bit_depth: int = 16) -> None:
    """Write a single-channel raster as binary PGM (P5).

    Values quantize to round(maxval * v); 16-bit payloads are
    big-endian per the format.
    """
    if raster.channels != 1:
        raise FormatError(f"PGM requires a single channel, got {raster.channels}")
    if bit_depth not in (8, 16):
        raise FormatError(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxval = (1 << bit_depth) - 1
    q = np.rint(raster.pixels * maxval)
    data = q.astype(">u2" if bit_depth == 16 else "u1")
    header = f"P5\n{raster.width} {raster.height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def write_ppm(path, raster: Raster) -> None:
    """Write a 3-channel raster as 8-bit binary PPM (P6)."""
    if raster.channels != 3:
        raise FormatError(f"PPM requires 3 channels, got {raster.channels}")
    q = np.rint(raster.pixels * 255.0).astype("u1")
    header = f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


def read_raster(path) -> Raster:
    """Read a PGM or PPM raster, dispatching on the magic number."""
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        return read_pgm(path)
    if magic == b"P6":
        return read_ppm(path)
    raise FormatError(f"{path}: unsupported raster magic {magic!r}")


def write_raster(path, raster: Raster) -> None:
    """Write a raster in its natural format: PGM-16 (1ch) or PPM (3ch)."""
    if raster.channels == 1:
        write_pgm(path, raster)
    else:
        write_ppm(path, raster)


# -- detection records ------------------------------------------------------

_DETECTION_FIELDS = 12  # frame_id modality class_id score mu[4] var[4]


def write_detections(path, records: Iterable[DetectionRecord]) -> None:
    """Write detection records one per line; floats keep full precision."""
    lines = []
    for rec in records:
        b = rec.box
        values = [b.score, b.mu_x, b.mu_y, b.mu_w, b.mu_h, b.var_x, b.var_y, b.var_w, b.var_h]
        lines.append(
            f"{rec.frame_id} {b.modality.value} {b.class_id} "
            + " ".join(repr(v) for v in values)
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_detections(path) -> list[DetectionRecord]:
    """Read detection records written by :func:`write_detections`."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != _DETECTION_FIELDS:
                raise ParseError(
                    f"expected {_DETECTION_FIELDS} fields, got {len(fields)}",
                    path=str(path), line=line_no,
                )
            frame_id, modality_name = fields[0], fields[1]
            try:
                modality = Modality(modality_name)
            except ValueError:
                raise ParseError(
                    f"unknown modality {modality_name!r}", path=str(path), line=line_no
                )
            try:
                class_id = int(fields[2])
                score, mu_x, mu_y, mu_w, mu_h, var_x, var_y, var_w, var_h = (
                    float(v) for v in fields[3:]
                )
            except ValueError:
                raise ParseError("non-numeric detection fields", path=str(path), line=line_no)
            try:
                box = GaussianBox(
                    mu_x=mu_x, mu_y=mu_y, mu_w=mu_w, mu_h=mu_h,
                    var_x=var_x, var_y=var_y, var_w=var_w, var_h=var_h,
                    score=score, class_id=class_id, modality=modality,
                )
            except ValueError as exc:
                raise ParseError(str(exc), path=str(path), line=line_no)
            records.append(DetectionRecord(frame_id=frame_id, box=box))
    return records


def group_detections(records: Iterable[DetectionRecord]) -> dict[str, list[GaussianBox]]:
    """Group records by frame id, preserving record order within frames."""
    grouped: dict[str, list[GaussianBox]] = {}
    for rec in records:
        grouped.setdefault(rec.frame_id, []).append(rec.box)
    return grouped
