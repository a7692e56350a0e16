"""Minimal binary Netpbm codecs: P5 graymaps (16-bit) and P6 pixmaps (8-bit)."""

from __future__ import annotations

import os

import numpy as np


class NetpbmError(ValueError):
    """Malformed or unsupported Netpbm file."""


def _parse_header(data: bytes, magic: bytes, path: str
                  ) -> tuple[int, int, int, list[str], int]:
    """Parse '<magic> width height maxval' allowing # comments.

    Returns (width, height, maxval, comments, raster_offset).
    """
    if not data.startswith(magic):
        raise NetpbmError(f"{path}: expected magic {magic.decode()!r}")
    pos = len(magic)
    comments: list[str] = []
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise NetpbmError(f"{path}: truncated header")
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise NetpbmError(f"{path}: truncated header comment")
            comments.append(data[pos + 1:end].decode("ascii", "replace").strip())
            pos = end + 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise NetpbmError(f"{path}: unexpected byte {ch!r} in header")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise NetpbmError(f"{path}: missing whitespace before raster")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise NetpbmError(f"{path}: invalid dimensions {width}x{height}")
    return width, height, maxval, comments, pos + 1


def write_pgm16(path: str | os.PathLike, values: np.ndarray,
                comment: str | None = None) -> None:
    """Write a 2D array of ids in [0, 65535] as a binary P5, MSB first."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"P5 payload must be 2D, got {values.ndim} dimensions")
    if values.min() < 0 or values.max() > 65535:
        raise ValueError("P5 values must lie in [0, 65535]")
    header = b"P5\n"
    if comment is not None:
        header += b"# " + comment.encode("ascii") + b"\n"
    header += f"{values.shape[1]} {values.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype(">u2").tobytes())


def read_pgm16(path: str | os.PathLike) -> tuple[np.ndarray, list[str]]:
    """Read a binary P5 with maxval 65535; returns (values, header comments)."""
    with open(path, "rb") as fh:
        data = fh.read()
    spath = os.fspath(path)
    width, height, maxval, comments, offset = _parse_header(data, b"P5", spath)
    if maxval != 65535:
        raise NetpbmError(f"{spath}: expected maxval 65535, got {maxval}")
    need = width * height * 2
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise NetpbmError(f"{spath}: truncated raster "
                          f"({len(raster)} of {need} bytes)")
    values = np.frombuffer(raster, dtype=">u2").reshape(height, width)
    return values.astype(np.int64), comments


def write_ppm8(path: str | os.PathLike, rgb: np.ndarray) -> None:
    """Write an [H,W,3] uint8 array as a binary P6 with maxval 255."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"P6 payload must be [H,W,3], got shape {rgb.shape}")
    if rgb.dtype != np.uint8:
        raise ValueError(f"P6 payload must be uint8, got {rgb.dtype}")
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rgb.tobytes())


def read_ppm8(path: str | os.PathLike) -> np.ndarray:
    """Read a binary P6 with maxval 255 into an [H,W,3] uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    spath = os.fspath(path)
    width, height, maxval, _, offset = _parse_header(data, b"P6", spath)
    if maxval != 255:
        raise NetpbmError(f"{spath}: expected maxval 255, got {maxval}")
    need = width * height * 3
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise NetpbmError(f"{spath}: truncated raster "
                          f"({len(raster)} of {need} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()
