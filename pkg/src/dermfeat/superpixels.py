"""Superpixel maps, per-superpixel labels, and the two conversions between
superpixel labellings and per-class mask volumes.

A superpixel map assigns every pixel a contiguous id in [0, count).
Labels are per-superpixel binary vectors over the four feature classes
(overlaps allowed); masks are [4,H,W] volumes where channel c holds the
class-c values painted per pixel.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import netpbm
from .ops import as_f64

CLASS_NAMES = ("pigment_network", "negative_network", "milia_like_cyst", "streaks")
CLASS_COUNT = len(CLASS_NAMES)


@dataclass
class SuperpixelMap:
    """Per-pixel superpixel index field with `count` contiguous ids."""

    index: np.ndarray  # [H,W] int64
    count: int

    @property
    def height(self) -> int:
        return self.index.shape[0]

    @property
    def width(self) -> int:
        return self.index.shape[1]

    def validate(self) -> None:
        if self.index.ndim != 2:
            raise ValueError(f"superpixel index field must be 2D, got "
                             f"{self.index.ndim} dimensions")
        if self.count < 1:
            raise ValueError(f"superpixel count must be positive, got {self.count}")
        if self.index.min() < 0 or self.index.max() >= self.count:
            bad = int(self.index.max() if self.index.max() >= self.count
                      else self.index.min())
            raise ValueError(f"superpixel id {bad} outside [0, {self.count})")
        occupancy = np.bincount(self.index.ravel(), minlength=self.count)
        missing = np.flatnonzero(occupancy == 0)
        if missing.size:
            raise ValueError(f"empty superpixel {int(missing[0])}")

    def pixel_counts(self) -> np.ndarray:
        """Number of pixels per superpixel id, shape [count]."""
        return np.bincount(self.index.ravel(), minlength=self.count)


def grid_superpixels(height: int, width: int, cell: int) -> SuperpixelMap:
    """Partition an image into cell x cell rectangles, ids in row-major
    cell order; the last row/column of cells may be ragged."""
    if cell < 1:
        raise ValueError(f"grid cell must be positive, got {cell}")
    if height < 1 or width < 1:
        raise ValueError(f"grid extents must be positive, got {height}x{width}")
    cols = (width + cell - 1) // cell
    ri = np.arange(height) // cell
    cj = np.arange(width) // cell
    index = (ri[:, None] * cols + cj[None, :]).astype(np.int64)
    smap = SuperpixelMap(index=index, count=int(index.max()) + 1)
    smap.validate()
    return smap


def validate_labels(labels: np.ndarray, count: int) -> np.ndarray:
    """Check a [K,4] binary label matrix against a superpixel count."""
    labels = as_f64(labels)
    if labels.ndim != 2 or labels.shape[1] != CLASS_COUNT:
        raise ValueError(f"label matrix must be [K,{CLASS_COUNT}], got shape "
                         f"{labels.shape}")
    if labels.shape[0] != count:
        raise ValueError(f"label matrix has {labels.shape[0]} rows, superpixel "
                         f"map has {count}")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("label matrix entries must be 0 or 1")
    return labels


def validate_mask(mask: np.ndarray, height: int | None = None,
                  width: int | None = None) -> np.ndarray:
    """Check a [4,H,W] mask volume: shape and [0,1] value range."""
    mask = as_f64(mask)
    if mask.ndim != 3 or mask.shape[0] != CLASS_COUNT:
        raise ValueError(f"mask must be [{CLASS_COUNT},H,W], got shape {mask.shape}")
    if height is not None and mask.shape[1] != height:
        raise ValueError(f"mask height {mask.shape[1]} != expected {height}")
    if width is not None and mask.shape[2] != width:
        raise ValueError(f"mask width {mask.shape[2]} != expected {width}")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise ValueError("mask values must lie in [0, 1]")
    return mask


def labels_to_mask(smap: SuperpixelMap, labels: np.ndarray) -> np.ndarray:
    """Paint per-superpixel labels into a binary [4,H,W] mask volume:
    mask[c,i,j] = labels[smap.index[i,j], c]."""
    labels = validate_labels(labels, smap.count)
    return np.ascontiguousarray(labels[smap.index].transpose(2, 0, 1))


def mask_to_scores(smap: SuperpixelMap, mask: np.ndarray) -> np.ndarray:
    """Average each mask channel over every superpixel's pixels.

    Returns [count,4] scores; row i, column c is the mean of mask[c]
    over the pixels with id i.
    """
    mask = validate_mask(mask, smap.height, smap.width)
    flat = smap.index.ravel()
    counts = np.bincount(flat, minlength=smap.count).astype(np.float64)
    scores = np.empty((smap.count, CLASS_COUNT))
    for c in range(CLASS_COUNT):
        scores[:, c] = np.bincount(flat, weights=mask[c].ravel(),
                                   minlength=smap.count) / counts
    return scores


def write_superpixel_map(smap: SuperpixelMap, path: str | os.PathLike) -> None:
    """Write as binary P5, two bytes per pixel MSB first, with a
    '# K=<count>' header comment carrying the declared count."""
    smap.validate()
    if smap.count > 65536:
        raise ValueError(f"superpixel count {smap.count} exceeds the 16-bit "
                         f"id range of the P5 format")
    netpbm.write_pgm16(path, smap.index, comment=f"K={smap.count}")


def read_superpixel_map(path: str | os.PathLike) -> SuperpixelMap:
    """Read a P5 superpixel map and validate both contiguity invariants."""
    values, comments = netpbm.read_pgm16(path)
    count = None
    for comment in comments:
        if comment.startswith("K="):
            try:
                count = int(comment[2:])
            except ValueError:
                raise netpbm.NetpbmError(
                    f"{os.fspath(path)}: malformed count comment {comment!r}")
    if count is None:
        raise netpbm.NetpbmError(
            f"{os.fspath(path)}: missing '# K=<count>' header comment")
    smap = SuperpixelMap(index=values, count=count)
    smap.validate()
    return smap


def write_labels(labels: np.ndarray, path: str | os.PathLike) -> None:
    """Write a [K,4] binary label matrix as a JSON document."""
    labels = validate_labels(labels, labels.shape[0])
    doc = {
        "superpixel_count": int(labels.shape[0]),
        "classes": list(CLASS_NAMES),
        "labels": [[int(v) for v in row] for row in labels],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_labels(path: str | os.PathLike) -> np.ndarray:
    """Read and validate a label JSON document into a [K,4] float array."""
    spath = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("superpixel_count", "classes", "labels"):
        if key not in doc:
            raise ValueError(f"{spath}: missing key {key!r}")
    if tuple(doc["classes"]) != CLASS_NAMES:
        raise ValueError(f"{spath}: class list {doc['classes']} does not match "
                         f"{list(CLASS_NAMES)}")
    labels = np.asarray(doc["labels"], dtype=np.float64)
    if labels.ndim != 2:
        raise ValueError(f"{spath}: labels must be a list of rows")
    return validate_labels(labels, int(doc["superpixel_count"]))
