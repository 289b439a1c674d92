"""Find Points: threshold a grayscale frame, label 8-connected components and
reduce each component to its centroid.

Labeling works on horizontal runs of foreground pixels rather than on single
pixels, so the cost scales with the number of lit rows, not with the frame
size (apart from the one vectorized threshold pass).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InputError

DEFAULT_THRESHOLD = 128


@dataclass(frozen=True, eq=False)
class Frame:
    """One camera image: row-major 8-bit intensities of shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray
    timestamp: float
    sequence: int

    def __post_init__(self):
        px = self.pixels
        if isinstance(px, (bytes, bytearray, memoryview)):
            px = np.frombuffer(bytes(px), dtype=np.uint8)
        px = np.asarray(px)
        if px.dtype != np.uint8:
            raise InputError(f"pixel buffer must be uint8, got {px.dtype}")
        if px.size != self.width * self.height:
            raise InputError(
                f"pixel buffer has {px.size} values, expected {self.width}x{self.height}")
        object.__setattr__(self, "pixels", px.reshape(self.height, self.width))


@dataclass(frozen=True, eq=False)
class PointFrame:
    """Frame from an ideal camera: blob centroids are delivered directly at full
    precision instead of through a pixel raster."""

    width: int
    height: int
    centroids: np.ndarray
    timestamp: float
    sequence: int
    areas: np.ndarray | None = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "centroids", c)


AnyFrame = Union[Frame, PointFrame]


@dataclass(frozen=True)
class Blob:
    u: float
    v: float
    area: int

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.u, self.v)


def _find(parent: list[int], i: int) -> int:
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def detect_blobs(frame: Frame, threshold: int = DEFAULT_THRESHOLD,
                 min_area: int = 1, max_area: int | None = None) -> list[Blob]:
    """Return one blob per 8-connected component of pixels >= ``threshold``
    whose pixel count lies in ``[min_area, max_area]``.

    Centroids are unweighted means of member pixel coordinates. Components
    touching the border are kept. Output is sorted by (v, u).
    """
    if frame.pixels.size == 0:
        raise InputError("empty frame buffer")
    if max_area is None:
        max_area = frame.pixels.size
    if not 0 < min_area <= max_area:
        raise InputError("need 0 < min_area <= max_area")

    mask = frame.pixels >= threshold
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return []
    sub = np.zeros((rows.size, frame.width + 2), dtype=np.int8)
    sub[:, 1:-1] = mask[rows]
    edges = np.diff(sub, axis=1)
    r_start, c_start = np.nonzero(edges == 1)
    _, c_end = np.nonzero(edges == -1)
    # Runs come out in row-major order; starts and ends pair up one to one.
    run_row = rows[r_start]
    run_lo = c_start
    run_hi = c_end - 1  # inclusive

    n_runs = run_row.size
    parent = list(range(n_runs))
    row_bounds = np.flatnonzero(np.diff(run_row)) + 1
    starts = np.concatenate([[0], row_bounds])
    ends = np.concatenate([row_bounds, [n_runs]])
    rr, lo, hi = run_row.tolist(), run_lo.tolist(), run_hi.tolist()
    for k in range(1, len(starts)):
        a0, a1 = int(starts[k - 1]), int(ends[k - 1])
        b0, b1 = int(starts[k]), int(ends[k])
        if rr[b0] != rr[a0] + 1:
            continue
        i = a0
        for j in range(b0, b1):
            # 8-connectivity: runs touch if their column spans overlap after widening by 1.
            while i < a1 and hi[i] < lo[j] - 1:
                i += 1
            m = i
            while m < a1 and lo[m] <= hi[j] + 1:
                ra, rb = _find(parent, m), _find(parent, j)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb
                m += 1

    labels = np.fromiter((_find(parent, i) for i in range(n_runs)), dtype=np.int64, count=n_runs)
    length = (run_hi - run_lo + 1).astype(np.float64)
    area = np.bincount(labels, weights=length, minlength=n_runs)
    su = np.bincount(labels, weights=length * (run_lo + run_hi) / 2.0, minlength=n_runs)
    sv = np.bincount(labels, weights=length * run_row, minlength=n_runs)
    roots = np.flatnonzero(area > 0)
    area = area[roots]
    keep = (area >= min_area) & (area <= max_area)
    roots, area = roots[keep], area[keep]
    u = su[roots] / area
    v = sv[roots] / area
    order = np.lexsort((u, v))
    return [Blob(float(u[k]), float(v[k]), int(area[k])) for k in order]


def blob_centroids(blobs: list[Blob]) -> np.ndarray:
    return np.array([[b.u, b.v] for b in blobs], dtype=float).reshape(-1, 2)


def area_band(radius: float, slack: float = 0.5) -> tuple[int, int]:
    """Size-filter bounds for LED blobs rendered as disks of ``radius`` pixels."""
    nominal = np.pi * radius * radius
    return max(1, int(np.floor(nominal * (1 - slack)))), int(np.ceil(nominal * (1 + slack)))


def write_pgm(path: Union[str, os.PathLike], pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # single whitespace byte ends the header


def read_pgm(path: Union[str, os.PathLike], timestamp: float = 0.0, sequence: int = 0) -> Frame:
    """Load a binary (P5) 8-bit PGM file as a Frame."""
    data = open(path, "rb").read()
    (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise InputError(f"{path}: not a binary PGM (magic {magic!r})")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise InputError(f"{path}: only 8-bit PGM is supported")
    body = data[offset:offset + w * h]
    if len(body) != w * h:
        raise InputError(f"{path}: pixel data truncated")
    return Frame(w, h, np.frombuffer(body, dtype=np.uint8).copy(), timestamp, sequence)
