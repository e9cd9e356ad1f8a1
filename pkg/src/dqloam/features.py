"""Spherical range image projection and edge/surface feature extraction.

A scan becomes a ``rows x cols`` grid of ranges: the column is the azimuth
bin (bin 0 at -pi, increasing counter-clockwise), the row is the beam index
when the cloud carries one, otherwise a linear elevation bin between the
configured vertical field-of-view limits.  The nearest point wins a cell on
collision.

Edges and surfaces come from 3x3 Sobel gradients over the range grid.
Gradient sums run over occupied neighbors only, each contributing its range
difference to the center cell, so empty cells (range shadows) add exactly
nothing instead of fabricating gradients.  Columns wrap around (a full-turn
scan is periodic in azimuth); rows do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PointCloud",
    "SphericalRangeImage",
    "FeatureCloud",
    "FeatureConfig",
    "project_to_sri",
    "extract_edges_surfaces",
]


@dataclass
class PointCloud:
    """Points in meters, with optional per-point intensity and beam index."""

    points: np.ndarray
    intensity: np.ndarray | None = None
    ring: np.ndarray | None = None
    # indices into the cloud this one was derived from, when applicable
    source_index: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def ingest(points, intensity=None, ring=None) -> "PointCloud":
        """Build a cloud, dropping rows with non-finite coordinates."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        keep = np.all(np.isfinite(pts), axis=1)
        return PointCloud(
            pts[keep],
            None if intensity is None else np.asarray(intensity, dtype=float)[keep],
            None if ring is None else np.asarray(ring)[keep],
        )


@dataclass
class SphericalRangeImage:
    rows: int
    cols: int
    range: np.ndarray  # (rows, cols), 0 where empty
    index: np.ndarray  # (rows, cols) int, -1 where empty
    source: PointCloud

    def occupied(self) -> np.ndarray:
        return self.index >= 0


@dataclass
class FeatureCloud:
    """Per-scan features, all in the sensor frame."""

    edges: PointCloud
    surfaces: PointCloud
    descriptors: list = field(default_factory=list)


@dataclass
class FeatureConfig:
    rows: int = 64
    cols: int = 1024
    fov_up_deg: float = 3.0
    fov_down_deg: float = -25.0
    min_range: float = 0.5
    max_range: float = 120.0
    edge_threshold: float = 0.5
    surface_threshold: float = 0.1
    max_edges_per_row: int = 4


def project_to_sri(
    cloud: PointCloud,
    rows: int,
    cols: int,
    fov_up_deg: float = 3.0,
    fov_down_deg: float = -25.0,
    min_range: float = 0.0,
    max_range: float = float("inf"),
) -> SphericalRangeImage:
    """Project a cloud onto the spherical range grid; nearest point wins."""
    if rows < 8 or cols < 8:
        raise ValueError("spherical range image needs rows, cols >= 8")
    pts = cloud.points
    rng_img = np.zeros((rows, cols))
    idx_img = np.full((rows, cols), -1, dtype=np.int64)
    if len(pts) == 0:
        return SphericalRangeImage(rows, cols, rng_img, idx_img, cloud)

    ranges = np.linalg.norm(pts, axis=1)
    valid = (ranges > max(min_range, 1e-9)) & (ranges <= max_range)
    azimuth = np.arctan2(pts[:, 1], pts[:, 0])
    col = np.floor((azimuth + np.pi) / (2.0 * np.pi) * cols).astype(np.int64)
    col = np.clip(col, 0, cols - 1)
    if cloud.ring is not None:
        row = np.asarray(cloud.ring, dtype=np.int64)
        valid &= (row >= 0) & (row < rows)
    else:
        fov_up = np.radians(fov_up_deg)
        fov_down = np.radians(fov_down_deg)
        with np.errstate(invalid="ignore", divide="ignore"):
            elev = np.arcsin(np.clip(pts[:, 2] / np.where(ranges > 0, ranges, 1.0), -1, 1))
        row = np.floor((elev - fov_down) / (fov_up - fov_down) * rows).astype(np.int64)
        valid &= (row >= 0) & (row < rows) & (elev >= fov_down) & (elev <= fov_up)

    sel = np.nonzero(valid)[0]
    # write farthest first so the nearest point in a cell survives
    order = sel[np.argsort(-ranges[sel], kind="stable")]
    rng_img[row[order], col[order]] = ranges[order]
    idx_img[row[order], col[order]] = order
    return SphericalRangeImage(rows, cols, rng_img, idx_img, cloud)


_SOBEL_X = {(-1, -1): -1.0, (-1, 1): 1.0, (0, -1): -2.0, (0, 1): 2.0, (1, -1): -1.0, (1, 1): 1.0}
_SOBEL_Y = {(-1, -1): -1.0, (-1, 0): -2.0, (-1, 1): -1.0, (1, -1): 1.0, (1, 0): 2.0, (1, 1): 1.0}


def _shift(a: np.ndarray, dr: int, dc: int, fill=0.0) -> np.ndarray:
    """Value of the neighbor at offset (dr, dc) for every cell.

    Columns wrap (periodic azimuth); rows falling off the grid read ``fill``.
    """
    out = np.roll(a, -dc, axis=1)
    if dr == 0:
        return out.copy()
    shifted = np.full_like(out, fill)
    if dr > 0:
        shifted[:-dr, :] = out[dr:, :]
    else:
        shifted[-dr:, :] = out[:dr, :]
    return shifted


def extract_edges_surfaces(
    sri: SphericalRangeImage, cfg: FeatureConfig
) -> tuple[PointCloud, PointCloud]:
    """Classify occupied cells into edge and surface feature points.

    Edge candidates exceed ``edge_threshold`` in Sobel gradient magnitude and
    survive a per-row non-maximum suppression capped at
    ``max_edges_per_row``.  Surface cells fall below ``surface_threshold``
    and have at least 5 occupied stencil neighbors.  A cell is classified at
    most once.
    """
    occ = sri.occupied()
    r = sri.range
    gx = np.zeros_like(r)
    gy = np.zeros_like(r)
    count = np.zeros_like(r)
    offsets = sorted(set(_SOBEL_X) | set(_SOBEL_Y) | {(-1, 0), (1, 0), (0, -1), (0, 1)})
    for dr, dc in offsets:
        nb_occ = _shift(occ.astype(float), dr, dc) > 0.5
        nb_val = _shift(r, dr, dc)
        diff = np.where(nb_occ, nb_val - r, 0.0)
        wx = _SOBEL_X.get((dr, dc), 0.0)
        wy = _SOBEL_Y.get((dr, dc), 0.0)
        if wx:
            gx += wx * diff
        if wy:
            gy += wy * diff
        count += nb_occ
    gmag = np.hypot(gx, gy)

    edge_cand = occ & (gmag > cfg.edge_threshold)
    surface = occ & (gmag < cfg.surface_threshold) & (count >= 5)

    # per-row non-maximum suppression: keep local maxima along the row,
    # strongest first, at most max_edges_per_row of them
    left = _shift(gmag, 0, -1)
    right = _shift(gmag, 0, 1)
    local_max = edge_cand & (gmag >= left) & (gmag >= right)
    edge_cells = []
    for row in range(sri.rows):
        cols = np.nonzero(local_max[row])[0]
        if len(cols) > cfg.max_edges_per_row:
            strongest = np.argsort(-gmag[row, cols], kind="stable")[: cfg.max_edges_per_row]
            cols = cols[strongest]
        for c in sorted(cols):
            edge_cells.append((row, c))

    def gather(cells) -> PointCloud:
        if not cells:
            return PointCloud(np.zeros((0, 3)), source_index=np.zeros(0, dtype=np.int64))
        idx = np.array([sri.index[rc] for rc in cells], dtype=np.int64)
        return PointCloud(sri.source.points[idx], source_index=idx)

    surf_cells = [tuple(rc) for rc in np.argwhere(surface)]
    return gather(edge_cells), gather(sorted(surf_cells))
