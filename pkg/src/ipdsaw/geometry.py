"""Planar regions for polymer shapes: occupied squares, bands, Hausdorff distance.

All regions are finite unions of closed axis-aligned boxes, possibly
degenerate (segments or points).  Distances are computed between grid point
clouds at a chosen pitch, which bounds the discretization error by
pitch * sqrt(2); exact polygon arithmetic is out of scope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, ValidationError
from .model import LatticePath, StretchConfig
from .rescaling import StepFunction

__all__ = [
    "OccupiedSet",
    "Region",
    "HausdorffDistance",
    "occupied_set",
    "rescale",
    "band_from_profile",
    "polymer_band",
    "align_band_to_squares",
    "hausdorff",
]


@dataclass(frozen=True, eq=False)
class Region:
    """Union of closed boxes, rows (x0, x1, y0, y1) with x0 <= x1, y0 <= y1."""

    boxes: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boxes, dtype=float)
        if b.ndim != 2 or b.shape[1] != 4 or b.shape[0] < 1:
            raise ValidationError("boxes must be a nonempty (n, 4) array")
        if not np.all(np.isfinite(b)):
            raise ValidationError("box coordinates must be finite")
        if np.any(b[:, 1] < b[:, 0]) or np.any(b[:, 3] < b[:, 2]):
            raise ValidationError("boxes need x0 <= x1 and y0 <= y1")
        object.__setattr__(self, "boxes", b)

    @classmethod
    def band(cls, x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> "Region":
        """Vertical band: columns [x_i, x_{i+1}] x [lo_i, hi_i], right end closed
        by a final (possibly degenerate) column at x_{-1}."""
        x = np.asarray(x, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if not (len(x) == len(lo) == len(hi)) or len(x) < 1:
            raise ValidationError("band needs equally long nonempty x, lo, hi")
        if np.any(np.diff(x) < 0):
            raise ValidationError("band abscissae must be nondecreasing")
        if np.any(hi < lo):
            raise ValidationError("band needs lo <= hi")
        boxes = np.column_stack([x, np.append(x[1:], x[-1]), lo, hi])
        return cls(boxes)

    @property
    def bounds(self):
        b = self.boxes
        return (b[:, 0].min(), b[:, 1].max(), b[:, 2].min(), b[:, 3].max())

    @property
    def area(self) -> float:
        # valid for the constructions here, whose boxes have disjoint interiors
        b = self.boxes
        return float(np.sum((b[:, 1] - b[:, 0]) * (b[:, 3] - b[:, 2])))

    def translate(self, dx: float, dy: float) -> "Region":
        return Region(self.boxes + np.array([dx, dx, dy, dy]))

    def pad(self, px: float, py: float) -> "Region":
        if px < 0 or py < 0:
            raise DomainError("padding must be nonnegative")
        return Region(self.boxes + np.array([-px, px, -py, py]))

    def scaled(self, v1: float, v2: float) -> "Region":
        if not (v1 > 0 and v2 > 0):
            raise DomainError("scale divisors must be positive")
        return Region(self.boxes / np.array([v1, v1, v2, v2]))

    def point_cloud(self, pitch: float) -> np.ndarray:
        """Grid points at the given pitch covering every box, edges included."""
        if not (pitch > 0):
            raise DomainError("pitch must be positive")
        b = self.boxes
        sides = np.column_stack([b[:, 1] - b[:, 0], b[:, 3] - b[:, 2]])
        # boxes with congruent sides share one offset pattern; widths that
        # only differ by accumulated rounding are folded into one group
        keys, inverse = np.unique(np.round(sides / pitch, 9), axis=0, return_inverse=True)
        chunks = []
        for k in range(len(keys)):
            sel = np.flatnonzero(inverse == k)
            w, h = sides[sel].max(axis=0)
            gx, gy = np.meshgrid(
                _axis_points(0.0, w, pitch), _axis_points(0.0, h, pitch), indexing="ij"
            )
            rel = np.column_stack([gx.ravel(), gy.ravel()])
            chunks.append((b[sel, None, 0:3:2] + rel[None, :, :]).reshape(-1, 2))
        return np.unique(np.concatenate(chunks), axis=0)

    def to_json(self) -> str:
        polys = [
            [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
            for x0, x1, y0, y1 in self.boxes.tolist()
        ]
        return json.dumps({"polygons": polys})

    def cloud_to_csv(self, fileobj, pitch: float):
        for x, y in self.point_cloud(pitch):
            fileobj.write(f"{x:.12g},{y:.12g}\n")


def _axis_points(a: float, b: float, pitch: float) -> np.ndarray:
    if b <= a:
        return np.array([a])
    n = int(np.floor((b - a) / pitch + 1e-9))
    pts = a + pitch * np.arange(n + 1)
    if pts[-1] < b - 1e-12 * max(1.0, abs(b)):
        pts = np.append(pts, b)
    else:
        pts[-1] = b
    return pts


@dataclass(frozen=True, eq=False)
class OccupiedSet:
    """Unit squares around integer sites, with lazily applied coordinate divisors."""

    centers: np.ndarray
    scale: tuple = (1.0, 1.0)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.int64)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValidationError("centers must be a nonempty (n, 2) array")
        if len(np.unique(c, axis=0)) != len(c):
            raise ValidationError("centers must be pairwise distinct")
        v1, v2 = self.scale
        if not (v1 > 0 and v2 > 0):
            raise DomainError("scale divisors must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "scale", (float(v1), float(v2)))

    @property
    def count(self) -> int:
        return len(self.centers)

    @property
    def area(self) -> float:
        return self.count / (self.scale[0] * self.scale[1])

    def as_region(self) -> Region:
        c = self.centers.astype(float)
        boxes = np.column_stack([c[:, 0] - 0.5, c[:, 0] + 0.5, c[:, 1] - 0.5, c[:, 1] + 0.5])
        return Region(boxes).scaled(*self.scale)


def occupied_set(path: LatticePath) -> OccupiedSet:
    """One unit square per visited site; plane area of the union = length + 1."""
    return OccupiedSet(np.asarray(path.sites, dtype=np.int64))


def rescale(s: OccupiedSet, v1: float, v2: float) -> OccupiedSet:
    """Divide coordinates by (v1, v2); composes with any scale already pending."""
    if not (v1 > 0 and v2 > 0):
        raise DomainError("scale divisors must be positive")
    return OccupiedSet(s.centers, (s.scale[0] * v1, s.scale[1] * v2))


def band_from_profile(h: StepFunction, m: StepFunction, x_end: float) -> Region:
    """Region between m - h/2 and m + h/2 over [0, x_end].

    h and m must share grid and domain; h must be nonnegative.  Cells are the
    step functions' own cells; a final column at x_end (degenerate when x_end
    is a grid point) closes the right edge with the value taken there.
    """
    if not np.isclose(h.grid_step, m.grid_step) or h.domain != m.domain:
        raise ValidationError("profile and center of mass must share grid and domain")
    if np.any(h.values < 0):
        raise ValidationError("profile heights must be nonnegative")
    if x_end < 0:
        raise DomainError("x_end must be nonnegative")
    step = h.grid_step
    if h.domain == "unit" and x_end > (len(h.values) - 1) * step * (1 + 1e-9):
        raise DomainError("x_end beyond the unit-domain grid")
    n_full = int(np.floor(x_end / step + 1e-9))
    idx = np.minimum(np.arange(n_full + 1), len(h.values) - 1)
    left = step * np.arange(n_full + 1)
    right = np.append(step * np.arange(1, n_full + 1), x_end)
    mid, half = m.values[idx], 0.5 * h.values[idx]
    return Region(np.column_stack([left, np.maximum(right, left), mid - half, mid + half]))


def polymer_band(config: StretchConfig, L: int) -> Region:
    """Scaled band of the stretch profile around the stretch centers.

    Stretch n occupies the column [(n-1), n] / L^(2/3) with vertical extent
    (center of stretch n) +- |l_n| / 2, everything scaled by L^(1/3).
    """
    if L < 1:
        raise DomainError("length must be >= 1")
    l = np.asarray(config.stretches, dtype=float)
    space = float(L) ** (-1.0 / 3.0)
    step = float(L) ** (-2.0 / 3.0)
    heights = StepFunction(step, space * np.abs(l), "half_line")
    centers = StepFunction(step, space * (np.cumsum(l) - 0.5 * l), "half_line")
    return band_from_profile(heights, centers, len(l) * step)


def align_band_to_squares(band: Region, L: int) -> Region:
    """Shift left by 1/(2 L^(2/3)) and thicken by 1/L^(1/3) vertically.

    Maps the stretch band onto the union of unit squares of the same polymer
    after rescaling by (L^(2/3), L^(1/3)): square centers sit half a lattice
    unit left of the stretch columns and squares overhang stretch ends by
    half a unit vertically.
    """
    if L < 1:
        raise DomainError("length must be >= 1")
    return band.translate(-0.5 * float(L) ** (-2.0 / 3.0), 0.0).pad(
        0.0, 0.5 * float(L) ** (-1.0 / 3.0)
    )


@dataclass(frozen=True)
class HausdorffDistance:
    value: float
    error_bound: float
    pitch: float

    def __float__(self) -> float:
        return self.value


def _as_region(obj) -> Region:
    return obj.as_region() if isinstance(obj, OccupiedSet) else obj


def default_pitch(a: Region, b: Region) -> float:
    """An eighth of the smallest positive box height, capped at 1/8.

    Heights set the resolution because the constructions here are vertically
    thin: unit squares scaled by (v1, v2) with v1 >= v2 and bands whose cell
    width already matches the horizontal scale.
    """
    finest = np.inf
    for r in (a, b):
        heights = r.boxes[:, 3] - r.boxes[:, 2]
        finest = min(finest, heights[heights > 0].min(initial=np.inf))
    if not np.isfinite(finest):
        for r in (a, b):
            widths = r.boxes[:, 1] - r.boxes[:, 0]
            finest = min(finest, widths[widths > 0].min(initial=np.inf))
    return min(1.0, finest if np.isfinite(finest) else 1.0) / 8.0


def hausdorff(a, b, resolution: float | None = None) -> HausdorffDistance:
    """Two-sided max-min distance between point clouds at the given pitch.

    The clouds are (pitch * sqrt(2) / 2)-dense in their regions, so the
    returned value is within pitch * sqrt(2) of the true Hausdorff distance.
    """
    ra, rb = _as_region(a), _as_region(b)
    pitch = default_pitch(ra, rb) if resolution is None else float(resolution)
    if not (pitch > 0):
        raise DomainError("resolution must be positive")
    pa, pb = ra.point_cloud(pitch), rb.point_cloud(pitch)
    d_ab = np.max(cKDTree(pb).query(pa, k=1)[0])
    d_ba = np.max(cKDTree(pa).query(pb, k=1)[0])
    return HausdorffDistance(float(max(d_ab, d_ba)), pitch * np.sqrt(2.0), pitch)
