"""Target point clouds for the 2D experiments."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

UNIT_BOX = ((0.0, 1.0), (0.0, 1.0))

CIRCLE_CENTER = (0.3, 0.3)
CIRCLE_RADIUS = 0.25
SQUARE_CENTER = (0.5, 0.5)
SQUARE_SIDE = 0.5


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    domain: tuple = UNIT_BOX

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        (x0, x1), (y0, y1) = self.domain
        if len(pts) and (pts[:, 0].min() < x0 or pts[:, 0].max() > x1
                         or pts[:, 1].min() < y0 or pts[:, 1].max() > y1):
            raise GeometryError("points fall outside the cloud's domain")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            w.writerows((f"{x:.17g}", f"{y:.17g}") for x, y in self.points)

    @classmethod
    def from_csv(cls, path, domain=None) -> "PointCloud":
        pts = read_points_csv(path)
        if domain is None:
            return cls(pts, _bounding(pts))
        return cls(pts, domain)


def _bounding(pts):
    if not len(pts):
        return UNIT_BOX
    return ((float(min(0.0, pts[:, 0].min())), float(max(1.0, pts[:, 0].max()))),
            (float(min(0.0, pts[:, 1].min())), float(max(1.0, pts[:, 1].max()))))


def read_points_csv(path) -> np.ndarray:
    """Read an ``x,y`` CSV; raises ValueError naming the bad line."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["x", "y"]:
            raise ValueError(f"{path}: line 1: expected header 'x,y'")
        for lineno, row in enumerate(reader, start=2):
            try:
                if len(row) != 2:
                    raise ValueError(f"expected 2 fields, got {len(row)}")
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, 2)


def in_disk(points, center, radius):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return (p[:, 0] - center[0]) ** 2 + (p[:, 1] - center[1]) ** 2 <= radius ** 2


def in_square(points, center, side):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    h = side / 2
    return (np.abs(p[:, 0] - center[0]) <= h) & (np.abs(p[:, 1] - center[1]) <= h)


def biased_circle(n, rng, center=CIRCLE_CENTER, radius=CIRCLE_RADIUS) -> PointCloud:
    """``n`` points uniform on a disk, by rejection from its bounding box.

    The disk predicate is evaluated on the stored coordinates, so containment
    holds exactly.
    """
    cx, cy = center
    if radius <= 0 or cx - radius < 0 or cx + radius > 1 or cy - radius < 0 or cy + radius > 1:
        raise GeometryError(f"disk at {center} with radius {radius} leaves the unit box")
    out = np.empty((0, 2))
    while len(out) < n:
        need = n - len(out)
        cand = rng.uniform([cx - radius, cy - radius], [cx + radius, cy + radius],
                           size=(2 * need + 8, 2))
        out = np.vstack([out, cand[in_disk(cand, center, radius)][:need]])
    return PointCloud(out)


def central_square(n, rng, center=SQUARE_CENTER, side=SQUARE_SIDE) -> PointCloud:
    cx, cy = center
    h = side / 2
    if side <= 0 or cx - h < 0 or cx + h > 1 or cy - h < 0 or cy + h > 1:
        raise GeometryError(f"square at {center} with side {side} leaves the unit box")
    return PointCloud(rng.uniform([cx - h, cy - h], [cx + h, cy + h], size=(n, 2)))
