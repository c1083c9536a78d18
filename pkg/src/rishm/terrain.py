"""Raster elevation grid, bilinear lookup and Bresenham line-of-sight.

Grids are node-registered: ``elevation[r, c]`` is the altitude of the point
``(x0 + c * cell_size, y0 + r * cell_size)``.  All lengths are in km.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

# grazing-ray tolerance for the occlusion comparison
LOS_EPS = 1e-9


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True, eq=False)
class DemGrid:
    origin: tuple[float, float]
    cell_size: float
    elevation: np.ndarray

    def __post_init__(self):
        elev = np.array(self.elevation, dtype=np.float64)
        if elev.ndim != 2 or elev.shape[0] < 2 or elev.shape[1] < 2:
            raise ValueError(f"elevation must be a 2-D array of at least 2x2, got {elev.shape}")
        if not np.all(np.isfinite(elev)):
            raise ValueError("elevation contains non-finite values")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        elev.setflags(write=False)
        object.__setattr__(self, "elevation", elev)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def rows(self) -> int:
        return self.elevation.shape[0]

    @property
    def cols(self) -> int:
        return self.elevation.shape[1]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the node lattice."""
        x0, y0 = self.origin
        return (x0, y0, x0 + (self.cols - 1) * self.cell_size, y0 + (self.rows - 1) * self.cell_size)

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def __eq__(self, other):
        if not isinstance(other, DemGrid):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.cell_size == other.cell_size
            and np.array_equal(self.elevation, other.elevation)
        )

    __hash__ = None


def elevation_at(grid: DemGrid, x: float, y: float) -> float:
    """Bilinear interpolation of the four nodes surrounding ``(x, y)``."""
    if not grid.contains(x, y):
        raise ValueError(f"point ({x}, {y}) outside grid bounds {grid.bounds}")
    fc = (x - grid.origin[0]) / grid.cell_size
    fr = (y - grid.origin[1]) / grid.cell_size
    c0 = min(int(np.floor(fc)), grid.cols - 2)
    r0 = min(int(np.floor(fr)), grid.rows - 2)
    tx = fc - c0
    ty = fr - r0
    e = grid.elevation
    top = e[r0, c0] * (1.0 - tx) + e[r0, c0 + 1] * tx
    bottom = e[r0 + 1, c0] * (1.0 - tx) + e[r0 + 1, c0 + 1] * tx
    return float(top * (1.0 - ty) + bottom * ty)


def _nearest_node(grid: DemGrid, x: float, y: float) -> tuple[int, int]:
    c = int(np.floor((x - grid.origin[0]) / grid.cell_size + 0.5))
    r = int(np.floor((y - grid.origin[1]) / grid.cell_size + 0.5))
    return min(max(c, 0), grid.cols - 1), min(max(r, 0), grid.rows - 1)


def bresenham(c0: int, r0: int, c1: int, r1: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer nodes on the line (c0, r0) -> (c1, r1), endpoints included.

    Closed form of the midpoint algorithm: along the major axis the minor
    coordinate is ``round_half_up(i * d_minor / d_major)``.
    """
    dc, dr = c1 - c0, r1 - r0
    sc, sr = (1 if dc >= 0 else -1), (1 if dr >= 0 else -1)
    adc, adr = abs(dc), abs(dr)
    if adc == 0 and adr == 0:
        return np.array([c0]), np.array([r0])
    if adc >= adr:
        i = np.arange(adc + 1)
        cs = c0 + sc * i
        rs = r0 + sr * ((2 * i * adr + adc) // (2 * adc))
    else:
        i = np.arange(adr + 1)
        rs = r0 + sr * i
        cs = c0 + sc * ((2 * i * adc + adr) // (2 * adr))
    return cs, rs


def line_of_sight(grid: DemGrid, a: Point3, b: Point3) -> int:
    """1 if the segment a-b clears the terrain at every interior Bresenham node, else 0.

    The endpoints are put in a canonical order first so the answer is exactly
    symmetric in (a, b).
    """
    for p in (a, b):
        if not grid.contains(p.x, p.y):
            raise ValueError(f"endpoint {p} outside grid bounds")
        if p.z < elevation_at(grid, p.x, p.y) - LOS_EPS:
            raise ValueError(f"endpoint {p} lies below the terrain")

    na = _nearest_node(grid, a.x, a.y)
    nb = _nearest_node(grid, b.x, b.y)
    if na == nb:
        return 1
    if (na, tuple(a)) > (nb, tuple(b)):
        a, b = b, a
        na, nb = nb, na

    cs, rs = bresenham(na[0], na[1], nb[0], nb[1])
    cs, rs = cs[1:-1], rs[1:-1]
    if cs.size == 0:
        return 1

    xs = grid.origin[0] + cs * grid.cell_size
    ys = grid.origin[1] + rs * grid.cell_size
    hx, hy = b.x - a.x, b.y - a.y
    t = ((xs - a.x) * hx + (ys - a.y) * hy) / (hx * hx + hy * hy)
    t = np.clip(t, 0.0, 1.0)
    ray = a.z + t * (b.z - a.z)
    terrain = grid.elevation[rs, cs]
    return int(np.all(ray > terrain + LOS_EPS))


def generate_terrain(
    seed: int,
    rows: int = 256,
    cols: int = 256,
    cell_size: float = 50.0 / 255,
    roughness: float = 0.5,
    max_height: float = 1.5,
    origin: tuple[float, float] = (0.0, 0.0),
) -> DemGrid:
    """Diamond-square fractal surface rescaled to ``[0, max_height]``.

    ``roughness`` sets how slowly the displacement amplitude decays between
    refinement levels: 1 keeps it constant, values near 0 halve it per level.
    """
    if rows < 3 or cols < 3:
        raise ValueError("rows and cols must be >= 3")
    if not 0.0 < roughness <= 1.0:
        raise ValueError("roughness must lie in (0, 1]")
    if not max_height > 0:
        raise ValueError("max_height must be positive")

    rng = np.random.default_rng(seed)
    n = 1
    while n + 1 < max(rows, cols):
        n *= 2
    size = n + 1
    h = np.zeros((size, size))
    h[0, 0], h[0, n], h[n, 0], h[n, n] = rng.uniform(-1.0, 1.0, 4)

    decay = 2.0 ** -(1.0 - roughness)
    scale = 1.0
    step = n
    while step > 1:
        half = step // 2
        # diamond: centers of squares
        avg = (h[0:n:step, 0:n:step] + h[0:n:step, step::step]
               + h[step::step, 0:n:step] + h[step::step, step::step]) / 4.0
        h[half:n:step, half:n:step] = avg + rng.uniform(-scale, scale, avg.shape)
        # square: edge midpoints, averaging the available neighbours
        for r0 in (0, half):
            c0 = half if r0 == 0 else 0
            rr, cc = np.meshgrid(np.arange(r0, size, step), np.arange(c0, size, step), indexing="ij")
            total = np.zeros(rr.shape)
            count = np.zeros(rr.shape)
            for dr, dc in ((-half, 0), (half, 0), (0, -half), (0, half)):
                r2, c2 = rr + dr, cc + dc
                ok = (r2 >= 0) & (r2 < size) & (c2 >= 0) & (c2 < size)
                total[ok] += h[r2[ok], c2[ok]]
                count[ok] += 1
            h[rr, cc] = total / count + rng.uniform(-scale, scale, rr.shape)
        scale *= decay
        step = half

    h = h[:rows, :cols]
    lo, hi = h.min(), h.max()
    h = (h - lo) / (hi - lo) * max_height
    return DemGrid(origin=origin, cell_size=cell_size, elevation=np.clip(h, 0.0, max_height))


def read_ascii_grid(path) -> DemGrid:
    """Load an ESRI ASCII grid. Rows in the file run north to south."""
    header = {}
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0][0].isalpha():
            header[parts[0].lower()] = parts[1]
            i += 1
        else:
            break
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        cell = float(header["cellsize"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing header field {exc.args[0]}") from None
    if "xllcorner" in header:
        x0 = float(header["xllcorner"]) + cell / 2
        y0 = float(header["yllcorner"]) + cell / 2
    else:
        x0 = float(header["xllcenter"])
        y0 = float(header["yllcenter"])
    values = np.array(" ".join(lines[i:]).split(), dtype=np.float64)
    if values.size != ncols * nrows:
        raise ValueError(f"{path}: expected {ncols * nrows} values, found {values.size}")
    data = values.reshape(nrows, ncols)[::-1]
    if "nodata_value" in header and np.any(data == float(header["nodata_value"])):
        raise ValueError(f"{path}: grid contains NODATA cells")
    return DemGrid(origin=(x0, y0), cell_size=cell, elevation=data)


def write_ascii_grid(grid: DemGrid, path, nodata: float = -9999.0) -> None:
    half = grid.cell_size / 2
    out = [
        f"ncols {grid.cols}",
        f"nrows {grid.rows}",
        f"xllcorner {grid.origin[0] - half!r}",
        f"yllcorner {grid.origin[1] - half!r}",
        f"cellsize {grid.cell_size!r}",
        f"NODATA_value {nodata!r}",
    ]
    for row in grid.elevation[::-1]:
        out.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(out) + "\n")
