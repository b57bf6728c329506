"""Omnidirectional wrench-feasible workspace over the treadmill."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ForceCommand, Geometry, allocate_tensions, _check_participant
from .errors import DegenerateGeometry, Infeasible

DEFAULT_DIRECTIONS = 36
DEFAULT_RESOLUTION = 0.05


def direction_table(n_directions: int) -> tuple[np.ndarray, np.ndarray]:
    beta = np.radians(np.arange(n_directions) * (360.0 / n_directions))
    return np.cos(beta), np.sin(beta)


def is_omnidirectional_feasible(pos, magnitude: float, n_directions: int = DEFAULT_DIRECTIONS,
                                geometry: Geometry | None = None) -> bool:
    """True iff every one of ``n_directions`` equally spaced forces is allocatable.

    A zero magnitude requests no perturbation at all, so every treadmill
    position qualifies; the tethers simply sit at nominal tension.
    """
    geometry = geometry or Geometry()
    if n_directions < 4:
        raise ValueError("n_directions must be >= 4")
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    _check_participant(geometry, pos)
    if magnitude == 0:
        return True
    for k in range(n_directions):
        try:
            allocate_tensions(ForceCommand(magnitude, k * 360.0 / n_directions), geometry, pos)
        except (Infeasible, DegenerateGeometry):
            return False
    return True


def grid_centres(geometry: Geometry, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres of a grid centred on the origin, mirror-exact about both axes."""
    nx = int(math.floor(2 * geometry.treadmill_half_width / resolution + 1e-9))
    ny = int(math.floor(2 * geometry.treadmill_half_length / resolution + 1e-9))
    xs = (np.arange(nx) - (nx - 1) / 2.0) * resolution
    ys = (np.arange(ny) - (ny - 1) / 2.0) * resolution
    return xs, ys


@dataclass
class WorkspaceMap:
    xs: np.ndarray
    ys: np.ndarray
    feasible: np.ndarray  # (len(xs), len(ys)) bool
    resolution: float
    force_magnitude: float
    n_directions: int

    @property
    def area(self) -> float:
        return float(self.feasible.sum()) * self.resolution**2

    @property
    def area_rounded(self) -> float:
        return round(self.area, 2)

    def cells(self):
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                yield float(x), float(y), bool(self.feasible[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x_m,y_m,feasible\n")
        for x, y, ok in self.cells():
            buf.write(f"{x:.4f},{y:.4f},{int(ok)}\n")
        return buf.getvalue()

    def summary(self) -> str:
        return (f"force_n={self.force_magnitude:g} resolution_m={self.resolution:g} "
                f"directions={self.n_directions} cells={int(self.feasible.sum())}/{self.feasible.size} "
                f"area_m2={self.area:.2f}")


def workspace_map(magnitude: float, resolution: float = DEFAULT_RESOLUTION,
                  n_directions: int = DEFAULT_DIRECTIONS, geometry: Geometry | None = None) -> WorkspaceMap:
    geometry = geometry or Geometry()
    if not 0 < resolution <= 0.5:
        raise ValueError("resolution must be in (0, 0.5] m")
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    if n_directions < 4:
        raise ValueError("n_directions must be >= 4")
    xs, ys = grid_centres(geometry, resolution)
    if magnitude == 0:
        feasible = np.ones((xs.size, ys.size), dtype=bool)
    else:
        cos_b, sin_b = direction_table(n_directions)
        ax, ay = geometry.anchor_arrays()
        feasible = kernels.workspace_sweep(
            xs, ys, cos_b, sin_b, float(magnitude), ax, ay,
            geometry.tension_min, geometry.tension_max, geometry.nominal_tension,
        )
    return WorkspaceMap(xs, ys, np.asarray(feasible, dtype=bool), resolution, float(magnitude), n_directions)


def render_svg(wmap: WorkspaceMap, geometry: Geometry | None = None, scale: float = 80.0) -> str:
    """Top-down SVG: treadmill outline, feasible cells, anchors and tethers."""
    geometry = geometry or Geometry()
    pts = [p for _, p in geometry.anchors_named()]
    xmin = min(-geometry.treadmill_half_width, *(p[0] for p in pts)) - 0.3
    xmax = max(geometry.treadmill_half_width, *(p[0] for p in pts)) + 0.3
    ymin = min(-geometry.treadmill_half_length, *(p[1] for p in pts)) - 0.3
    ymax = max(geometry.treadmill_half_length, *(p[1] for p in pts)) + 0.3
    w, h = (xmax - xmin) * scale, (ymax - ymin) * scale

    def sx(x):
        return (x - xmin) * scale

    def sy(y):
        return (ymax - y) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.1f} {h:.1f}">',
           f'<rect x="0" y="0" width="{w:.1f}" height="{h:.1f}" fill="white"/>']
    hw, hl = geometry.treadmill_half_width, geometry.treadmill_half_length
    out.append(f'<rect x="{sx(-hw):.1f}" y="{sy(hl):.1f}" width="{2 * hw * scale:.1f}" '
               f'height="{2 * hl * scale:.1f}" fill="#eeeeee" stroke="black" stroke-width="2"/>')
    r = max(1.0, 0.35 * wmap.resolution * scale)
    for x, y, ok in wmap.cells():
        if ok:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="{r:.1f}" fill="#1f5fbf"/>')
    for name, (x, y) in geometry.anchors_named():
        out.append(f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(x):.1f}" y2="{sy(y):.1f}" '
                   f'stroke="#888888" stroke-dasharray="6,4"/>')
        out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="8" fill="#c0392b"/>')
        out.append(f'<text x="{sx(x) + 10:.1f}" y="{sy(y) - 10:.1f}" font-size="14">{name}</text>')
    out.append(f'<text x="10" y="20" font-size="14">{wmap.force_magnitude:g} N: '
               f'{wmap.area:.2f} m^2</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
