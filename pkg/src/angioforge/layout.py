"""Field-of-view geometry of an ultra-wide scan and the VEGF suppression field.

Coordinates are in millimetres over the square domain [0, extent]^2.
Grid cell (row i, col j) has its centre at ((j + 0.5) * cell, (i + 0.5) * cell),
i.e. x runs along columns and y along rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .errors import ConfigError, GridMismatch


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_size_mm: float


@dataclass
class ScalarField2D:
    """Regular grid of real values (oxygen concentration, VEGF, multipliers)."""

    values: np.ndarray  # (rows, cols) float64
    cell_size_mm: float

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape

    def spec(self) -> GridSpec:
        return GridSpec(self.values.shape[0], self.values.shape[1], self.cell_size_mm)

    def sample(self, pts: np.ndarray) -> np.ndarray:
        """Bilinear sample at (x, y) points in mm; zero outside the grid."""
        return sample_bilinear(self.values, pts, self.cell_size_mm)


def sample_bilinear(values: np.ndarray, pts: np.ndarray, cell: float) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    rows, cols = values.shape
    gx = pts[:, 0] / cell - 0.5
    gy = pts[:, 1] / cell - 0.5
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    fx = gx - x0
    fy = gy - y0
    out = np.zeros(len(pts))
    # corner contributions, skipping anything outside the grid
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            w = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            ok = (xi >= 0) & (xi < cols) & (yi >= 0) & (yi < rows)
            if np.any(ok):
                out[ok] += w[ok] * values[yi[ok], xi[ok]]
    return out


@dataclass(frozen=True)
class RetinaLayout:
    """FOV, foveal avascular zone, and optic disc of one simulated scan."""

    fov_extent_mm: float
    fov_shape: str
    faz_center: tuple[float, float]
    faz_radius_mm: float
    disc_center: tuple[float, float]
    disc_radius_mm: float
    ramp_mm: float = 0.25
    fov_corner_radius_mm: float = 1.5

    def inner_distance(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance to the FOV boundary; positive inside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        e = self.fov_extent_mm
        cx = cy = e / 2.0
        if self.fov_shape == "disc":
            return e / 2.0 - np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        # square with rounded corners: standard rounded-rectangle signed distance
        rc = min(self.fov_corner_radius_mm, e / 2.0)
        h = e / 2.0 - rc
        qx = np.abs(pts[:, 0] - cx) - h
        qy = np.abs(pts[:, 1] - cy) - h
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return rc - (outside + inside)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return self.inner_distance(pts) > 0.0


def build_layout(config: SimConfig) -> RetinaLayout:
    """Place the FAZ at the domain centre and the optic disc nasally of it."""
    e = config.fov_extent_mm
    if e <= 0 or config.faz_radius_mm <= 0 or config.disc_radius_mm <= 0:
        raise ConfigError("fov extent and radii must be positive")
    if config.faz_radius_mm >= e / 4:
        raise ConfigError("faz_radius_mm must be < fov_extent_mm / 4")
    center = (e / 2.0, e / 2.0)
    disc_center = (e / 2.0 + config.disc_offset_fraction * e, e / 2.0)
    layout = RetinaLayout(
        fov_extent_mm=e,
        fov_shape=config.fov_shape,
        faz_center=center,
        faz_radius_mm=config.faz_radius_mm,
        disc_center=disc_center,
        disc_radius_mm=config.disc_radius_mm,
        ramp_mm=config.ramp_mm,
        fov_corner_radius_mm=config.fov_corner_radius_mm,
    )
    inner = float(layout.inner_distance(np.array([disc_center]))[0])
    if inner < config.disc_radius_mm:
        raise ConfigError("optic disc does not fit inside the field of view")
    gap = np.hypot(disc_center[0] - center[0], disc_center[1] - center[1])
    if gap <= config.disc_radius_mm + config.faz_radius_mm:
        raise ConfigError("optic disc overlaps the foveal avascular zone")
    return layout


def grid_for(layout: RetinaLayout, resolution: int) -> GridSpec:
    if resolution < 1:
        raise ConfigError("grid resolution must be >= 1")
    return GridSpec(resolution, resolution, layout.fov_extent_mm / resolution)


def cell_centers(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Meshgrids (X, Y) of cell-centre coordinates in mm, shape (rows, cols)."""
    xs = (np.arange(grid.cols) + 0.5) * grid.cell_size_mm
    ys = (np.arange(grid.rows) + 0.5) * grid.cell_size_mm
    return np.meshgrid(xs, ys)


def _check_grid_covers(layout: RetinaLayout, grid: GridSpec) -> None:
    eps = 1e-9
    if grid.rows * grid.cell_size_mm + eps < layout.fov_extent_mm:
        raise GridMismatch("grid does not cover the field of view (rows)")
    if grid.cols * grid.cell_size_mm + eps < layout.fov_extent_mm:
        raise GridMismatch("grid does not cover the field of view (cols)")


def vegf_suppression(layout: RetinaLayout, grid: GridSpec) -> ScalarField2D:
    """Multiplier in [0, 1]: exactly 0 inside the FAZ and outside the FOV,
    1 in the interior, with a linear ramp of width ``layout.ramp_mm``."""
    _check_grid_covers(layout, grid)
    X, Y = cell_centers(grid)
    ramp = layout.ramp_mm
    d_faz = np.hypot(X - layout.faz_center[0], Y - layout.faz_center[1])
    if ramp > 0:
        m_faz = np.clip((d_faz - layout.faz_radius_mm) / ramp, 0.0, 1.0)
    else:
        m_faz = (d_faz > layout.faz_radius_mm).astype(float)
    inner = layout.inner_distance(np.column_stack([X.ravel(), Y.ravel()]))
    inner = inner.reshape(X.shape)
    if ramp > 0:
        m_fov = np.clip(inner / ramp, 0.0, 1.0)
    else:
        m_fov = (inner > 0).astype(float)
    return ScalarField2D(np.minimum(m_faz, m_fov), grid.cell_size_mm)
