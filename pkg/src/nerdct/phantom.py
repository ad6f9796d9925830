"""Analytic 3D head phantom built from additive ellipsoids."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Ellipsoid:
    """Additive intensity inside an axis-scaled, z-rotated ellipsoid."""

    intensity: float
    center: tuple          # (x0, y0, z0) in [-1, 1] coordinates
    semi_axes: tuple       # (a, b, c) along x, y, z before rotation
    angle_deg: float = 0.0  # rotation of the (a, b) axes about z


# The standard 10-ellipsoid head phantom (intensity, center, semi-axes,
# z-rotation).  Values in [-1, 1] coordinates; summing intensities gives
# tissue levels 0.0 / 0.1 / 0.2 / 0.3 inside a shell of 1.0.
SHEPP_LOGAN_ELLIPSOIDS = (
    Ellipsoid(1.0, (0.0, 0.0, 0.0), (0.69, 0.92, 0.81), 0.0),
    Ellipsoid(-0.8, (0.0, -0.0184, 0.0), (0.6624, 0.874, 0.78), 0.0),
    Ellipsoid(-0.2, (0.22, 0.0, 0.0), (0.11, 0.31, 0.22), -18.0),
    Ellipsoid(-0.2, (-0.22, 0.0, 0.0), (0.16, 0.41, 0.28), 18.0),
    Ellipsoid(0.1, (0.0, 0.35, -0.15), (0.21, 0.25, 0.41), 0.0),
    Ellipsoid(0.1, (0.0, 0.1, 0.25), (0.046, 0.046, 0.05), 0.0),
    Ellipsoid(0.1, (0.0, -0.1, 0.25), (0.046, 0.046, 0.05), 0.0),
    Ellipsoid(0.1, (-0.08, -0.605, 0.0), (0.046, 0.023, 0.05), 0.0),
    Ellipsoid(0.1, (0.0, -0.606, 0.0), (0.023, 0.023, 0.2), 0.0),
    Ellipsoid(0.1, (0.06, -0.605, 0.0), (0.023, 0.046, 0.2), 0.0),
)


def shepp_logan_3d(nx, ny, nz, ellipsoids=None):
    """Evaluate the phantom at voxel centers; returns (nz, ny, nx) in [0, 1].

    Voxel centers sit on linspace(-1, 1, n) per axis, so the outer shell is
    fully contained and corner voxels are empty.
    """
    for name, n in (("nx", nx), ("ny", ny), ("nz", nz)):
        if n < 8:
            raise ValueError(f"{name} must be >= 8, got {n}")
    if ellipsoids is None:
        ellipsoids = SHEPP_LOGAN_ELLIPSOIDS
    zs = np.linspace(-1.0, 1.0, nz)
    ys = np.linspace(-1.0, 1.0, ny)
    xs = np.linspace(-1.0, 1.0, nx)
    grid_z, grid_y, grid_x = np.meshgrid(zs, ys, xs, indexing="ij")
    vol = np.zeros((nz, ny, nx))
    for e in ellipsoids:
        phi = np.deg2rad(e.angle_deg)
        dx = grid_x - e.center[0]
        dy = grid_y - e.center[1]
        dz = grid_z - e.center[2]
        rot_x = dx * np.cos(phi) + dy * np.sin(phi)
        rot_y = -dx * np.sin(phi) + dy * np.cos(phi)
        a, b, c = e.semi_axes
        inside = (rot_x / a) ** 2 + (rot_y / b) ** 2 + (dz / c) ** 2 <= 1.0
        vol[inside] += e.intensity
    return np.clip(vol, 0.0, 1.0)
