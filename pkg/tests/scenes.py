"""Shared fixtures: point clouds with known neighbour spacing and on-disk datasets."""

import numpy as np

from splatlab.io import save_cameras, save_image, save_ply
from splatlab.scene import PointCloud
from splatlab.synthetic import orbit_cameras, render_views


def grid_cluster(spacing, origin, n=3):
    axis = np.arange(n) * spacing
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    return pts + np.asarray(origin, dtype=np.float64)


def tiered_cloud(rng, spacings=(1.0, 2.0, 3.0), counts=(5, 1, 1)):
    """Well separated 3x3x3 grids; every point's 3-NN mean equals its grid spacing."""
    pts = []
    for s, c in zip(spacings, counts):
        for _ in range(c):
            pts.append(grid_cluster(s, (100.0 * (len(pts) + 1), 0.0, 0.0)))
    pts = np.concatenate(pts)
    return PointCloud(pts, rng.uniform(0.05, 0.95, pts.shape))


def write_dataset(root, gaussians, n_views=3, size=16):
    """Render ``gaussians`` from an orbit and write PNGs plus a camera JSON under ``root``."""
    cams = orbit_cameras(n_views, size=size)
    names = []
    for k, img in enumerate(render_views(gaussians, cams)):
        names.append(f"views/{k:03d}.png")
        (root / "views").mkdir(parents=True, exist_ok=True)
        save_image(root / names[-1], img)
    save_cameras(root / "cameras.json", cams, names)
    return root / "cameras.json"


def write_cloud(path, rng, n=40, extent=0.5):
    save_ply(path, PointCloud(rng.uniform(-extent, extent, (n, 3)), rng.uniform(size=(n, 3))))
    return path
