"""Small procedural scenes and camera rigs for experiments and tests."""

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import Camera
from .rasterizer import RasterConfig, render
from .scene import GaussianSet, logit, rgb_to_dc
from .sh import SH_C0, num_coeffs


def orbit_cameras(n, size=64, radius=2.5, fov_x=np.pi / 3, elevation=0.35, target=(0.0, 0.0, 0.0)):
    """``n`` cameras evenly spaced on a ring, alternating above and below."""
    cams = []
    for k in range(n):
        theta = 2.0 * np.pi * k / n
        el = elevation * (1 if k % 2 == 0 else -1)
        eye = radius * np.array([np.sin(theta) * np.cos(el), np.sin(el), -np.cos(theta) * np.cos(el)])
        cams.append(Camera.look_at(eye, target, size, size, fov_x=fov_x))
    return cams


def random_scene(n, rng, max_degree=1, degree=None, extent=0.6, scale_range=(0.08, 0.25),
                 opacity_range=(0.6, 0.95), sh_rest_sigma=0.05):
    """Random anisotropic Gaussians inside a cube of half-width ``extent``."""
    rng = np.random.default_rng(rng)
    degree = max_degree if degree is None else degree
    positions = rng.uniform(-extent, extent, (n, 3))
    log_scales = np.log(rng.uniform(*scale_range, (n, 3)))
    rotations = Rotation.random(n, random_state=rng).as_quat()[:, [3, 0, 1, 2]]
    opacity_logits = logit(rng.uniform(*opacity_range, n))
    nu = num_coeffs(max_degree)
    coeffs = np.zeros((n, nu, 3))
    coeffs[:, 0] = rgb_to_dc(rng.uniform(0.15, 0.85, (n, 3)))
    owned = num_coeffs(degree)
    coeffs[:, 1:owned] = rng.normal(0.0, sh_rest_sigma, (n, owned - 1, 3))
    return GaussianSet(positions, log_scales, rotations, opacity_logits, coeffs,
                       np.full(n, degree), max_degree)


def perturb(gaussians, rng, position_sigma=0.05, color_sigma=0.1):
    """Copy with Gaussian noise on centres (world units) and base colour."""
    rng = np.random.default_rng(rng)
    out = gaussians.copy()
    out.positions += rng.normal(0.0, position_sigma, out.positions.shape)
    out.sh_coeffs[:, 0] += rng.normal(0.0, color_sigma, (len(out), 3)) / SH_C0
    return out


def render_views(gaussians, cameras, raster=None):
    raster = raster or RasterConfig()
    return [render(gaussians, c, raster) for c in cameras]
