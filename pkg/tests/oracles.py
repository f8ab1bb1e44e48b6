"""Slow, independent reference implementations used as test oracles.

Nothing here calls the vectorised code paths under test; each oracle is
written from the defining formula with plain loops or a third-party routine.
"""

import numpy as np
from scipy.special import sph_harm_y

from splatlab.camera import (
    frustum_cull,
    perspective_jacobian,
    project_covariance,
    project_point,
    world_to_camera,
)
from splatlab.rasterizer import Splat2D, alpha_blend_pixel, sort_by_depth
from splatlab.scene import build_covariance, eval_sh, sigmoid


def knn_mean_brute(points, k):
    """Mean distance to the k nearest other points via a full distance matrix."""
    points = np.asarray(points, dtype=np.float64)
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    return np.sort(d, axis=1)[:, :k].mean(axis=1)


def real_sh_scipy(dirs, max_degree):
    """Real SH from scipy's complex harmonics, splatting sign convention.

    Y_l0 = Re Y_l^0, Y_lm = sqrt(2) Re Y_l^m (m > 0),
    Y_lm = sqrt(2) Im Y_l^|m| (m < 0), Condon-Shortley phase kept.
    """
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    x, y, z = dirs.T
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.arctan2(y, x)
    out = []
    for l in range(max_degree + 1):
        for m in range(-l, l + 1):
            Y = sph_harm_y(l, abs(m), theta, phi)
            if m == 0:
                out.append(Y.real)
            elif m > 0:
                out.append(np.sqrt(2.0) * Y.real)
            else:
                out.append(np.sqrt(2.0) * Y.imag)
    return np.stack(out, axis=-1)


def sh_degree2_hardcoded(d):
    """Band-2 basis in the form used by common splatting renderers."""
    x, y, z = np.asarray(d, dtype=np.float64).T
    c = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
    return np.stack([c[0] * x * y, c[1] * y * z, c[2] * (2 * z * z - x * x - y * y),
                     c[3] * x * z, c[4] * (x * x - y * y)], axis=-1)


def reference_splats(gaussians, cam, h):
    """Screen-space splats built one Gaussian at a time from the public ops."""
    splats = []
    for i in frustum_cull(gaussians, cam, h):
        q = gaussians.positions[i]
        rot = gaussians.rotations[i] / np.linalg.norm(gaussians.rotations[i])
        cov = build_covariance(gaussians.log_scales[i], rot)
        qc, cov_c = world_to_camera(q, cov, cam)
        J = perspective_jacobian(qc, cam)
        cov2d = project_covariance(cov_c, J)
        view = q - cam.center
        color = eval_sh(gaussians.bank(i), view / np.linalg.norm(view))
        alpha = min(float(sigmoid(gaussians.opacity_logits[i])), 0.999)
        splats.append(Splat2D(project_point(qc, cam), cov2d, float(qc[2]), color, alpha, int(i)))
    return [splats[k] for k in sort_by_depth(splats)]


def reference_render(gaussians, cam, cfg):
    """Per-pixel loop over depth-sorted splats."""
    splats = reference_splats(gaussians, cam, cfg.h)
    img = np.zeros((cam.height, cam.width, 3))
    for i in range(cam.height):
        for j in range(cam.width):
            img[i, j] = alpha_blend_pixel(splats, np.array([j, i], dtype=np.float64), cfg)
    return img


def ssim_loops(x, y, kernel, stride, c1, c2):
    """Box-window SSIM written window by window with population statistics."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    H, W, C = x.shape
    vals = []
    for c in range(C):
        for i in range(0, H - kernel + 1, stride):
            for j in range(0, W - kernel + 1, stride):
                a = x[i:i + kernel, j:j + kernel, c].ravel()
                b = y[i:i + kernel, j:j + kernel, c].ravel()
                ma, mb = a.mean(), b.mean()
                va, vb = a.var(), b.var()
                cov = ((a - ma) * (b - mb)).mean()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2)
                            / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def central_difference(f, x, rel_step=1e-3):
    """Central finite-difference gradient of scalar ``f`` at array ``x``.

    The step for each entry is ``rel_step * max(|x_i|, 1)``.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        h = rel_step * max(abs(x[idx]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def scene_field_fd(loss, gaussians, field, rel_step=1e-3):
    """Finite-difference gradient of ``loss(scene)`` w.r.t. one scene field."""
    def f(values):
        g = gaussians.copy()
        setattr(g, field, values)
        return loss(g)
    return central_difference(f, getattr(gaussians, field), rel_step)

