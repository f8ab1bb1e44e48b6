"""Depth-sorted alpha compositing of projected Gaussians and its gradient.

The renderer evaluates every visible splat at every pixel centre; there is no
tile binning.  The forward pass keeps the intermediates the backward pass
needs, and ``render_backward`` chains the image gradient back through
blending, the 2D Gaussian, the projection, SH colour and the parameter
activations.
"""

from dataclasses import dataclass

import numpy as np

from .camera import cull_mask, jacobians, project_means
from .errors import ShapeMismatchError, SingularCovarianceError
from .scene import GaussianSet, quaternion_to_matrix, sigmoid
from .sh import eval_basis, eval_basis_grad


@dataclass
class RasterConfig:
    h: float = 0.3
    transmittance_floor: float = 1e-4
    background: tuple = (0.0, 0.0, 0.0)
    max_alpha: float = 0.999

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("dilation h must be non-negative")
        if not 0.0 < self.transmittance_floor < 1.0:
            raise ValueError("transmittance_floor must lie in (0, 1)")
        self.background = tuple(float(v) for v in self.background)


@dataclass
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    alpha: float
    source_index: int = -1


@dataclass
class GradientSet:
    """Loss partials, one array per optimisable ``GaussianSet`` field."""

    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray

    @classmethod
    def zeros_like(cls, gaussians):
        return cls(*(np.zeros_like(getattr(gaussians, f)) for f in GaussianSet.PARAM_FIELDS))

    def items(self):
        return [(f, getattr(self, f)) for f in GaussianSet.PARAM_FIELDS]

    def __iadd__(self, other):
        for f, g in other.items():
            getattr(self, f).__iadd__(g)
        return self

    def scaled(self, k):
        return GradientSet(*(k * g for _, g in self.items()))

    def all_finite(self):
        return all(np.all(np.isfinite(g)) for _, g in self.items())


def gaussian_weight_2d(x, mean, cov2d, h):
    """Dilated 2D Gaussian falloff ``exp(-0.5 d^T (cov + hI)^-1 d)``."""
    A = np.asarray(cov2d, dtype=np.float64) + h * np.eye(2)
    if abs(np.linalg.det(A)) <= 1e-300:
        raise SingularCovarianceError("dilated 2D covariance is singular")
    d = np.asarray(x, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    return float(np.exp(-0.5 * d @ np.linalg.solve(A, d)))


def sort_by_depth(splats):
    """Stable ascending-depth permutation."""
    depths = np.array([s.depth for s in splats], dtype=np.float64)
    return np.argsort(depths, kind="stable")


def blend_weights(splats, x, cfg):
    """Per-splat blending weights and residual transmittance at pixel ``x``.

    ``splats`` must already be depth sorted.  Weights of splats skipped by
    early termination are zero.
    """
    weights = np.zeros(len(splats))
    T = 1.0
    for n, s in enumerate(splats):
        w = s.alpha * gaussian_weight_2d(x, s.mean2d, s.cov2d, cfg.h)
        weights[n] = w * T
        T *= 1.0 - w
        if T < cfg.transmittance_floor:
            break
    return weights, T


def alpha_blend_pixel(splats, x, cfg):
    """Front-to-back composite of depth-sorted splats at one pixel."""
    weights, T = blend_weights(splats, x, cfg)
    out = T * np.asarray(cfg.background, dtype=np.float64)
    for w, s in zip(weights, splats):
        out = out + w * np.asarray(s.color, dtype=np.float64)
    return out


class _Projection:
    """Screen-space quantities for the visible subset, depth sorted."""

    def __init__(self, gaussians, cam, cfg):
        self.n_total = len(gaussians)
        self.M = gaussians.max_degree
        self.cam = cam
        self.cfg = cfg
        N = len(gaussians)
        if N == 0:
            self.idx = np.zeros(0, dtype=np.int64)
            return
        qc, means2d = project_means(gaussians.positions, cam)
        U = quaternion_to_matrix(gaussians.rotations)
        scales = np.exp(gaussians.log_scales)
        Mmat = U * scales[:, None, :]
        cov3 = Mmat @ np.swapaxes(Mmat, -1, -2)
        cov_cam = cam.R @ cov3 @ cam.R.T
        ok = qc[:, 2] > cam.near
        cov2d = np.zeros((N, 2, 2))
        J = np.zeros((N, 2, 3))
        if np.any(ok):
            J[ok] = jacobians(qc[ok], cam)
            cov2d[ok] = J[ok] @ cov_cam[ok] @ np.swapaxes(J[ok], -1, -2)
        vis = cull_mask(means2d, cov2d, qc[:, 2], cam, cfg.h)
        A = cov2d + cfg.h * np.eye(2)
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] ** 2
        vis &= det > 1e-300
        idx = np.flatnonzero(vis)
        order = np.argsort(qc[idx, 2], kind="stable")
        idx = idx[order]
        self.idx = idx

        self.qc = qc[idx]
        self.means2d = means2d[idx]
        self.U = U[idx]
        self.scales = scales[idx]
        self.Mmat = Mmat[idx]
        self.cov_cam = cov_cam[idx]
        self.J = J[idx]
        self.cov2d = cov2d[idx]
        A = A[idx]
        det = det[idx]
        self.conic = np.stack(
            [A[:, 1, 1] / det, -A[:, 0, 1] / det, A[:, 0, 0] / det], axis=-1
        )

        raw_opacity = sigmoid(gaussians.opacity_logits[idx])
        self.raw_opacity = raw_opacity
        self.alpha = np.minimum(raw_opacity, cfg.max_alpha)

        view = gaussians.positions[idx] - cam.center
        dist = np.linalg.norm(view, axis=-1, keepdims=True)
        self.view_dist = dist
        self.dirs = view / dist
        self.rotations = gaussians.rotations[idx]
        self.mask = gaussians.coeff_mask()[idx]
        self.Y = eval_basis(self.dirs, self.M) * self.mask
        self.coeffs = gaussians.sh_coeffs[idx]
        raw = 0.5 + np.einsum("nk,nkc->nc", self.Y, self.coeffs)
        self.color_raw = raw
        self.colors = np.clip(raw, 0.0, 1.0)
        self.depths = self.qc[:, 2]

    def splats(self):
        return [
            Splat2D(self.means2d[i].copy(), self.cov2d[i].copy(), float(self.depths[i]),
                    self.colors[i].copy(), float(self.alpha[i]), int(self.idx[i]))
            for i in range(len(self.idx))
        ]


class _Raster:
    """Forward pass over all pixels with the intermediates for backward."""

    def __init__(self, proj):
        cam, cfg = proj.cam, proj.cfg
        self.proj = proj
        H, W = cam.height, cam.width
        self.shape = (H, W, 3)
        bg = np.asarray(cfg.background, dtype=np.float64)
        self.bg = bg
        n = len(proj.idx)
        if n == 0:
            self.image = np.broadcast_to(bg, self.shape).copy()
            return
        ys, xs = np.mgrid[0:H, 0:W]
        px = xs.reshape(-1).astype(np.float64)
        py = ys.reshape(-1).astype(np.float64)
        dx = px[None, :] - proj.means2d[:, 0:1]
        dy = py[None, :] - proj.means2d[:, 1:2]
        qa, qb, qc = (proj.conic[:, k : k + 1] for k in range(3))
        power = -0.5 * (qa * dx * dx + 2.0 * qb * dx * dy + qc * dy * dy)
        G = np.exp(power)
        w = proj.alpha[:, None] * G
        T_before = np.cumprod(np.vstack([np.ones((1, w.shape[1])), 1.0 - w[:-1]]), axis=0)
        included = T_before >= cfg.transmittance_floor
        w_eff = np.where(included, w, 0.0)
        T_eff = np.cumprod(np.vstack([np.ones((1, w.shape[1])), 1.0 - w_eff]), axis=0)
        T_before = T_eff[:-1]
        self.T_final = T_eff[-1]
        self.weights = w_eff * T_before
        contrib = self.weights[:, :, None] * proj.colors[:, None, :]
        img = contrib.sum(axis=0) + self.T_final[:, None] * bg
        self.image = img.reshape(self.shape)

        self.dx, self.dy, self.G, self.w = dx, dy, G, w
        self.included = included
        self.T_before = T_before
        self.contrib = contrib

    def backward(self, grad_image):
        proj = self.proj
        cam = proj.cam
        N = proj.n_total
        nu = (proj.M + 1) ** 2
        grads = GradientSet(
            np.zeros((N, 3)), np.zeros((N, 3)), np.zeros((N, 4)), np.zeros(N), np.zeros((N, nu, 3))
        )
        n = len(proj.idx)
        if n == 0:
            return grads
        g = np.asarray(grad_image, dtype=np.float64).reshape(-1, 3)

        # blending
        g_color = np.einsum("np,pc->nc", self.weights, g)
        suffix = np.cumsum(self.contrib[::-1], axis=0)[::-1] - self.contrib
        suffix = suffix + self.T_final[None, :, None] * self.bg
        g_w = np.einsum("pc,nc->np", g, proj.colors) * self.T_before
        g_w -= np.einsum("pc,npc->np", g, suffix) / (1.0 - self.w)
        g_w = np.where(self.included, g_w, 0.0)

        g_alpha = np.einsum("np,np->n", g_w, self.G)
        g_power = g_w * proj.alpha[:, None] * self.G

        dx, dy = self.dx, self.dy
        qa, qb, qc = (proj.conic[:, k : k + 1] for k in range(3))
        g_mean = np.stack(
            [
                np.sum(g_power * (qa * dx + qb * dy), axis=1),
                np.sum(g_power * (qb * dx + qc * dy), axis=1),
            ],
            axis=-1,
        )
        g_qa = -0.5 * np.sum(g_power * dx * dx, axis=1)
        g_qb = -np.sum(g_power * dx * dy, axis=1)
        g_qc = -0.5 * np.sum(g_power * dy * dy, axis=1)
        Q = np.stack(
            [np.stack([qa[:, 0], qb[:, 0]], -1), np.stack([qb[:, 0], qc[:, 0]], -1)], -2
        )
        GQ = np.stack(
            [np.stack([g_qa, 0.5 * g_qb], -1), np.stack([0.5 * g_qb, g_qc], -1)], -2
        )
        g_cov2d = -Q @ GQ @ Q

        # projection
        J = proj.J
        Jt = np.swapaxes(J, -1, -2)
        g_cov_cam = Jt @ g_cov2d @ J
        g_J = 2.0 * g_cov2d @ J @ proj.cov_cam
        x, y, z = proj.qc[:, 0], proj.qc[:, 1], proj.qc[:, 2]
        fx, fy = cam.fx, cam.fy
        g_qcam = np.einsum("nij,ni->nj", J, g_mean)
        g_qcam[:, 0] += g_J[:, 0, 2] * (-fx / z**2)
        g_qcam[:, 1] += g_J[:, 1, 2] * (-fy / z**2)
        g_qcam[:, 2] += (
            g_J[:, 0, 0] * (-fx / z**2)
            + g_J[:, 0, 2] * (2.0 * fx * x / z**3)
            + g_J[:, 1, 1] * (-fy / z**2)
            + g_J[:, 1, 2] * (2.0 * fy * y / z**3)
        )
        g_pos = g_qcam @ cam.R
        g_cov3 = cam.R.T @ g_cov_cam @ cam.R

        # covariance parameterisation
        g_M = 2.0 * g_cov3 @ proj.Mmat
        g_scale = np.einsum("nrc,nrc->nc", g_M, proj.U)
        g_log_scale = g_scale * proj.scales
        g_U = g_M * proj.scales[:, None, :]
        g_rot = _quaternion_backward(proj.rotations, g_U)

        # colour
        unclamped = (proj.color_raw > 0.0) & (proj.color_raw < 1.0)
        g_raw = g_color * unclamped
        g_coeffs = proj.Y[:, :, None] * g_raw[:, None, :]
        dY = eval_basis_grad(proj.dirs, proj.M)
        g_Y = np.einsum("nkc,nc->nk", proj.coeffs, g_raw) * proj.mask
        g_dir = np.einsum("nk,nkj->nj", g_Y, dY)
        radial = np.sum(g_dir * proj.dirs, axis=-1, keepdims=True)
        g_pos += (g_dir - radial * proj.dirs) / proj.view_dist

        # opacity activation
        sig = proj.raw_opacity
        g_logit = g_alpha * np.where(sig < proj.cfg.max_alpha, sig * (1.0 - sig), 0.0)

        idx = proj.idx
        grads.positions[idx] = g_pos
        grads.log_scales[idx] = g_log_scale
        grads.rotations[idx] = g_rot
        grads.opacity_logits[idx] = g_logit
        grads.sh_coeffs[idx] = g_coeffs
        return grads


def _quaternion_backward(q, g_U):
    """Gradient w.r.t. raw quaternions given the gradient of U(q / |q|)."""
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    qh = q / norm
    w, x, y, z = qh.T
    zero = np.zeros_like(w)
    # dU[r, c] / d(w, x, y, z)
    dU = np.stack(
        [
            np.stack([np.stack([zero, zero, -4 * y, -4 * z], -1),
                      np.stack([-2 * z, 2 * y, 2 * x, -2 * w], -1),
                      np.stack([2 * y, 2 * z, 2 * w, 2 * x], -1)], -2),
            np.stack([np.stack([2 * z, 2 * y, 2 * x, 2 * w], -1),
                      np.stack([zero, -4 * x, zero, -4 * z], -1),
                      np.stack([-2 * x, -2 * w, 2 * z, 2 * y], -1)], -2),
            np.stack([np.stack([-2 * y, 2 * z, -2 * w, 2 * x], -1),
                      np.stack([2 * x, 2 * w, 2 * z, 2 * y], -1),
                      np.stack([zero, -4 * x, -4 * y, zero], -1)], -2),
        ],
        -3,
    )
    g_qh = np.einsum("nrc,nrck->nk", g_U, dU)
    radial = np.sum(g_qh * qh, axis=-1, keepdims=True)
    return (g_qh - radial * qh) / norm


def project_splats(gaussians, cam, cfg=None):
    """Visible splats in depth order, as plain records."""
    return _Projection(gaussians, cam, cfg or RasterConfig()).splats()


def render(gaussians, cam, cfg=None):
    """Render an (H, W, 3) image in [0, 1]."""
    return _Raster(_Projection(gaussians, cam, cfg or RasterConfig())).image


def render_with_state(gaussians, cam, cfg=None):
    """Image plus the forward state; ``state.backward(dL/dimage)`` gives a GradientSet."""
    raster = _Raster(_Projection(gaussians, cam, cfg or RasterConfig()))
    return raster.image, raster


def render_backward(gaussians, cam, cfg, grad_image):
    """Gradient of a scalar loss w.r.t. every Gaussian parameter.

    ``grad_image`` is dL/d(image) with the render's (H, W, 3) shape.
    """
    cfg = cfg or RasterConfig()
    grad_image = np.asarray(grad_image, dtype=np.float64)
    if grad_image.shape != (cam.height, cam.width, 3):
        raise ShapeMismatchError(
            f"gradient shape {grad_image.shape} != {(cam.height, cam.width, 3)}"
        )
    return _Raster(_Projection(gaussians, cam, cfg)).backward(grad_image)
