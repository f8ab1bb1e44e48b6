"""Pinhole cameras and projection of 3D Gaussians to screen-space splats.

Conventions: ``R`` and ``t`` map world to camera (``q' = R q + t``), the
camera looks down +z, image x grows right and y grows down, and pixel
``(i, j)`` has its centre at ``(x, y) = (j, i)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, InvalidParameterError
from .scene import covariances


@dataclass
class Camera:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray
    t: np.ndarray
    near: float = 0.01

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("image size must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParameterError("focal lengths must be positive")
        if not self.near > 0:
            raise InvalidParameterError("near must be positive")
        check_rotation(self.R, 1e-6)

    @property
    def center(self):
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    @classmethod
    def look_at(cls, eye, target, width, height, fov_x=np.pi / 3, up=(0.0, -1.0, 0.0), **kw):
        """Camera at ``eye`` looking at ``target``; ``up`` is image-up in world."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, up)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(fwd, (1.0, 0.0, 0.0))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])
        f = 0.5 * width / np.tan(0.5 * fov_x)
        return cls(width, height, f, f, width / 2.0, height / 2.0, R, -R @ eye, **kw)


def check_rotation(R, tol):
    R = np.asarray(R, dtype=np.float64)
    if np.max(np.abs(R @ R.T - np.eye(3))) > tol:
        raise InvalidParameterError("R is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidParameterError("R must have determinant +1")


def world_to_camera(q, cov, cam):
    """Position and covariance in camera space."""
    q = np.asarray(q, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    return cam.R @ q + cam.t, cam.R @ cov @ cam.R.T


def perspective_jacobian(q_cam, cam):
    """Local affine approximation of the projection at ``q_cam``."""
    x, y, z = np.asarray(q_cam, dtype=np.float64)
    if not z > cam.near:
        raise BehindCameraError(f"depth {z} is not beyond near plane {cam.near}")
    return np.array(
        [
            [cam.fx / z, 0.0, -cam.fx * x / z**2],
            [0.0, cam.fy / z, -cam.fy * y / z**2],
            [0.0, 0.0, 1.0],
        ]
    )


def project_covariance(cov_cam, J):
    """Top-left 2x2 block of J cov J^T."""
    full = J @ cov_cam @ J.T
    out = full[:2, :2]
    return 0.5 * (out + out.T)


def project_point(q_cam, cam):
    x, y, z = np.asarray(q_cam, dtype=np.float64)
    if not z > cam.near:
        raise BehindCameraError(f"depth {z} is not beyond near plane {cam.near}")
    return np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])


def cull_mask(means2d, cov2d, depths, cam, h=0.0):
    """Vectorised visibility test shared by ``frustum_cull`` and the renderer.

    ``cov2d`` entries for Gaussians behind the camera are ignored.
    """
    visible = depths > cam.near
    a = cov2d[:, 0, 0] + h
    c = cov2d[:, 1, 1] + h
    b = cov2d[:, 0, 1]
    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    pad = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))
    x, y = means2d[:, 0], means2d[:, 1]
    with np.errstate(invalid="ignore"):
        inside = (x >= -pad) & (x <= cam.width + pad) & (y >= -pad) & (y <= cam.height + pad)
    return visible & inside


def project_means(positions, cam):
    """Camera-space points and 2D means (NaN when behind the near plane)."""
    qc = positions @ cam.R.T + cam.t
    z = qc[:, 2]
    safe = np.where(z > cam.near, z, np.nan)
    mx = cam.fx * qc[:, 0] / safe + cam.cx
    my = cam.fy * qc[:, 1] / safe + cam.cy
    return qc, np.stack([mx, my], axis=-1)


def jacobians(qc, cam):
    """(N, 2, 3) top rows of the perspective Jacobian."""
    x, y, z = qc[:, 0], qc[:, 1], qc[:, 2]
    zero = np.zeros_like(z)
    return np.stack(
        [
            np.stack([cam.fx / z, zero, -cam.fx * x / z**2], -1),
            np.stack([zero, cam.fy / z, -cam.fy * y / z**2], -1),
        ],
        -2,
    )


def frustum_cull(gaussians, cam, h=0.0):
    """Indices of Gaussians that can touch the image, in input order.

    The image rectangle is padded by three standard deviations along the
    major axis of the projected (dilated by ``h``) covariance.
    """
    if len(gaussians) == 0:
        return np.zeros(0, dtype=np.int64)
    qc, means2d = project_means(gaussians.positions, cam)
    cov_cam = cam.R @ covariances(gaussians.log_scales, gaussians.rotations) @ cam.R.T
    ok = qc[:, 2] > cam.near
    cov2d = np.zeros((len(gaussians), 2, 2))
    if np.any(ok):
        J = jacobians(qc[ok], cam)
        cov2d[ok] = J @ cov_cam[ok] @ np.swapaxes(J, -1, -2)
    return np.flatnonzero(cull_mask(means2d, cov2d, qc[:, 2], cam, h))
