"""Gaussian primitives, SH colour, point-cloud initialisation and pruning.

Scenes are stored struct-of-arrays: one ndarray per field with the Gaussian
index on axis 0.  SH coefficient banks are padded to the global max degree;
``sh_degrees`` records how many bands each Gaussian actually owns and the
padding rows stay at exactly zero.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptySceneError,
    InsufficientPointsError,
    InvalidParameterError,
)
from .sh import SH_C0, eval_basis, num_coeffs

INITIAL_OPACITY = 0.1


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def rgb_to_dc(rgb):
    """DC coefficient whose evaluated colour is ``rgb`` (0.5 offset convention)."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


@dataclass
class PointCloud:
    """Coloured points as ingested from SfM output.

    Attributes
    ----------
    positions : ndarray (N, 3)
    colors : ndarray (N, 3)
        RGB in [0, 1].
    """

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(self.positions) != len(self.colors):
            raise InvalidParameterError("positions and colors differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidParameterError("non-finite point position")
        if np.any(self.colors < 0.0) or np.any(self.colors > 1.0):
            raise InvalidParameterError("point colors must lie in [0, 1]")

    @property
    def count(self):
        return len(self.positions)


@dataclass
class SHBank:
    """Coefficients of one Gaussian's colour, ``(degree+1)**2`` rows by RGB."""

    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1, 3)
        if self.degree < 0 or len(self.coeffs) != num_coeffs(self.degree):
            raise InvalidParameterError(
                f"degree {self.degree} needs {num_coeffs(self.degree)} rows, "
                f"got {len(self.coeffs)}"
            )


@dataclass
class SHInitConfig:
    max_degree: int = 5
    s: float = 1.0
    neighbor_count: int = 3
    distance_normalizer: str = "median"
    # "uniform": damped fill of every band 1..D; "single": only the last
    # coefficient of band D receives the undamped value.
    higher_fill: str = "uniform"

    def __post_init__(self):
        if self.max_degree < 1:
            raise InvalidParameterError("max_degree must be >= 1")
        if not self.s > 0:
            raise InvalidParameterError("s must be positive")
        if self.neighbor_count < 1:
            raise InvalidParameterError("neighbor_count must be >= 1")
        if self.distance_normalizer not in ("median", "none"):
            raise InvalidParameterError(f"unknown normalizer {self.distance_normalizer!r}")
        if self.higher_fill not in ("uniform", "single"):
            raise InvalidParameterError(f"unknown higher_fill {self.higher_fill!r}")


@dataclass
class GaussianSet:
    """The optimisable scene.

    Attributes
    ----------
    positions : ndarray (N, 3)
    log_scales : ndarray (N, 3)
    rotations : ndarray (N, 4)
        Quaternions ``(w, x, y, z)``.
    opacity_logits : ndarray (N,)
    sh_coeffs : ndarray (N, (M+1)**2, 3)
    sh_degrees : ndarray (N,) of int
    max_degree : int
    """

    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray
    sh_degrees: np.ndarray
    max_degree: int

    PARAM_FIELDS = ("positions", "log_scales", "rotations", "opacity_logits", "sh_coeffs")

    def __post_init__(self):
        n = len(self.positions)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(n, 3)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(n)
        nu = num_coeffs(self.max_degree)
        self.sh_coeffs = np.asarray(self.sh_coeffs, dtype=np.float64).reshape(n, nu, 3)
        self.sh_degrees = np.asarray(self.sh_degrees, dtype=np.int64).reshape(n)
        if np.any(self.sh_degrees < 0) or np.any(self.sh_degrees > self.max_degree):
            raise InvalidParameterError("SH degree outside [0, max_degree]")

    def __len__(self):
        return len(self.positions)

    @property
    def opacities(self):
        return sigmoid(self.opacity_logits)

    def coeff_mask(self):
        """Boolean (N, nu) mask of coefficients each Gaussian owns."""
        nu = num_coeffs(self.max_degree)
        return np.arange(nu)[None, :] < num_coeffs(self.sh_degrees)[:, None]

    def bank(self, i):
        d = int(self.sh_degrees[i])
        return SHBank(d, self.sh_coeffs[i, : num_coeffs(d)].copy())

    def copy(self):
        return replace(self, **{f: getattr(self, f).copy() for f in self.PARAM_FIELDS},
                       sh_degrees=self.sh_degrees.copy())

    def subset(self, keep):
        keep = np.asarray(keep)
        return replace(
            self,
            **{f: getattr(self, f)[keep].copy() for f in self.PARAM_FIELDS},
            sh_degrees=self.sh_degrees[keep].copy(),
        )


def quaternion_to_matrix(q):
    """Rotation matrices from (..., 4) quaternions, normalised first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def covariances(log_scales, rotations):
    """Vectorised U diag(exp(s))^2 U^T for (N, 3) scales and (N, 4) quaternions."""
    U = quaternion_to_matrix(rotations)
    M = U * np.exp(log_scales)[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


def build_covariance(log_scale, rotation):
    """3x3 world covariance of one Gaussian.

    Parameters
    ----------
    log_scale : array_like (3,)
    rotation : array_like (4,)
        Unit quaternion ``(w, x, y, z)``.
    """
    log_scale = np.asarray(log_scale, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.float64)
    if not (np.all(np.isfinite(log_scale)) and np.all(np.isfinite(rotation))):
        raise InvalidParameterError("non-finite covariance parameters")
    if abs(np.linalg.norm(rotation) - 1.0) > 1e-6:
        raise InvalidParameterError("rotation quaternion is not unit length")
    cov = covariances(log_scale[None], rotation[None])[0]
    return 0.5 * (cov + cov.T)


def eval_sh(sh, view_dir):
    """View-dependent RGB of an SH bank, clamped to [0, 1]."""
    view_dir = np.asarray(view_dir, dtype=np.float64)
    if not (np.all(np.isfinite(view_dir)) and np.all(np.isfinite(sh.coeffs))):
        raise InvalidParameterError("non-finite SH input")
    if abs(np.linalg.norm(view_dir) - 1.0) > 1e-6:
        raise InvalidParameterError("view_dir must be unit length")
    Y = eval_basis(view_dir, sh.degree)
    return np.clip(0.5 + Y @ sh.coeffs, 0.0, 1.0)


def knn_mean_distance(cloud, k, normalizer="none"):
    """Mean distance from every point to its ``k`` nearest other points.

    With ``normalizer="median"`` the result is divided by its own median.
    """
    if cloud.count <= k:
        raise InsufficientPointsError(f"need more than {k} points, got {cloud.count}")
    tree = cKDTree(cloud.positions)
    dist, _ = tree.query(cloud.positions, k=k + 1)
    # column 0 is the point itself
    d = dist[:, 1:].mean(axis=1)
    if normalizer == "median":
        med = np.median(d)
        if med <= 0:
            raise InvalidParameterError("median neighbour distance is zero")
        d = d / med
    elif normalizer != "none":
        raise InvalidParameterError(f"unknown normalizer {normalizer!r}")
    return d


def assign_sh_degree(d, M):
    """Integer SH degree for scaled distance ``d``; returns ``(D, nu)``."""
    if M < 1:
        raise InvalidParameterError("M must be >= 1")
    if not np.isfinite(d):
        raise InvalidParameterError("d must be finite")
    rounded = int(np.floor(d + 0.5))
    D = max(1, min(rounded, M))
    return D, num_coeffs(D)


def init_sh_dc(rgb, opacity):
    """DC coefficient for opacity-weighted colour ``rgb * opacity``.

    The coefficient is chosen so that evaluating the bank reproduces the
    weighted colour exactly.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if not 0.0 < opacity < 1.0:
        raise InvalidParameterError("opacity must lie in (0, 1)")
    return rgb_to_dc(rgb * opacity)


def init_sh_higher(rgb, opacity, d, s):
    """Higher-band seed value ``rgb * opacity * (1 - exp(-s d))``.

    Far-from-neighbour points (large ``d``) get values approaching the
    weighted colour; ``d = 0`` gives exactly zero.
    """
    return np.asarray(rgb, dtype=np.float64) * opacity * (1.0 - np.exp(-s * d))


def fill_higher_bands(coeffs, v, D, fill="uniform"):
    """Write seed value ``v`` into rows 1..(D+1)**2-1 of one bank, in place.

    ``"uniform"`` spreads ``v`` over every higher coefficient, divided by
    their count; ``"single"`` puts the undivided value in the last row only.
    """
    nu = num_coeffs(D)
    if fill == "uniform":
        coeffs[1:nu] = v / (nu - 1)
    elif fill == "single":
        coeffs[nu - 1] = v
    else:
        raise InvalidParameterError(f"unknown fill {fill!r}")
    return coeffs


def init_scene(cloud, cfg=None, mode="standard"):
    """One Gaussian per point, isotropic and axis-aligned.

    ``mode="standard"`` puts the point colour in the DC term and leaves every
    higher band at zero.  ``mode="dynamic"`` weights the DC colour by opacity
    and seeds bands 1..D from neighbour distance, D chosen per point.
    """
    cfg = cfg or SHInitConfig()
    if cloud.count == 0:
        raise InsufficientPointsError("empty point cloud")
    if mode not in ("standard", "dynamic"):
        raise InvalidParameterError(f"unknown init mode {mode!r}")
    M = cfg.max_degree
    n = cloud.count
    raw = knn_mean_distance(cloud, cfg.neighbor_count)
    log_scales = np.repeat(np.log(np.maximum(raw, 1e-7))[:, None], 3, axis=1)
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    opacity_logits = np.full(n, float(logit(INITIAL_OPACITY)))
    coeffs = np.zeros((n, num_coeffs(M), 3))

    if mode == "standard":
        coeffs[:, 0] = rgb_to_dc(cloud.colors)
        degrees = np.full(n, M)
    else:
        if cfg.distance_normalizer == "median":
            d = raw / np.median(raw)
        else:
            d = raw
        degrees = np.empty(n, dtype=np.int64)
        for i in range(n):
            D, _ = assign_sh_degree(d[i], M)
            degrees[i] = D
            coeffs[i, 0] = init_sh_dc(cloud.colors[i], INITIAL_OPACITY)
            v = init_sh_higher(cloud.colors[i], INITIAL_OPACITY, d[i], cfg.s)
            fill_higher_bands(coeffs[i], v, D, cfg.higher_fill)
    return GaussianSet(cloud.positions.copy(), log_scales, rotations,
                       opacity_logits, coeffs, degrees, M)


def prune(gaussians, threshold):
    """Drop Gaussians whose opacity is below ``threshold``; order kept."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParameterError("threshold must lie in [0, 1]")
    keep = gaussians.opacities >= threshold
    if not np.any(keep):
        raise EmptySceneError("pruning removed every Gaussian")
    if np.all(keep):
        return gaussians
    return gaussians.subset(keep)


def sh_variance_report(gaussians):
    """Population variance of SH coefficients per band, pooled over channels.

    Returns an array indexed by degree ``0..M``.  Coefficients a Gaussian
    does not own count as zeros.
    """
    if len(gaussians) == 0:
        raise EmptySceneError("empty scene")
    M = gaussians.max_degree
    coeffs = gaussians.sh_coeffs * gaussians.coeff_mask()[..., None]
    out = np.zeros(M + 1)
    for l in range(M + 1):
        band = coeffs[:, l * l:(l + 1) ** 2, :]
        # np.var of a constant array can leave rounding residue; report exact 0
        if np.all(band == band.flat[0]):
            continue
        out[l] = np.var(band)
    return out
