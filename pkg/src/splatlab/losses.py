"""Photometric losses and the two-phase training objective.

All losses take (H, W, C) float images in [0, 1].  Each has a ``*_grad``
companion returning d(loss)/d(rendered) so the trainer can feed the
rasterizer's backward pass without an autodiff framework.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidParameterError, ShapeMismatchError

D_SSIM_PHASE = "d-ssim-phase"
P_SSIM_PHASE = "p-ssim-phase"


@dataclass
class LossConfig:
    lambda_: float = 0.5
    beta: float = 0.04
    gamma: float = 0.02
    k_switch: int = 25000
    P: int = 10
    K_kernel: int = 4
    stride: int = 4
    ssim_c1: float = 0.01**2
    ssim_c2: float = 0.03**2
    dssim_window: int = 11
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise InvalidParameterError("lambda must lie in [0, 1]")
        if self.beta < 0 or self.gamma < 0:
            raise InvalidParameterError("TV weights must be non-negative")
        if self.P < 1 or self.stride < 1 or self.K_kernel < 1 or self.dssim_window < 1:
            raise InvalidParameterError("P, stride and kernel sizes must be >= 1")


@dataclass
class PatchPair:
    """Linear pixel indices gathered into a ``patch_height x patch_width`` patch.

    The same indices are applied to the rendered and the reference image.
    """

    pixel_indices: np.ndarray
    patch_height: int
    patch_width: int


def _as_image(img):
    # C order keeps window reductions identical for gathered and raw images
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    return img


def _check_pair(a, b):
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l1_loss(rendered, gt):
    """Mean absolute error over pixels and channels."""
    r, g = _check_pair(rendered, gt)
    return float(np.mean(np.abs(r - g)))


def l1_grad(rendered, gt):
    r, g = _check_pair(rendered, gt)
    return np.sign(r - g) / r.size


def _windows(img, kernel, stride):
    # (nh, nw, C, k, k)
    return sliding_window_view(img, (kernel, kernel), axis=(0, 1))[::stride, ::stride]


def _ssim_core(x, y, kernel, stride, c1, c2, need_grad):
    H, W, C = x.shape
    if kernel > min(H, W):
        raise InvalidParameterError(f"kernel {kernel} larger than image {H}x{W}")
    if stride < 1:
        raise InvalidParameterError("stride must be >= 1")
    xw = _windows(x, kernel, stride)
    yw = _windows(y, kernel, stride)
    mx = xw.mean(axis=(-2, -1))
    my = yw.mean(axis=(-2, -1))
    sxx = (xw * xw).mean(axis=(-2, -1)) - mx * mx
    syy = (yw * yw).mean(axis=(-2, -1)) - my * my
    sxy = (xw * yw).mean(axis=(-2, -1)) - mx * my
    A1 = 2.0 * mx * my + c1
    A2 = 2.0 * sxy + c2
    B1 = mx * mx + my * my + c1
    B2 = sxx + syy + c2
    S = (A1 * A2) / (B1 * B2)
    value = float(S.mean())
    if not need_grad:
        return value, None

    n = kernel * kernel
    # dS/dx_p = const + b * y_p + c * x_p for every pixel p in the window
    a = (2.0 * my * A2 / (B1 * B2) - 2.0 * mx * S / B1) / n
    b = 2.0 * A1 / (B1 * B2 * n)
    c = -2.0 * S / (B2 * n)
    const = a - b * my - c * mx
    scale = 1.0 / S.size
    const, b, c = const * scale, b * scale, c * scale
    nh, nw = S.shape[:2]
    grad = np.zeros_like(x)
    for di in range(kernel):
        rows = slice(di, di + stride * (nh - 1) + 1, stride)
        for dj in range(kernel):
            cols = slice(dj, dj + stride * (nw - 1) + 1, stride)
            grad[rows, cols] += const + b * y[rows, cols] + c * x[rows, cols]
    return value, grad


def ssim(rendered, gt, kernel=11, stride=1, c1=0.01**2, c2=0.03**2):
    """Mean SSIM over uniform ``kernel x kernel`` windows placed every ``stride`` pixels.

    Computed per channel, then averaged over windows and channels.
    """
    r, g = _check_pair(rendered, gt)
    return _ssim_core(r, g, kernel, stride, c1, c2, False)[0]


def ssim_grad(rendered, gt, kernel=11, stride=1, c1=0.01**2, c2=0.03**2):
    """d ssim / d rendered."""
    r, g = _check_pair(rendered, gt)
    return _ssim_core(r, g, kernel, stride, c1, c2, True)[1]


def d_ssim_loss(rendered, gt, cfg=None):
    cfg = cfg or LossConfig()
    return 1.0 - ssim(rendered, gt, cfg.dssim_window, 1, cfg.ssim_c1, cfg.ssim_c2)


def sample_stochastic_patches(seed, h, w, P, permute=True):
    """Split the image into ``P`` row bands and shuffle the pixels of each.

    Band ``i`` keeps its own rectangle shape; its pixel indices are a seeded
    random permutation of the band's pixels laid out row-major.  With
    ``permute=False`` the raster order is kept.
    """
    if P < 1:
        raise InvalidParameterError("P must be >= 1")
    if P > h * w or P > h:
        raise InvalidParameterError(f"cannot split {h} rows into {P} bands")
    rng = np.random.default_rng(seed)
    pairs = []
    for rows in np.array_split(np.arange(h), P):
        idx = (rows[:, None] * w + np.arange(w)[None, :]).reshape(-1)
        if permute:
            idx = rng.permutation(idx)
        pairs.append(PatchPair(idx, len(rows), w))
    return pairs


def _gather(img, pair):
    flat = img.reshape(-1, img.shape[-1])
    return flat[pair.pixel_indices].reshape(pair.patch_height, pair.patch_width, -1)


def p_ssim(rendered, gt, pairs, cfg=None):
    """Mean SSIM over the gathered pseudo-patches."""
    cfg = cfg or LossConfig()
    r, g = _check_pair(rendered, gt)
    vals = [
        _ssim_core(_gather(r, p), _gather(g, p), cfg.K_kernel, cfg.stride,
                   cfg.ssim_c1, cfg.ssim_c2, False)[0]
        for p in pairs
    ]
    return float(np.mean(vals))


def p_ssim_grad(rendered, gt, pairs, cfg=None):
    cfg = cfg or LossConfig()
    r, g = _check_pair(rendered, gt)
    C = r.shape[-1]
    grad = np.zeros((r.shape[0] * r.shape[1], C))
    for p in pairs:
        _, gp = _ssim_core(_gather(r, p), _gather(g, p), cfg.K_kernel, cfg.stride,
                           cfg.ssim_c1, cfg.ssim_c2, True)
        grad[p.pixel_indices] += gp.reshape(-1, C)
    return (grad / len(pairs)).reshape(r.shape)


def p_ssim_loss(rendered, gt, pairs, cfg=None):
    return 1.0 - p_ssim(rendered, gt, pairs, cfg)


def tv_loss(rendered):
    """Sum of absolute vertical and horizontal neighbour differences over c*h*w."""
    img = _as_image(rendered)
    dv = np.abs(img[1:] - img[:-1]).sum()
    dh = np.abs(img[:, 1:] - img[:, :-1]).sum()
    return float((dv + dh) / img.size)


def tv_grad(rendered):
    img = _as_image(rendered)
    grad = np.zeros_like(img)
    sv = np.sign(img[1:] - img[:-1])
    sh = np.sign(img[:, 1:] - img[:, :-1])
    grad[1:] += sv
    grad[:-1] -= sv
    grad[:, 1:] += sh
    grad[:, :-1] -= sh
    return (grad / img.size).reshape(np.shape(rendered))


def phase_of(iteration, cfg):
    return D_SSIM_PHASE if iteration <= cfg.k_switch else P_SSIM_PHASE


def total_loss(iteration, l1, dssim, pssim, tv, cfg=None):
    """Two-phase weighted objective; returns ``(value, phase_tag)``."""
    cfg = cfg or LossConfig()
    if iteration < 1:
        raise InvalidParameterError("iteration counts from 1")
    lam = cfg.lambda_
    if phase_of(iteration, cfg) == D_SSIM_PHASE:
        terms = ((1.0 - lam) * l1, lam * dssim, cfg.beta * tv)
        return math.fsum(terms), D_SSIM_PHASE
    terms = ((1.0 - lam) * l1, lam * pssim, cfg.gamma * tv)
    return math.fsum(terms), P_SSIM_PHASE


def objective(iteration, rendered, gt, cfg=None, pairs=None):
    """Evaluate the scheduled objective and its image gradient.

    Returns ``(total, phase, components, grad)`` where ``components`` maps
    ``l1``, ``tv`` and either ``dssim`` or ``pssim`` to their values.  In
    the P-SSIM phase ``pairs`` must be supplied.
    """
    cfg = cfg or LossConfig()
    r, g = _check_pair(rendered, gt)
    lam = cfg.lambda_
    l1 = l1_loss(r, g)
    tv = tv_loss(r)
    grad = (1.0 - lam) * l1_grad(r, g)
    if phase_of(iteration, cfg) == D_SSIM_PHASE:
        val, sgrad = _ssim_core(r, g, cfg.dssim_window, 1, cfg.ssim_c1, cfg.ssim_c2, True)
        comps = {"l1": l1, "dssim": 1.0 - val, "tv": tv}
        total, phase = total_loss(iteration, l1, 1.0 - val, 0.0, tv, cfg)
        grad += -lam * sgrad + cfg.beta * tv_grad(r)
    else:
        if pairs is None:
            raise InvalidParameterError("P-SSIM phase needs patch pairs")
        ps = p_ssim(r, g, pairs, cfg)
        comps = {"l1": l1, "pssim": 1.0 - ps, "tv": tv}
        total, phase = total_loss(iteration, l1, 0.0, 1.0 - ps, tv, cfg)
        grad += -lam * p_ssim_grad(r, g, pairs, cfg) + cfg.gamma * tv_grad(r)
    return total, phase, comps, grad
