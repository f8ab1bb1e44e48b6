"""Optimisation loop: render, scheduled loss, backward, Adam, prune, log."""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptySceneError, InvalidParameterError, ShapeMismatchError
from .losses import LossConfig, P_SSIM_PHASE, objective, phase_of, sample_stochastic_patches, ssim
from .msrn import msrn_forward
from .rasterizer import RasterConfig, render, render_with_state
from .scene import GaussianSet, SHInitConfig, prune, sh_variance_report

PSNR_CAP = 99.0


@dataclass
class LearningRates:
    position: float = 1.6e-4
    log_scale: float = 5e-3
    rotation: float = 1e-3
    opacity_logit: float = 5e-2
    sh_dc: float = 2.5e-3
    sh_rest: float = 1.25e-4

    def __post_init__(self):
        if any(v < 0 for v in asdict(self).values()):
            raise InvalidParameterError("learning rates must be non-negative")


@dataclass
class TrainConfig:
    iterations: int = 30000
    loss: LossConfig = field(default_factory=LossConfig)
    sh_init: SHInitConfig = field(default_factory=SHInitConfig)
    raster: RasterConfig = field(default_factory=RasterConfig)
    learning_rates: LearningRates = field(default_factory=LearningRates)
    prune_every: int = 100
    prune_threshold: float = 0.005
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")
        if not 0.0 <= self.prune_threshold <= 1.0:
            raise InvalidParameterError("prune_threshold must lie in [0, 1]")


@dataclass
class OptimizerState:
    """Adam moments keyed by ``GaussianSet`` field name."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15

    @classmethod
    def for_scene(cls, gaussians):
        zeros = {f: np.zeros_like(getattr(gaussians, f)) for f in GaussianSet.PARAM_FIELDS}
        return cls(zeros, {f: z.copy() for f, z in zeros.items()})

    def subset(self, keep):
        return OptimizerState({f: a[keep].copy() for f, a in self.m.items()},
                              {f: a[keep].copy() for f, a in self.v.items()},
                              self.step, self.beta1, self.beta2, self.eps)


def _lr_arrays(gaussians, lrs):
    nu = gaussians.sh_coeffs.shape[1]
    sh = np.full((1, nu, 1), lrs.sh_rest)
    sh[:, 0] = lrs.sh_dc
    return {
        "positions": lrs.position,
        "log_scales": lrs.log_scale,
        "rotations": lrs.rotation,
        "opacity_logits": lrs.opacity_logit,
        "sh_coeffs": sh,
    }


def adam_step(params, grads, state, lrs):
    """One Adam update applied in place; returns ``(params, state, applied)``.

    Non-finite gradients leave both parameters and moments untouched and
    return ``applied=False``.
    """
    if not grads.all_finite():
        return params, state, False
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr = _lr_arrays(params, lrs)
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        p = getattr(params, name)
        p -= lr[name] * mhat / (np.sqrt(vhat) + state.eps)
    params.rotations /= np.linalg.norm(params.rotations, axis=-1, keepdims=True)
    return params, state, True


def psnr(img, gt):
    """Peak signal-to-noise ratio in dB for [0, 1] images.

    Capped at ``PSNR_CAP`` so identical images give a finite sentinel.
    """
    img = np.asarray(img, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if img.shape != gt.shape:
        raise ShapeMismatchError(f"image shapes differ: {img.shape} vs {gt.shape}")
    mse = float(np.mean((img - gt) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


class TrainLog:
    """Per-iteration records, serialisable as JSON lines."""

    def __init__(self):
        self.records = []

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def phases(self):
        return [r["phase"] for r in self.records if "phase" in r]

    def totals(self):
        return [r["total"] for r in self.records if "total" in r]

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl())


def _check_views(cameras, images):
    if len(cameras) == 0:
        raise InvalidParameterError("training needs at least one camera")
    if len(cameras) != len(images):
        raise InvalidParameterError("one ground-truth image per camera is required")
    for cam, img in zip(cameras, images):
        if np.shape(img) != (cam.height, cam.width, 3):
            raise ShapeMismatchError(
                f"image {np.shape(img)} does not match camera {cam.width}x{cam.height}"
            )


def mean_psnr(gaussians, cameras, images, raster=None):
    vals = [psnr(render(gaussians, c, raster), g) for c, g in zip(cameras, images)]
    return float(np.mean(vals))


def train(gaussians, cameras, images, cfg=None, optimizer=None, start_iteration=0,
          on_checkpoint=None):
    """Fit ``gaussians`` to the posed images.

    The input scene is not modified.  Returns ``(trained, log, optimizer)``.
    ``on_checkpoint(iteration, gaussians, optimizer)`` is called every
    ``cfg.checkpoint_every`` iterations when both are set.
    """
    cfg = cfg or TrainConfig()
    _check_views(cameras, images)
    images = [np.asarray(im, dtype=np.float64) for im in images]
    scene = gaussians.copy()
    state = optimizer or OptimizerState.for_scene(scene)
    log = TrainLog()
    rng = np.random.default_rng(cfg.seed)
    order = []

    for it in range(start_iteration + 1, start_iteration + cfg.iterations + 1):
        if not order:
            order = list(rng.permutation(len(cameras)))
        cam_id = int(order.pop(0))
        cam, gt = cameras[cam_id], images[cam_id]

        image, raster = render_with_state(scene, cam, cfg.raster)
        pairs = None
        if phase_of(it, cfg.loss) == P_SSIM_PHASE:
            pairs = sample_stochastic_patches(
                [cfg.loss.seed, cfg.seed, it], cam.height, cam.width, cfg.loss.P
            )
        total, phase, comps, grad_img = objective(it, image, gt, cfg.loss, pairs)
        grads = raster.backward(grad_img)
        scene, state, applied = adam_step(scene, grads, state, cfg.learning_rates)

        record = {"iteration": it, "phase": phase, "camera": cam_id, **comps,
                  "total": total, "n_gaussians": len(scene)}
        if not applied:
            record["skipped"] = True

        if cfg.prune_every and it % cfg.prune_every == 0:
            keep = scene.opacities >= cfg.prune_threshold
            if not np.any(keep):
                record["error"] = "pruning removed every Gaussian"
                log.append(record)
                err = EmptySceneError(f"iteration {it}: pruning removed every Gaussian")
                err.log = log
                raise err
            if not np.all(keep):
                scene = prune(scene, cfg.prune_threshold)
                state = state.subset(keep)
            record["n_gaussians"] = len(scene)

        if cfg.eval_every and it % cfg.eval_every == 0:
            record["psnr"] = [psnr(render(scene, c, cfg.raster), g)
                              for c, g in zip(cameras, images)]
            record["sh_variance"] = sh_variance_report(scene).tolist()
        log.append(record)

        if on_checkpoint and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            on_checkpoint(it, scene, state)
    return scene, log, state


def evaluate(gaussians, cameras, images, raster=None, model=None, hr_images=None):
    """PSNR / SSIM per camera and their means.

    With an MSRN ``model`` every render is also super-resolved and scored
    against ``hr_images`` (required in that case).
    """
    if model is not None and hr_images is None:
        raise InvalidParameterError("super-resolved scoring needs full-resolution images")
    rows = []
    for i, (cam, gt) in enumerate(zip(cameras, images)):
        img = render(gaussians, cam, raster)
        row = {"camera": i, "psnr": psnr(img, gt), "ssim": ssim(img, gt)}
        if model is not None:
            sr = msrn_forward(img, model)
            hr = np.asarray(hr_images[i], dtype=np.float64)
            row["sr_shape"] = list(sr.shape)
            row["sr_psnr"] = psnr(sr, hr)
            row["sr_ssim"] = ssim(sr, hr)
        rows.append(row)
    keys = [k for k in rows[0] if k not in ("camera", "sr_shape")] if rows else []
    mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    return {"per_camera": rows, "mean": mean}
