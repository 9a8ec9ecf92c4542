"""Training loop for a coarse/fine field pair.

Each step samples a batch of training pixels, renders them through both
passes, and applies the optimizer to the summed mean-squared error of the
coarse and fine colors. Batch selection and sample jitter are fully
determined by (seed, step), so traces are reproducible at a fixed thread
count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SceneDataset
from .field import RadianceField, field_backward
from .metrics import MetricReport
from .nn import OptimizerState, optimizer_step
from .render import (Camera, RenderSettings, composite_backward, generate_rays,
                     pixel_ids, render_image, render_rays)


class TrainingDiverged(RuntimeError):
    """Raised when the loss or an activation stops being finite."""


@dataclass
class TrainSettings:
    iterations: int = 2000
    rays_per_batch: int = 4096
    n_coarse: int = 64
    n_fine: int = 128
    learning_rate: float = 5e-4
    rectified: bool = True
    seed: int = 0
    eval_every: int = 0          # 0: evaluate only after the last step
    eval_max_images: int = 3
    log_every: int = 200


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    final_psnr: float = float("nan")
    final_ssim: float = float("nan")
    steps: int = 0
    optimizer: OptimizerState | None = None


def _gather_train_rays(dataset: SceneDataset):
    """Flatten all training pixels into ray arrays with stable ids."""
    origins, dirs, colors, ids = [], [], [], []
    for fi, idx in enumerate(dataset.train_indices):
        cam = dataset.cameras[idx]
        o, d = generate_rays(cam)
        origins.append(o)
        dirs.append(d)
        colors.append(dataset.images[idx].reshape(-1, 3).astype(np.float64))
        ids.append(fi * cam.height * cam.width + pixel_ids(cam))
    return (np.concatenate(origins), np.concatenate(dirs),
            np.concatenate(colors), np.concatenate(ids))


def render_settings_for(dataset: SceneDataset, settings: TrainSettings
                        ) -> RenderSettings:
    return RenderSettings(n_coarse=settings.n_coarse, n_fine=settings.n_fine,
                          background=dataset.background,
                          near=dataset.near, far=dataset.far)


def evaluate(coarse: RadianceField, fine: RadianceField, dataset: SceneDataset,
             render_settings: RenderSettings, indices=None,
             max_images: int | None = None, seed: int = 0) -> MetricReport:
    """Render eval frames and score them against the stored float images."""
    indices = list(dataset.eval_indices if indices is None else indices)
    if max_images is not None:
        indices = indices[:max_images]
    report = MetricReport()
    for idx in indices:
        out = render_image(coarse, fine, dataset.cameras[idx], render_settings,
                           seed=seed)
        report.add(out.image, dataset.images[idx])
    return report


def train_pair(coarse: RadianceField, fine: RadianceField, dataset: SceneDataset,
               settings: TrainSettings, optimizer: OptimizerState | None = None,
               quiet: bool = True) -> TrainResult:
    """Run the optimization in place; returns the step history and metrics.

    Raises TrainingDiverged when the loss becomes non-finite.
    """
    origins, dirs, gts, ids = _gather_train_rays(dataset)
    n_rays = origins.shape[0]
    params = coarse.parameters() + fine.parameters()
    state = optimizer or OptimizerState.for_params(
        params, lr=settings.learning_rate, rectified=settings.rectified)
    rs = render_settings_for(dataset, settings)
    batch_rng = np.random.default_rng([settings.seed, 311])
    result = TrainResult(optimizer=state)
    bg = np.asarray(dataset.background, dtype=np.float64)

    for step in range(settings.iterations):
        sel = batch_rng.integers(0, n_rays, size=min(settings.rays_per_batch, n_rays))
        gt = gts[sel]
        step_seed = settings.seed * 1_000_003 + step
        try:
            out = render_rays(coarse, fine, origins[sel], dirs[sel], ids[sel],
                              rs, seed=step_seed, record=True)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"step {step}: {exc}") from exc
        comp_c, comp_f = out["coarse"], out["fine"]
        err_c = comp_c.color - gt
        err_f = comp_f.color - gt
        loss = float(np.mean(err_c ** 2) + np.mean(err_f ** 2))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")

        scale = 2.0 / err_f.size
        d_sig_f, d_rgb_f = composite_backward(comp_f, out["rgb_fine"], bg,
                                              scale * err_f)
        grads_f = field_backward(fine, d_sig_f.reshape(-1),
                                 d_rgb_f.reshape(-1, 3))
        d_sig_c, d_rgb_c = composite_backward(comp_c, out["rgb_coarse"], bg,
                                              scale * err_c)
        grads_c = field_backward(coarse, d_sig_c.reshape(-1),
                                 d_rgb_c.reshape(-1, 3))
        optimizer_step(state, params, grads_c + grads_f)

        if settings.log_every and (step % settings.log_every == 0
                                   or step == settings.iterations - 1):
            row = {"step": step, "loss": loss}
            if settings.eval_every and step % settings.eval_every == 0 and step > 0:
                rep = evaluate(coarse, fine, dataset, rs,
                               max_images=settings.eval_max_images,
                               seed=settings.seed)
                row["eval_ssim"] = rep.mean_ssim
            result.history.append(row)
            if not quiet:
                msg = f"step {step:6d} loss {loss:.6f}"
                if "eval_ssim" in row:
                    msg += f" eval_ssim {row['eval_ssim']:.4f}"
                print(msg)
        result.steps = step + 1

    rep = evaluate(coarse, fine, dataset, rs, max_images=settings.eval_max_images,
                   seed=settings.seed)
    result.final_psnr = rep.mean_psnr
    result.final_ssim = rep.mean_ssim
    return result


def downsample_image(image: np.ndarray, factor: int) -> np.ndarray:
    """Box-average downsampling; dimensions must be divisible by factor."""
    h, w = image.shape[:2]
    if h % factor or w % factor:
        raise ValueError("image size not divisible by the downsample factor")
    return image.reshape(h // factor, factor, w // factor, factor, -1) \
                .mean(axis=(1, 3)).squeeze()


def downsample_dataset(dataset: SceneDataset, factor: int) -> SceneDataset:
    """Half (or 1/factor) resolution copy with consistent cameras."""
    if factor == 1:
        return dataset
    images = [downsample_image(img, factor).astype(np.float32)
              for img in dataset.images]
    cameras = [Camera(pose=c.pose, fov_x=c.fov_x, width=c.width // factor,
                      height=c.height // factor) for c in dataset.cameras]
    return SceneDataset(images=images, cameras=cameras,
                        train_indices=list(dataset.train_indices),
                        eval_indices=list(dataset.eval_indices),
                        near=dataset.near, far=dataset.far,
                        background=dataset.background)
