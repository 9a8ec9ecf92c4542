"""
Training a compact pair on a procedural scene
=============================================

Desk-scale: a 64x64 sphere scene, a small architecture, a few hundred
optimizer steps. Prints the loss curve and the eval-split metrics, and
writes a rendered eval frame next to its ground truth.
"""

from nerfsearch import (ArchitectureDescriptor, CellConfig, build_pair,
                        generate_procedural)
from nerfsearch.data import default_scene_spec, save_image_png
from nerfsearch.render import render_image
from nerfsearch.train import TrainSettings, render_settings_for, train_pair

dataset, _ = generate_procedural(default_scene_spec(seed=0))
desc = ArchitectureDescriptor(coarse=CellConfig((2, 1, 1), (12, 12, 12)),
                              fine=CellConfig((2, 1, 1), (24, 28, 32)))
coarse, fine = build_pair(desc, seed=0)

settings = TrainSettings(iterations=600, rays_per_batch=128, n_coarse=16,
                         n_fine=32, seed=0, eval_max_images=2, log_every=100)
result = train_pair(coarse, fine, dataset, settings, quiet=False)
print(f"\nfinal eval: ssim {result.final_ssim:.4f}, "
      f"psnr {result.final_psnr:.2f} dB")

idx = dataset.eval_indices[0]
render = render_image(coarse, fine, dataset.cameras[idx],
                      render_settings_for(dataset, settings), seed=0)
save_image_png("rendered.png", render.image)
save_image_png("truth.png", dataset.images[idx])
print("wrote rendered.png / truth.png")
