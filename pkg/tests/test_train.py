import numpy as np
import pytest

from nerfsearch.field import ArchitectureDescriptor, CellConfig, build_pair
from nerfsearch.train import (TrainSettings, TrainingDiverged,
                              downsample_dataset, downsample_image, evaluate,
                              render_settings_for, train_pair)


def small_descriptor():
    return ArchitectureDescriptor(coarse=CellConfig((1, 1, 1), (8, 8, 8)),
                                  fine=CellConfig((2, 1, 1), (10, 12, 14)))


def settings(iterations, seed=0):
    return TrainSettings(iterations=iterations, rays_per_batch=64, n_coarse=8,
                         n_fine=8, seed=seed, eval_max_images=1, log_every=0)


def test_zero_iterations_yields_valid_report(tiny_scene):
    dataset, _ = tiny_scene
    coarse, fine = build_pair(small_descriptor(), seed=0)
    result = train_pair(coarse, fine, dataset, settings(0))
    assert result.steps == 0
    assert np.isfinite(result.final_ssim)
    assert np.isfinite(result.final_psnr)


def test_loss_decreases(tiny_scene):
    dataset, _ = tiny_scene
    coarse, fine = build_pair(small_descriptor(), seed=0)
    st = settings(150)
    st = TrainSettings(**{**st.__dict__, "log_every": 50})
    result = train_pair(coarse, fine, dataset, st)
    losses = [row["loss"] for row in result.history]
    assert losses[-1] < losses[0]


def test_training_improves_ssim(tiny_scene):
    dataset, _ = tiny_scene
    coarse, fine = build_pair(small_descriptor(), seed=0)
    rs = render_settings_for(dataset, settings(0))
    before = evaluate(coarse, fine, dataset, rs, max_images=1).mean_ssim
    train_pair(coarse, fine, dataset, settings(250))
    after = evaluate(coarse, fine, dataset, rs, max_images=1).mean_ssim
    assert after > before


def test_training_trace_is_deterministic(tiny_scene):
    dataset, _ = tiny_scene
    traces = []
    finals = []
    for _ in range(2):
        coarse, fine = build_pair(small_descriptor(), seed=3)
        st = TrainSettings(iterations=40, rays_per_batch=32, n_coarse=8,
                           n_fine=8, seed=3, eval_max_images=1, log_every=10)
        result = train_pair(coarse, fine, dataset, st)
        traces.append([row["loss"] for row in result.history])
        finals.append(np.concatenate([p.ravel() for p in coarse.parameters()]))
    assert traces[0] == traces[1]
    assert np.array_equal(finals[0], finals[1])


def test_divergence_raises(tiny_scene):
    dataset, _ = tiny_scene
    coarse, fine = build_pair(small_descriptor(), seed=0)
    st = TrainSettings(iterations=50, rays_per_batch=16, n_coarse=8, n_fine=8,
                       learning_rate=1e12, seed=0, log_every=0)
    with pytest.raises(TrainingDiverged):
        train_pair(coarse, fine, dataset, st)


def test_optimizer_state_advances(tiny_scene):
    dataset, _ = tiny_scene
    coarse, fine = build_pair(small_descriptor(), seed=0)
    result = train_pair(coarse, fine, dataset, settings(5))
    assert result.optimizer.step_count == 5


def test_downsample_image_box_average():
    img = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    small = downsample_image(img, 2)
    assert small.shape == (2, 2)
    assert small[0, 0] == np.mean([0, 1, 4, 5])


def test_downsample_dataset_consistency(tiny_scene):
    dataset, _ = tiny_scene
    half = downsample_dataset(dataset, 2)
    assert half.images[0].shape[0] == dataset.images[0].shape[0] // 2
    assert half.cameras[0].width == dataset.cameras[0].width // 2
    assert half.cameras[0].fov_x == dataset.cameras[0].fov_x
    assert half.near == dataset.near
