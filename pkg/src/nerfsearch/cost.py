"""Analytic architecture cost model: exact parameter counts, FLOP estimates
for a stated workload, efficiency ratios, and a wall-clock frame benchmark.

The FLOP convention is a calibration artifact and is frozen here: one fused
multiply-add per weight plus one add per bias (so a layer costs
(in + 1) * out), a fixed per-query overhead of 884 for the encoders and
compositing bookkeeping, and a workload of 4096 rays with 64 coarse and 128
fine samples (the fine pass runs on the union, 192 queries per ray). Under
this convention the reference 8x256 pair costs 574.0 GFLOPs. Ratios are the
contract; absolute FLOPs scale with the convention and cancel in every ratio.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .field import (ArchitectureDescriptor, CellConfig, PositionalEncoding,
                    baseline_descriptor, build_pair)
from .render import Camera, RenderSettings, render_image

PER_QUERY_OVERHEAD = 884


@dataclass(frozen=True)
class FlopConvention:
    mac_factor: int = 1
    include_bias: bool = True
    per_query_overhead: int = PER_QUERY_OVERHEAD


@dataclass(frozen=True)
class Workload:
    rays: int = 4096
    n_coarse: int = 64
    n_fine: int = 128


def cell_param_count(depths: tuple[int, int, int], channels: tuple[int, int, int],
                     pos_dim: int = 63, dir_dim: int = 27, head_width: int = 128) -> int:
    """Closed-form parameter count of one field cell (trunk + heads).

    Written out independently of the network builder; the two are held equal
    by an enumeration test.
    """
    d1, d2, d3 = depths
    if d2 != 1:
        raise ValueError("middle stage depth must be 1")
    c1, c2, c3 = channels
    h = head_width
    if d1 == 1:
        stage1 = c2 * (pos_dim + 1)
    else:
        stage1 = (c1 * (pos_dim + 1)
                  + (d1 - 2) * c1 * (c1 + 1)
                  + c2 * (c1 + 1))
    stage2 = c3 * (c2 + pos_dim + 1)
    stage3 = d3 * c3 * (c3 + 1)
    density = 1 * (c3 + 1)
    color = h * (c3 + dir_dim + 1) + h * (h + 1) + 3 * (h + 1)
    return stage1 + stage2 + stage3 + density + color


def count_params(descriptor: ArchitectureDescriptor) -> int:
    """Trainable scalars of the coarse + fine pair (encoders are free)."""
    pos_dim = PositionalEncoding(descriptor.pos_enc_L).out_dim(3)
    dir_dim = PositionalEncoding(descriptor.dir_enc_L).out_dim(3)
    total = 0
    for cell in (descriptor.coarse, descriptor.fine):
        total += cell_param_count(cell.depths, cell.channels, pos_dim, dir_dim,
                                  descriptor.head_width)
    return total


def per_query_cost(cell: CellConfig, pos_dim: int = 63, dir_dim: int = 27,
                   head_width: int = 128,
                   convention: FlopConvention = FlopConvention()) -> int:
    """Cost of one field query in MAC units under the convention."""
    if convention.include_bias:
        base = cell_param_count(cell.depths, cell.channels, pos_dim, dir_dim, head_width)
    else:
        with_bias = cell_param_count(cell.depths, cell.channels, pos_dim, dir_dim,
                                     head_width)
        # subtract one bias add per output unit across all layers
        d1, _, d3 = cell.depths
        _, c2, c3 = cell.channels
        c1 = cell.channels[0]
        n_bias = (c2 if d1 == 1 else c1 + (d1 - 2) * c1 + c2) + c3 + d3 * c3 \
            + 1 + 2 * head_width + 3
        base = with_bias - n_bias
    return base + convention.per_query_overhead


def estimate_flops(descriptor: ArchitectureDescriptor,
                   workload: Workload = Workload(),
                   convention: FlopConvention = FlopConvention()) -> int:
    """Total FLOPs: rays x (Nc coarse queries + (Nc + Nf) fine queries)."""
    pos_dim = PositionalEncoding(descriptor.pos_enc_L).out_dim(3)
    dir_dim = PositionalEncoding(descriptor.dir_enc_L).out_dim(3)
    qc = per_query_cost(descriptor.coarse, pos_dim, dir_dim, descriptor.head_width,
                        convention)
    qf = per_query_cost(descriptor.fine, pos_dim, dir_dim, descriptor.head_width,
                        convention)
    per_ray = workload.n_coarse * qc + (workload.n_coarse + workload.n_fine) * qf
    return convention.mac_factor * workload.rays * per_ray


@dataclass
class CostReport:
    params: int
    flops: int
    workload: Workload
    convention: FlopConvention

    @property
    def params_m(self) -> float:
        return self.params / 1e6

    @property
    def flops_g(self) -> float:
        return self.flops / 1e9


def cost_report(descriptor: ArchitectureDescriptor,
                workload: Workload = Workload(),
                convention: FlopConvention = FlopConvention()) -> CostReport:
    return CostReport(params=count_params(descriptor),
                      flops=estimate_flops(descriptor, workload, convention),
                      workload=workload, convention=convention)


@dataclass(frozen=True)
class EfficiencyRatio:
    """baseline metric / generated metric; > 1 means the generated
    architecture is cheaper on that metric."""

    metric: str
    value: float


def efficiency_ratio(baseline_value: float, generated_value: float,
                     metric: str = "params") -> EfficiencyRatio:
    if baseline_value <= 0 or generated_value <= 0:
        raise ValueError("efficiency ratio needs positive metric values")
    return EfficiencyRatio(metric=metric, value=baseline_value / generated_value)


def er_params(descriptor: ArchitectureDescriptor,
              baseline: ArchitectureDescriptor | None = None) -> float:
    baseline = baseline or baseline_descriptor()
    return efficiency_ratio(count_params(baseline), count_params(descriptor)).value


def er_flops(descriptor: ArchitectureDescriptor,
             baseline: ArchitectureDescriptor | None = None,
             workload: Workload = Workload(),
             convention: FlopConvention = FlopConvention()) -> float:
    baseline = baseline or baseline_descriptor()
    return efficiency_ratio(
        estimate_flops(baseline, workload, convention),
        estimate_flops(descriptor, workload, convention), metric="flops").value


@dataclass
class BenchSettings:
    """Frame definition for throughput measurement (documented resolution)."""

    width: int = 32
    height: int = 32
    n_coarse: int = 32
    n_fine: int = 64
    near: float = 2.0
    far: float = 6.0
    fov_x: float = 0.9
    threads: int | None = None


def _bench_camera(settings: BenchSettings) -> Camera:
    pose = np.eye(4)
    pose[2, 3] = 4.0
    return Camera(pose=pose, fov_x=settings.fov_x,
                  width=settings.width, height=settings.height)


def measure_render_seconds(descriptor: ArchitectureDescriptor,
                           settings: BenchSettings, repetitions: int = 3,
                           seed: int = 0) -> float:
    """Median wall-clock seconds for one frame, after one warmup render.

    Throughput does not depend on the weight values, so fields are built with
    arbitrary seeded weights.
    """
    coarse, fine = build_pair(descriptor, seed=seed)
    rs = RenderSettings(n_coarse=settings.n_coarse, n_fine=settings.n_fine,
                        near=settings.near, far=settings.far)
    cam = _bench_camera(settings)
    render_image(coarse, fine, cam, rs, seed=seed)  # warmup
    times = []
    for _ in range(max(1, repetitions)):
        t0 = time.perf_counter()
        render_image(coarse, fine, cam, rs, seed=seed)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


@dataclass
class FpsResult:
    seconds: float
    fps: float
    speedup: float | None
    threads: int | None


def benchmark_fps(descriptor: ArchitectureDescriptor,
                  settings: BenchSettings = BenchSettings(),
                  repetitions: int = 3,
                  baseline_seconds: float | None = None,
                  seed: int = 0) -> FpsResult:
    """Frames per second at the documented bench frame, plus the speedup
    against a baseline timing measured in the same session (pass the
    baseline's measure_render_seconds result to avoid re-timing it)."""
    secs = measure_render_seconds(descriptor, settings, repetitions, seed)
    speedup = None if baseline_seconds is None else baseline_seconds / secs
    return FpsResult(seconds=secs, fps=1.0 / secs, speedup=speedup,
                     threads=settings.threads)
