"""Ray generation, stratified and importance sampling, and volumetric
compositing for the coarse/fine two-pass pipeline.

Sampling randomness is counter-based: every jitter value is a pure hash of
(seed, stream tag, ray id, sample index), so renders are identical no matter
how rays are tiled, batched, or parallelized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import require_finite
from .field import RadianceField, field_query

# splitmix64 finalizer constants
_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    x = (x + _C1).astype(np.uint64)
    x ^= x >> np.uint64(30)
    x *= _C2
    x ^= x >> np.uint64(27)
    x *= _C3
    x ^= x >> np.uint64(31)
    return x


def hash_uniform(seed: int, tag: int, rows: np.ndarray, n_cols: int) -> np.ndarray:
    """Deterministic uniforms in [0, 1), shaped [len(rows), n_cols].

    Each value depends only on (seed, tag, row id, column index).
    """
    with np.errstate(over="ignore"):
        base = _mix(_mix(np.uint64(seed % (1 << 64))) + np.uint64(tag))
        r = _mix(base + np.asarray(rows, dtype=np.uint64)[:, None] * _C3)
        cols = np.arange(n_cols, dtype=np.uint64)[None, :]
        h = _mix(r + cols * _C2)
    return ((h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)).astype(np.float64)


class StreamRng:
    """rng adapter over hash_uniform for the per-ray sampling streams."""

    def __init__(self, seed: int, tag: int, rows: np.ndarray):
        self.seed, self.tag, self.rows = seed, tag, np.asarray(rows)

    def random(self, size) -> np.ndarray:
        n = size[-1] if isinstance(size, tuple) else int(size)
        u = hash_uniform(self.seed, self.tag, self.rows, n)
        return u if isinstance(size, tuple) else u[0]


# stream tags
TAG_COARSE = 1
TAG_FINE = 2


@dataclass
class Camera:
    """Pinhole camera: 4x4 camera-to-world pose (looks along -z, y up),
    horizontal field of view in radians, and image size in pixels."""

    pose: np.ndarray
    fov_x: float
    width: int
    height: int

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (4, 4):
            raise ValueError("pose must be a 4x4 camera-to-world matrix")
        r = self.pose[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise ValueError("rotation block must be orthonormal within 1e-5")

    @property
    def focal(self) -> float:
        return 0.5 * self.width / np.tan(0.5 * self.fov_x)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        if not self.near < self.far or self.near <= 0:
            raise ValueError("need 0 < near < far")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise ValueError("ray direction must be unit-norm within 1e-6")


@dataclass
class RenderSettings:
    """Sampling counts, integration bounds, and batching for rendering."""

    n_coarse: int = 64
    n_fine: int = 128
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    rays_per_batch: int = 4096
    near: float = 2.0
    far: float = 6.0
    tile_rays: int = 8192
    tile_queries: int = 32768  # caps per-tile matmul rows (cache friendliness)
    eps_pdf: float = 1e-5

    def __post_init__(self):
        if self.n_coarse < 2:
            raise ValueError("need at least 2 coarse samples")
        if self.n_fine < 0:
            raise ValueError("n_fine must be >= 0")
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    @property
    def effective_tile_rays(self) -> int:
        per_ray = self.n_coarse + self.n_fine
        budget = max(1, self.tile_queries // max(per_ray, 1))
        return max(1, min(self.tile_rays, budget))


def generate_rays(camera: Camera, pixels: np.ndarray | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Rays through pixel centers; returns (origins [N,3], unit dirs [N,3]).

    ``pixels`` is an integer [N, 2] array of (row, col); None means the full
    image in row-major order.
    """
    if pixels is None:
        rows, cols = np.meshgrid(np.arange(camera.height), np.arange(camera.width),
                                 indexing="ij")
        pixels = np.stack([rows.ravel(), cols.ravel()], axis=1)
    pixels = np.asarray(pixels)
    f = camera.focal
    x = (pixels[:, 1] + 0.5 - 0.5 * camera.width) / f
    y = -(pixels[:, 0] + 0.5 - 0.5 * camera.height) / f
    dirs_cam = np.stack([x, y, -np.ones_like(x)], axis=1)
    dirs = dirs_cam @ camera.pose[:3, :3].T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.pose[:3, 3], dirs.shape).copy()
    return origins, dirs


def pixel_ids(camera: Camera, pixels: np.ndarray | None = None) -> np.ndarray:
    """Stable per-ray ids (row-major pixel index) for the sampling streams."""
    if pixels is None:
        return np.arange(camera.height * camera.width)
    pixels = np.asarray(pixels)
    return pixels[:, 0] * camera.width + pixels[:, 1]


def stratified_samples(ray: Ray, n: int, rng) -> np.ndarray:
    """One uniform draw in each of n equal sub-intervals of [near, far]."""
    if n < 2:
        raise ValueError("need n >= 2 samples")
    u = np.asarray(rng.random((1, n)))
    return stratified_batch(ray.near, ray.far, n, u)[0]


def stratified_batch(near: float, far: float, n: int, u: np.ndarray) -> np.ndarray:
    """Vectorized stratified samples for jitter u in [0, 1), shape [R, n]."""
    edges = np.arange(n, dtype=np.float64) / n
    t = near + (far - near) * (edges[None, :] + u / n)
    return t


def importance_samples(weights: np.ndarray, t_values: np.ndarray, n_fine: int,
                       rng, eps_pdf: float = 1e-5) -> np.ndarray:
    """Inverse-CDF draws from the piecewise-constant pdf over the sample bins.

    Bin i spans [t_i, t_{i+1}] and carries mass weights_i + eps_pdf; the mass
    of the terminal segment (beyond the last sample) is not resampled. The
    eps floor keeps the CDF invertible when all weights are zero. Accepts a
    single ray ([S] arrays) or a batch ([R, S]); output is sorted per ray.
    """
    w = np.asarray(weights, dtype=np.float64)
    t = np.asarray(t_values, dtype=np.float64)
    single = w.ndim == 1
    if single:
        w, t = w[None, :], t[None, :]
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    u = np.asarray(rng.random((w.shape[0], n_fine)), dtype=np.float64)
    out = _importance_from_u(w, t, u, eps_pdf)
    return out[0] if single else out


def _importance_from_u(w: np.ndarray, t: np.ndarray, u: np.ndarray,
                       eps_pdf: float) -> np.ndarray:
    n_rays, s = w.shape
    masses = w[:, :-1] + eps_pdf
    cdf = np.zeros((n_rays, s), dtype=np.float64)
    np.cumsum(masses, axis=1, out=cdf[:, 1:])
    cdf /= cdf[:, -1:]
    # one global searchsorted: offset each row so rows cannot interleave
    offs = 2.0 * np.arange(n_rays, dtype=np.float64)[:, None]
    idx = np.searchsorted((cdf + offs).ravel(), (u + offs).ravel(), side="right")
    idx = idx.reshape(u.shape) - np.arange(n_rays)[:, None] * s - 1
    idx = np.clip(idx, 0, s - 2)
    lo = np.take_along_axis(cdf, idx, axis=1)
    hi = np.take_along_axis(cdf, idx + 1, axis=1)
    t_lo = np.take_along_axis(t, idx, axis=1)
    t_hi = np.take_along_axis(t, idx + 1, axis=1)
    frac = (u - lo) / np.maximum(hi - lo, 1e-30)
    return np.sort(t_lo + frac * (t_hi - t_lo), axis=1)


@dataclass
class CompositeResult:
    color: np.ndarray       # [R, 3]
    weights: np.ndarray     # [R, S]
    opacity: np.ndarray     # [R]
    alpha: np.ndarray = field(repr=False, default=None)
    transmittance: np.ndarray = field(repr=False, default=None)
    delta: np.ndarray = field(repr=False, default=None)


def composite(densities: np.ndarray, rgbs: np.ndarray, t_values: np.ndarray,
              far, background) -> CompositeResult:
    """Alpha-composite sorted samples along rays.

    alpha_i = 1 - exp(-sigma_i * delta_i) with delta_i the gap to the next
    sample (the last gap is truncated at the far plane); weights are
    transmittance * alpha and residual transmittance falls to the background.
    Inputs are [R, S], [R, S, 3], [R, S]; far is scalar or [R].
    """
    sigma = np.asarray(densities)
    rgb = np.asarray(rgbs)
    t = np.asarray(t_values)
    if np.any(sigma < 0):
        raise ValueError("densities must be non-negative")
    if np.any(np.diff(t, axis=-1) < 0):
        raise ValueError("t_values must be sorted along each ray")
    far_arr = np.broadcast_to(np.asarray(far, dtype=t.dtype), t.shape[:-1])[..., None]
    delta = np.diff(np.concatenate([t, far_arr], axis=-1), axis=-1)
    alpha = -np.expm1(-sigma * delta)
    one_minus = 1.0 - alpha
    trans = np.cumprod(one_minus, axis=-1)
    trans = np.concatenate([np.ones_like(trans[..., :1]), trans[..., :-1]], axis=-1)
    weights = trans * alpha
    opacity = weights.sum(axis=-1)
    bg = np.asarray(background, dtype=rgb.dtype)
    color = (weights[..., None] * rgb).sum(axis=-2) + (1.0 - opacity)[..., None] * bg
    return CompositeResult(color=color, weights=weights, opacity=opacity,
                           alpha=alpha, transmittance=trans, delta=delta)


def composite_backward(res: CompositeResult, rgbs: np.ndarray, background,
                       d_color: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the composited color w.r.t. densities and sample colors.

    d_weight_i folds in the background term (color depends on the weight both
    directly and through the residual transmittance); d_alpha uses the suffix
    sum over downstream weights divided by (1 - alpha), which stays finite
    because those weights carry the same factor.
    """
    w, alpha, trans, delta = res.weights, res.alpha, res.transmittance, res.delta
    bg = np.asarray(background, dtype=rgbs.dtype)
    d_rgb = w[..., None] * d_color[..., None, :]
    d_w = np.einsum("rc,rsc->rs", d_color, rgbs - bg)
    wdw = w * d_w
    suffix = np.cumsum(wdw[..., ::-1], axis=-1)[..., ::-1] - wdw
    d_alpha = trans * d_w - suffix / np.maximum(1.0 - alpha, 1e-12)
    d_sigma = d_alpha * delta * (1.0 - alpha)
    return d_sigma, d_rgb


@dataclass
class RenderResult:
    image: np.ndarray
    coarse_image: np.ndarray
    opacity: np.ndarray


def render_rays(
    coarse_field: RadianceField,
    fine_field: RadianceField,
    origins: np.ndarray,
    dirs: np.ndarray,
    ray_ids: np.ndarray,
    settings: RenderSettings,
    seed: int = 0,
    record: bool = False,
):
    """Two-pass render of a ray batch.

    Coarse pass: stratified samples on the coarse field. Fine pass: the fine
    field evaluated on the union of coarse and importance samples, so it
    consumes n_coarse + n_fine queries per ray. Returns a dict with colors
    and the intermediates needed for a training step.
    """
    n = origins.shape[0]
    u_c = hash_uniform(seed, TAG_COARSE, ray_ids, settings.n_coarse)
    t_c = stratified_batch(settings.near, settings.far, settings.n_coarse, u_c)
    pos_c = origins[:, None, :] + t_c[..., None] * dirs[:, None, :]
    dirs_c = np.broadcast_to(dirs[:, None, :], pos_c.shape)
    out_c = field_query(coarse_field, pos_c.reshape(-1, 3),
                        dirs_c.reshape(-1, 3).copy(), record=record)
    sig_c = out_c.density.reshape(n, settings.n_coarse)
    rgb_c = out_c.rgb.reshape(n, settings.n_coarse, 3)
    comp_c = composite(sig_c, rgb_c, t_c, settings.far, settings.background)

    u_f = hash_uniform(seed, TAG_FINE, ray_ids, settings.n_fine)
    t_f = _importance_from_u(comp_c.weights.astype(np.float64), t_c, u_f,
                             settings.eps_pdf)
    t_all = np.sort(np.concatenate([t_c, t_f], axis=1), axis=1)
    pos_f = origins[:, None, :] + t_all[..., None] * dirs[:, None, :]
    dirs_f = np.broadcast_to(dirs[:, None, :], pos_f.shape)
    out_f = field_query(fine_field, pos_f.reshape(-1, 3),
                        dirs_f.reshape(-1, 3).copy(), record=record)
    s_all = t_all.shape[1]
    sig_f = out_f.density.reshape(n, s_all)
    rgb_f = out_f.rgb.reshape(n, s_all, 3)
    comp_f = composite(sig_f, rgb_f, t_all, settings.far, settings.background)
    return {
        "coarse": comp_c, "fine": comp_f,
        "sigma_coarse": sig_c, "rgb_coarse": rgb_c, "t_coarse": t_c,
        "sigma_fine": sig_f, "rgb_fine": rgb_f, "t_fine": t_all,
    }


def render_image(coarse_field: RadianceField, fine_field: RadianceField,
                 camera: Camera, settings: RenderSettings, seed: int = 0
                 ) -> RenderResult:
    """Render a full frame tile by tile; results do not depend on tiling."""
    origins, dirs = generate_rays(camera)
    ids = pixel_ids(camera)
    n = origins.shape[0]
    image = np.zeros((n, 3), dtype=np.float64)
    coarse_image = np.zeros((n, 3), dtype=np.float64)
    opacity = np.zeros(n, dtype=np.float64)
    step = settings.effective_tile_rays
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        out = render_rays(coarse_field, fine_field, origins[lo:hi], dirs[lo:hi],
                          ids[lo:hi], settings, seed=seed)
        image[lo:hi] = out["fine"].color
        coarse_image[lo:hi] = out["coarse"].color
        opacity[lo:hi] = out["fine"].opacity
    shape = (camera.height, camera.width, 3)
    return RenderResult(image=image.reshape(shape),
                        coarse_image=coarse_image.reshape(shape),
                        opacity=opacity.reshape(camera.height, camera.width))
