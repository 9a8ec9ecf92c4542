"""Scene ingestion and generation.

Covers the de-facto transforms_{train,test}.json dataset layout, a desk-scale
procedural generator whose ground truth comes from a closed-form volume
rendering of constant-density spheres, and descriptor file persistence.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .field import ArchitectureDescriptor
from .render import Camera, generate_rays


@dataclass
class SceneDataset:
    """Posed float images with train/eval splits and integration bounds."""

    images: list[np.ndarray]
    cameras: list[Camera]
    train_indices: list[int]
    eval_indices: list[int]
    near: float
    far: float
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.images) != len(self.cameras):
            raise ValueError("one camera per image required")
        for i, (img, cam) in enumerate(zip(self.images, self.cameras)):
            if img.shape[:2] != (cam.height, cam.width):
                raise ValueError(f"frame {i}: image {img.shape[:2]} does not match "
                                 f"camera {(cam.height, cam.width)}")
        if set(self.train_indices) & set(self.eval_indices):
            raise ValueError("train/eval splits must be disjoint")


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    rgb: tuple[float, float, float]
    density: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        if self.density < 0:
            raise ValueError("sphere density must be non-negative")


@dataclass
class ProceduralSceneSpec:
    """Colored constant-density spheres viewed from a camera ring."""

    spheres: list[Sphere]
    image_size: tuple[int, int] = (64, 64)
    n_train: int = 20
    n_eval: int = 5
    ring_radius: float = 4.0
    elevation_deg: float = 25.0
    fov_x: float = 0.9
    seed: int = 0
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bound: float = 1.3

    def __post_init__(self):
        for s in self.spheres:
            if np.linalg.norm(s.center) + s.radius > self.bound + 1e-9:
                raise ValueError(f"sphere at {s.center} exceeds the scene bound "
                                 f"{self.bound}")


def default_scene_spec(seed: int = 0) -> ProceduralSceneSpec:
    """Three seeded spheres on a ring of 20 train / 5 eval cameras."""
    rng = np.random.default_rng([seed, 7])
    spheres = []
    offsets = [(0.55, 0.0), (-0.45, 0.4), (-0.1, -0.55)]
    for k, (ox, oy) in enumerate(offsets):
        center = (ox + 0.08 * rng.uniform(-1, 1), oy + 0.08 * rng.uniform(-1, 1),
                  0.25 * rng.uniform(-1, 1))
        radius = 0.3 + 0.12 * rng.uniform()
        rgb = tuple(0.15 + 0.8 * rng.uniform(size=3))
        density = 6.0 + 6.0 * rng.uniform()
        spheres.append(Sphere(center=center, radius=float(radius),
                              rgb=rgb, density=float(density)))
    return ProceduralSceneSpec(spheres=spheres, seed=seed)


class AnalyticSphereField:
    """Exact density/color field of overlapping constant-density spheres.

    Provides the same query interface as a learned field so the volumetric
    renderer can be run on it, plus a closed-form renderer that integrates
    the transmittance exactly along each ray.
    """

    OPAQUE_DENSITY = 1e9  # infinite density is modeled as a saturating value

    def __init__(self, spheres: list[Sphere],
                 background: tuple[float, float, float] = (1.0, 1.0, 1.0)):
        self.spheres = spheres
        self.background = background
        self.centers = np.array([s.center for s in spheres], dtype=np.float64)
        self.radii = np.array([s.radius for s in spheres], dtype=np.float64)
        self.colors = np.array([s.rgb for s in spheres], dtype=np.float64)
        dens = np.array([s.density for s in spheres], dtype=np.float64)
        self.densities = np.where(np.isinf(dens), self.OPAQUE_DENSITY, dens)

    def query(self, positions: np.ndarray, directions: np.ndarray = None):
        """Density and emitted color at points; direction is ignored."""
        p = np.asarray(positions, dtype=np.float64)
        if len(self.spheres) == 0:
            return np.zeros(p.shape[0]), np.zeros((p.shape[0], 3))
        d2 = np.sum((p[:, None, :] - self.centers[None, :, :]) ** 2, axis=2)
        inside = d2 <= (self.radii ** 2)[None, :]
        sig_per = inside * self.densities[None, :]
        sigma = sig_per.sum(axis=1)
        rgb = sig_per @ self.colors
        nz = sigma > 0
        rgb[nz] /= sigma[nz, None]
        return sigma, rgb

    def _intersections(self, origins: np.ndarray, dirs: np.ndarray,
                       near: float, far: float):
        """Entry/exit ray parameters per sphere, clipped to [near, far]."""
        oc = origins[:, None, :] - self.centers[None, :, :]
        b = np.einsum("rsk,rk->rs", oc, dirs)
        c = np.sum(oc * oc, axis=2) - (self.radii ** 2)[None, :]
        disc = b * b - c
        hit = disc > 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t_in = np.where(hit, -b - sq, near)
        t_out = np.where(hit, -b + sq, near)
        t_in = np.clip(t_in, near, far)
        t_out = np.clip(t_out, near, far)
        return t_in, t_out

    def render_exact(self, camera: Camera, near: float, far: float) -> np.ndarray:
        """Closed-form volume rendering; exact up to float precision."""
        origins, dirs = generate_rays(camera)
        n = origins.shape[0]
        bg = np.asarray(self.background, dtype=np.float64)
        if len(self.spheres) == 0:
            return np.broadcast_to(bg, (camera.height, camera.width, 3)).copy()
        t_in, t_out = self._intersections(origins, dirs, near, far)
        edges = np.concatenate(
            [np.full((n, 1), near), np.full((n, 1), far), t_in, t_out], axis=1)
        edges = np.sort(edges, axis=1)
        mids = 0.5 * (edges[:, :-1] + edges[:, 1:])
        seg_len = edges[:, 1:] - edges[:, :-1]
        covered = (mids[:, :, None] >= t_in[:, None, :]) & \
                  (mids[:, :, None] < t_out[:, None, :])
        sig_per = covered * self.densities[None, None, :]
        sigma = sig_per.sum(axis=2)
        rgb = sig_per @ self.colors
        nz = sigma > 0
        rgb[nz] /= sigma[nz, None]
        # exact transmittance through piecewise-constant density
        optical = np.where(seg_len > 0, sigma * seg_len, 0.0)
        alpha = -np.expm1(-optical)
        trans = np.cumprod(1.0 - alpha, axis=1)
        trans = np.concatenate([np.ones((n, 1)), trans[:, :-1]], axis=1)
        weights = trans * alpha
        color = (weights[:, :, None] * rgb).sum(axis=1)
        color += (1.0 - weights.sum(axis=1))[:, None] * bg
        return color.reshape(camera.height, camera.width, 3)


def _look_at_pose(eye: np.ndarray, target: np.ndarray,
                  up=(0.0, 0.0, 1.0)) -> np.ndarray:
    forward = target - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = cam_up
    pose[:3, 2] = -forward  # camera looks along -z
    pose[:3, 3] = eye
    return pose


def _ring_cameras(spec: ProceduralSceneSpec, count: int, phase: float) -> list[Camera]:
    w, h = spec.image_size
    elev = math.radians(spec.elevation_deg)
    cams = []
    for k in range(count):
        az = phase + 2.0 * math.pi * k / count
        eye = spec.ring_radius * np.array([
            math.cos(az) * math.cos(elev),
            math.sin(az) * math.cos(elev),
            math.sin(elev)])
        cams.append(Camera(pose=_look_at_pose(eye, np.zeros(3)),
                           fov_x=spec.fov_x, width=w, height=h))
    return cams


def scene_bounds(spec: ProceduralSceneSpec) -> tuple[float, float]:
    near = spec.ring_radius - spec.bound - 0.2
    far = spec.ring_radius + spec.bound + 0.2
    return max(near, 0.05), far


def generate_procedural(spec: ProceduralSceneSpec
                        ) -> tuple[SceneDataset, AnalyticSphereField]:
    """Dataset whose images are the closed-form renders of the sphere field."""
    oracle = AnalyticSphereField(spec.spheres, spec.background)
    near, far = scene_bounds(spec)
    train_cams = _ring_cameras(spec, spec.n_train, phase=0.0)
    eval_cams = _ring_cameras(spec, spec.n_eval,
                              phase=math.pi / max(spec.n_eval, 1) * 0.37)
    cameras = train_cams + eval_cams
    images = [oracle.render_exact(cam, near, far).astype(np.float32)
              for cam in cameras]
    dataset = SceneDataset(
        images=images, cameras=cameras,
        train_indices=list(range(spec.n_train)),
        eval_indices=list(range(spec.n_train, spec.n_train + spec.n_eval)),
        near=near, far=far, background=spec.background)
    return dataset, oracle


def spec_to_dict(spec: ProceduralSceneSpec) -> dict:
    return {
        "spheres": [{"center": list(s.center), "radius": s.radius,
                     "rgb": list(s.rgb), "density": s.density}
                    for s in spec.spheres],
        "image_size": list(spec.image_size),
        "n_train": spec.n_train, "n_eval": spec.n_eval,
        "ring_radius": spec.ring_radius, "elevation_deg": spec.elevation_deg,
        "fov_x": spec.fov_x, "seed": spec.seed,
        "background": list(spec.background), "bound": spec.bound,
    }


def spec_from_dict(d: dict) -> ProceduralSceneSpec:
    spheres = [Sphere(center=tuple(s["center"]), radius=float(s["radius"]),
                      rgb=tuple(s["rgb"]), density=float(s["density"]))
               for s in d["spheres"]]
    return ProceduralSceneSpec(
        spheres=spheres, image_size=tuple(d.get("image_size", (64, 64))),
        n_train=int(d.get("n_train", 20)), n_eval=int(d.get("n_eval", 5)),
        ring_radius=float(d.get("ring_radius", 4.0)),
        elevation_deg=float(d.get("elevation_deg", 25.0)),
        fov_x=float(d.get("fov_x", 0.9)), seed=int(d.get("seed", 0)),
        background=tuple(d.get("background", (1.0, 1.0, 1.0))),
        bound=float(d.get("bound", 1.3)))


def save_image_png(path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def load_image_float(path) -> np.ndarray:
    return np.asarray(Image.open(path), dtype=np.float32) / 255.0


def save_blender(dataset: SceneDataset, out_dir, extras: dict | None = None) -> None:
    """Write the dataset in the transforms_{split}.json + PNG layout."""
    out = Path(out_dir)
    for split, indices in (("train", dataset.train_indices),
                           ("test", dataset.eval_indices)):
        (out / split).mkdir(parents=True, exist_ok=True)
        frames = []
        for j, idx in enumerate(indices):
            cam = dataset.cameras[idx]
            rel = f"./{split}/r_{j}"
            save_image_png(out / split / f"r_{j}.png", dataset.images[idx])
            frames.append({"file_path": rel,
                           "transform_matrix": cam.pose.tolist()})
        payload = {"camera_angle_x": dataset.cameras[indices[0]].fov_x,
                   "frames": frames}
        with open(out / f"transforms_{split}.json", "w") as fh:
            json.dump(payload, fh, indent=1)
    meta = {"near": dataset.near, "far": dataset.far,
            "background": list(dataset.background)}
    if extras:
        meta.update(extras)
    with open(out / "scene_meta.json", "w") as fh:
        json.dump(meta, fh, indent=1)


def load_blender(directory, background: tuple[float, float, float] = (1.0, 1.0, 1.0),
                 near: float | None = None, far: float | None = None) -> SceneDataset:
    """Load a transforms_{train,test}.json dataset.

    RGBA frames are alpha-composited onto the background; poses are taken as
    camera-to-world. scene_meta.json, when present, supplies near/far and the
    background unless overridden.
    """
    root = Path(directory)
    meta_path = root / "scene_meta.json"
    meta = {}
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
    if near is None:
        near = float(meta.get("near", 2.0))
    if far is None:
        far = float(meta.get("far", 6.0))
    if "background" in meta:
        background = tuple(meta["background"])

    images: list[np.ndarray] = []
    cameras: list[Camera] = []
    splits: dict[str, list[int]] = {}
    for split in ("train", "test"):
        tpath = root / f"transforms_{split}.json"
        if not tpath.exists():
            raise FileNotFoundError(f"missing {tpath}")
        with open(tpath) as fh:
            payload = json.load(fh)
        if "camera_angle_x" not in payload:
            raise ValueError(f"{tpath}: missing camera_angle_x")
        fov_x = float(payload["camera_angle_x"])
        indices = []
        for k, frame in enumerate(payload.get("frames", [])):
            for key in ("file_path", "transform_matrix"):
                if key not in frame:
                    raise ValueError(f"{tpath}: frame {k} missing {key!r}")
            img = _load_frame_image(root, frame["file_path"], background)
            pose = np.asarray(frame["transform_matrix"], dtype=np.float64)
            if pose.shape != (4, 4) or abs(np.linalg.det(pose[:3, :3])) < 1e-8:
                raise ValueError(f"{tpath}: frame {k} has a degenerate pose")
            cam = Camera(pose=pose, fov_x=fov_x,
                         width=img.shape[1], height=img.shape[0])
            indices.append(len(images))
            images.append(img)
            cameras.append(cam)
        splits[split] = indices
    return SceneDataset(images=images, cameras=cameras,
                        train_indices=splits["train"],
                        eval_indices=splits["test"],
                        near=near, far=far, background=background)


def _load_frame_image(root: Path, file_path: str, background) -> np.ndarray:
    rel = file_path[2:] if file_path.startswith("./") else file_path
    candidates = [root / rel, root / (rel + ".png")]
    for cand in candidates:
        if cand.exists():
            try:
                arr = np.asarray(Image.open(cand), dtype=np.float32) / 255.0
            except Exception as exc:
                raise ValueError(f"unreadable image {cand}: {exc}") from exc
            if arr.ndim == 2:
                arr = np.repeat(arr[..., None], 3, axis=2)
            if arr.shape[2] == 4:
                a = arr[..., 3:4]
                bg = np.asarray(background, dtype=np.float32)
                arr = arr[..., :3] * a + bg * (1.0 - a)
            return arr[..., :3]
    raise FileNotFoundError(f"frame image not found for {file_path!r} under {root}")


def save_descriptor(path, descriptor: ArchitectureDescriptor) -> None:
    """Write the canonical byte-stable JSON form."""
    with open(path, "wb") as fh:
        fh.write(descriptor.canonical_json().encode("ascii"))


def load_descriptor(path) -> ArchitectureDescriptor:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed descriptor JSON: {exc}") from exc
    return ArchitectureDescriptor.from_dict(payload)
