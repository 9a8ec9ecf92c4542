"""Parameterized radiance field cell: sinusoidal encoders, a three-stage
density trunk whose depths/channels are searchable, and a fixed radiance head.

Trunk wiring for depths (D1, 1, D3) and channels (C1, C2, C3), with P the
encoded-position width:

    stage 1:  [P -> C1] + [C1 -> C1] * (D1 - 2) + [C1 -> C2]
    stage 2:  [(C2 + P) -> C3]          (skip: encoded position concatenated)
    stage 3:  [C3 -> C3] * D3

so each stage's last layer transitions into the next stage's width, and the
single stage-2 layer carries the skip connection. With D1 = 1 stage 1 is the
single layer [P -> C2]. The classic uniform 8x256 field is exactly
(4, 1, 3) x (256, 256, 256): eight layers with the skip entering layer five.
The radiance head is fixed: a density layer [C3 -> 1] with ReLU, and a color
path [(C3 + Q) -> H] -> [H -> H] -> [H -> 3] with sigmoid output, H = 128 and
Q the encoded-direction width.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .nn import Mlp, mlp_backward, mlp_forward, max_relative_error, require_finite

SCHEMA_VERSION = 1
DEFAULT_POS_L = 10
DEFAULT_DIR_L = 4
DEFAULT_HEAD_WIDTH = 128


@dataclass(frozen=True)
class CellConfig:
    """Depths (D1, D2, D3) and channels (C1, C2, C3) of one density trunk."""

    depths: tuple[int, int, int]
    channels: tuple[int, int, int]

    def __post_init__(self):
        d1, d2, d3 = self.depths
        if d2 != 1:
            raise ValueError(f"middle stage must be exactly one layer, got D2={d2}")
        if min(self.depths) < 1:
            raise ValueError(f"depths must be >= 1, got {self.depths}")
        if min(self.channels) < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")

    def to_dict(self) -> dict:
        return {"depths": list(self.depths), "channels": list(self.channels)}

    @classmethod
    def from_dict(cls, d: dict) -> "CellConfig":
        return cls(tuple(int(x) for x in d["depths"]),
                   tuple(int(x) for x in d["channels"]))


BASELINE_CELL = CellConfig((4, 1, 3), (256, 256, 256))


@dataclass(frozen=True)
class PositionalEncoding:
    """Sinusoidal encoding with L frequency bands, optionally keeping the raw
    input. Output layout per input vector: [raw | sin(2^0 pi v), cos(2^0 pi v)
    | ... | sin(2^(L-1) pi v), cos(2^(L-1) pi v)], each block input-dim wide.
    """

    num_frequencies: int
    include_raw_input: bool = True

    def out_dim(self, in_dim: int) -> int:
        return in_dim * ((1 if self.include_raw_input else 0) + 2 * self.num_frequencies)


def encode(v: np.ndarray, enc: PositionalEncoding) -> np.ndarray:
    """Encode vectors [N, dim] (or a single [dim] vector)."""
    v = np.asarray(v)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    require_finite(v, "encoder input")
    n, dim = v.shape
    L = enc.num_frequencies
    freqs = ((2.0 ** np.arange(L)) * np.pi).astype(v.dtype)
    args = v[:, None, :] * freqs[None, :, None]          # [N, L, dim]
    blocks = np.empty((n, L, 2, dim), dtype=v.dtype)
    np.sin(args, out=blocks[:, :, 0, :])
    np.cos(args, out=blocks[:, :, 1, :])
    if enc.include_raw_input:
        out = np.concatenate([v, blocks.reshape(n, 2 * L * dim)], axis=1)
    else:
        out = blocks.reshape(n, 2 * L * dim)
    return out[0] if single else out


def cell_layer_dims(config: CellConfig, pos_dim: int) -> tuple[list[tuple[int, int]], int]:
    """Trunk layer (in, out) pairs and the index of the skip layer."""
    d1, _, d3 = config.depths
    c1, c2, c3 = config.channels
    dims: list[tuple[int, int]] = []
    if d1 == 1:
        dims.append((pos_dim, c2))
    else:
        dims.append((pos_dim, c1))
        dims.extend([(c1, c1)] * (d1 - 2))
        dims.append((c1, c2))
    skip_index = len(dims)
    dims.append((c2 + pos_dim, c3))
    dims.extend([(c3, c3)] * d3)
    return dims, skip_index


@dataclass
class FieldOutput:
    """Per-query density (>= 0, opacity per world unit) and rgb in [0, 1]."""

    density: np.ndarray
    rgb: np.ndarray


@dataclass
class RadianceField:
    config: CellConfig
    pos_enc: PositionalEncoding
    dir_enc: PositionalEncoding
    head_width: int
    trunk: Mlp
    density_head: Mlp
    color_head: Mlp

    def parameters(self) -> list[np.ndarray]:
        return (self.trunk.parameters() + self.density_head.parameters()
                + self.color_head.parameters())

    def named_parameters(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for part_name, part in (("trunk", self.trunk), ("density", self.density_head),
                                ("color", self.color_head)):
            for i, layer in enumerate(part.layers):
                out[f"{prefix}{part_name}.{i}.w"] = layer.weights
                out[f"{prefix}{part_name}.{i}.b"] = layer.bias
        return out

    @property
    def n_params(self) -> int:
        return self.trunk.n_params + self.density_head.n_params + self.color_head.n_params

    @property
    def dtype(self):
        return self.trunk.dtype

    def astype(self, dtype) -> "RadianceField":
        return RadianceField(self.config, self.pos_enc, self.dir_enc, self.head_width,
                             self.trunk.astype(dtype), self.density_head.astype(dtype),
                             self.color_head.astype(dtype))

    def query(self, positions: np.ndarray, directions: np.ndarray,
              record: bool = False) -> FieldOutput:
        return field_query(self, positions, directions, record=record)


def build_field(
    config: CellConfig,
    pos_enc: PositionalEncoding | None = None,
    dir_enc: PositionalEncoding | None = None,
    head_width: int = DEFAULT_HEAD_WIDTH,
    seed: int = 0,
    dtype=np.float32,
) -> RadianceField:
    """Construct a field with deterministic per-layer initialization."""
    pos_enc = pos_enc or PositionalEncoding(DEFAULT_POS_L)
    dir_enc = dir_enc or PositionalEncoding(DEFAULT_DIR_L)
    p = pos_enc.out_dim(3)
    q = dir_enc.out_dim(3)
    dims, skip_index = cell_layer_dims(config, p)
    c3 = config.channels[2]
    trunk = Mlp.from_dims(dims, ["relu"] * len(dims), {skip_index: "pos"},
                          seed=(seed, 0), dtype=dtype)
    density_head = Mlp.from_dims([(c3, 1)], ["relu"], seed=(seed, 1), dtype=dtype)
    color_head = Mlp.from_dims(
        [(c3 + q, head_width), (head_width, head_width), (head_width, 3)],
        ["relu", "relu", "sigmoid"], seed=(seed, 2), dtype=dtype)
    return RadianceField(config, pos_enc, dir_enc, head_width,
                         trunk, density_head, color_head)


def field_query(field: RadianceField, positions: np.ndarray, directions: np.ndarray,
                record: bool = False) -> FieldOutput:
    """Evaluate density and view-dependent color for a batch of queries.

    Directions must be unit vectors (within 1e-6); density depends only on
    position because the direction enters after the density head's input.
    """
    positions = np.asarray(positions)
    directions = np.asarray(directions)
    if positions.shape != directions.shape or positions.shape[-1] != 3:
        raise ValueError("positions and directions must both be [N, 3]")
    require_finite(positions, "positions")
    require_finite(directions, "directions")
    norms = np.linalg.norm(directions, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("directions must be unit-norm within 1e-6")
    p_enc = encode(positions.astype(field.dtype, copy=False), field.pos_enc)
    d_enc = encode(directions.astype(field.dtype, copy=False), field.dir_enc)
    h = mlp_forward(field.trunk, p_enc, {"pos": p_enc}, record=record)
    density = mlp_forward(field.density_head, h, record=record)[:, 0]
    rgb = mlp_forward(field.color_head, np.concatenate([h, d_enc], axis=1),
                      record=record)
    return FieldOutput(density=density, rgb=rgb)


def field_backward(field: RadianceField, d_density: np.ndarray,
                   d_rgb: np.ndarray) -> list[np.ndarray]:
    """Gradients for all field parameters, aligned with field.parameters().

    Requires a preceding field_query with record=True.
    """
    c3 = field.config.channels[2]
    dt = field.dtype
    d_density = np.asarray(d_density, dtype=dt)
    d_rgb = np.asarray(d_rgb, dtype=dt)
    gd = mlp_backward(field.density_head, d_density[:, None])
    gc = mlp_backward(field.color_head, d_rgb)
    d_trunk_out = gd.input_grad + gc.input_grad[:, :c3]
    gt = mlp_backward(field.trunk, d_trunk_out)
    return gt.flat() + gd.flat() + gc.flat()


def field_gradient_check(field: RadianceField, positions: np.ndarray,
                         directions: np.ndarray, h: float = 1e-5) -> float:
    """Finite-difference check over every field parameter (float64 field)."""
    if field.dtype != np.float64:
        raise ValueError("field_gradient_check requires a float64 field")

    def loss_fn():
        out = field_query(field, positions, directions, record=True)
        loss = float(out.density.sum() + out.rgb.sum())
        grads = field_backward(field, np.ones_like(out.density), np.ones_like(out.rgb))
        return loss, grads

    return max_relative_error(loss_fn, field.parameters(), h=h)


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """Canonical serialized form of a coarse/fine field pair.

    The JSON field order is fixed so the byte representation is stable for
    hashing and golden-file comparison.
    """

    coarse: CellConfig
    fine: CellConfig
    pos_enc_L: int = DEFAULT_POS_L
    dir_enc_L: int = DEFAULT_DIR_L
    head_width: int = DEFAULT_HEAD_WIDTH

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "coarse": self.coarse.to_dict(),
            "fine": self.fine.to_dict(),
            "pos_enc_L": self.pos_enc_L,
            "dir_enc_L": self.dir_enc_L,
            "head_width": self.head_width,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDescriptor":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported descriptor schema_version {d.get('schema_version')!r}, "
                f"expected {SCHEMA_VERSION}")
        return cls(
            coarse=CellConfig.from_dict(d["coarse"]),
            fine=CellConfig.from_dict(d["fine"]),
            pos_enc_L=int(d["pos_enc_L"]),
            dir_enc_L=int(d["dir_enc_L"]),
            head_width=int(d["head_width"]),
        )


def baseline_descriptor() -> ArchitectureDescriptor:
    """The uniform 8x256 coarse/fine reference architecture."""
    return ArchitectureDescriptor(coarse=BASELINE_CELL, fine=BASELINE_CELL)


def build_pair(descriptor: ArchitectureDescriptor, seed: int = 0,
               dtype=np.float32) -> tuple[RadianceField, RadianceField]:
    """Build independently initialized coarse and fine fields."""
    pos_enc = PositionalEncoding(descriptor.pos_enc_L)
    dir_enc = PositionalEncoding(descriptor.dir_enc_L)
    coarse = build_field(descriptor.coarse, pos_enc, dir_enc, descriptor.head_width,
                         seed=(seed, 10))
    fine = build_field(descriptor.fine, pos_enc, dir_enc, descriptor.head_width,
                       seed=(seed, 11))
    if dtype is not np.float32:
        coarse, fine = coarse.astype(dtype), fine.astype(dtype)
    return coarse, fine
