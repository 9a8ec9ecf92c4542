"""
Building and querying field cells
=================================

A radiance field pair is described by the depths and channels of each
density trunk. This demo builds the uniform 8x256 reference and a compact
variant, queries both, and shows where the parameters live.
"""

import numpy as np

from nerfsearch import (ArchitectureDescriptor, CellConfig, baseline_descriptor,
                        build_pair, count_params, field_query)

# the reference pair: two uniform 8-layer, 256-wide trunks
base = baseline_descriptor()
print("reference:", base.to_dict())
print(f"parameters: {count_params(base):,} ({count_params(base)/1e6:.2f}M)")

# a compact per-scene variant: tiny coarse cell, narrow fine cell
compact = ArchitectureDescriptor(
    coarse=CellConfig((2, 1, 1), (9, 11, 12)),
    fine=CellConfig((2, 1, 1), (16, 18, 20)))
print(f"\ncompact: {count_params(compact):,} parameters "
      f"({count_params(base)/count_params(compact):.1f}x smaller)")

# query a built field: density depends on position only, color also on view
coarse, fine = build_pair(compact, seed=0)
positions = np.random.default_rng(0).uniform(-1, 1, (4, 3))
directions = np.tile([0.0, 0.0, -1.0], (4, 1))
out = field_query(fine, positions, directions)
print("\ndensity per query:", np.round(out.density, 4))
print("rgb per query:\n", np.round(out.rgb, 4))

# layer map of the fine trunk (skip layer concatenates the encoded position)
for i, layer in enumerate(fine.trunk.layers):
    tag = "  <- skip" if i in fine.trunk.skip_inputs else ""
    print(f"trunk layer {i}: {layer.in_dim} -> {layer.out_dim}{tag}")
