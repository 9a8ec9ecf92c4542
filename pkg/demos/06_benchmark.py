"""
Throughput vs analytic cost
===========================

Renders a small fixed frame with architectures of different sizes and
compares measured speedups against the analytic FLOPs efficiency ratio.
Absolute FPS depends on the machine; the ordering should not.
"""

from nerfsearch import (ArchitectureDescriptor, CellConfig, baseline_descriptor,
                        er_flops)
from nerfsearch.cost import BenchSettings, measure_render_seconds

variants = {
    "s": ArchitectureDescriptor(CellConfig((2, 1, 1), (9, 11, 12)),
                                CellConfig((3, 1, 2), (200, 207, 214))),
    "xs": ArchitectureDescriptor(CellConfig((2, 1, 1), (12, 12, 12)),
                                 CellConfig((3, 1, 2), (53, 57, 61))),
    "xxs": ArchitectureDescriptor(CellConfig((2, 1, 1), (9, 11, 12)),
                                  CellConfig((2, 1, 1), (16, 18, 20))),
}

settings = BenchSettings(width=24, height=24, n_coarse=16, n_fine=32)
base_secs = measure_render_seconds(baseline_descriptor(), settings,
                                   repetitions=3)
print(f"reference frame: {base_secs*1000:.0f} ms "
      f"({1/base_secs:.2f} fps)\n")
print(f"{'variant':<6} {'fps':>8} {'speedup':>8} {'ER flops':>9}")
for name, desc in variants.items():
    secs = measure_render_seconds(desc, settings, repetitions=3)
    print(f"{name:<6} {1/secs:>8.2f} {base_secs/secs:>7.2f}x "
          f"{er_flops(desc):>8.2f}x")
