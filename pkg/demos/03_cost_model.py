"""
Analytic cost model
===================

Parameter counts are exact; FLOPs follow the frozen convention (one MAC per
weight, bias adds included, per-query overhead 884, workload 4096 rays at
64 + 192 queries per ray). Efficiency ratios divide the reference cost by
the candidate cost and do not depend on the convention's scale.
"""

from nerfsearch import (ArchitectureDescriptor, CellConfig, baseline_descriptor,
                        cost_report, count_params, er_flops, er_params)

variants = {
    "chair_s": ArchitectureDescriptor(CellConfig((2, 1, 1), (9, 11, 12)),
                                      CellConfig((3, 1, 2), (200, 207, 214))),
    "chair_xs": ArchitectureDescriptor(CellConfig((2, 1, 1), (12, 12, 12)),
                                       CellConfig((3, 1, 2), (53, 57, 61))),
    "chair_xxs": ArchitectureDescriptor(CellConfig((2, 1, 1), (9, 11, 12)),
                                        CellConfig((2, 1, 1), (16, 18, 20))),
}

base = cost_report(baseline_descriptor())
print(f"{'architecture':<12} {'params(M)':>10} {'flops(G)':>10} "
      f"{'ER params':>10} {'ER flops':>9}")
print(f"{'reference':<12} {base.params_m:>10.2f} {base.flops_g:>10.2f} "
      f"{1.0:>10.2f} {1.0:>9.2f}")
for name, desc in variants.items():
    rep = cost_report(desc)
    print(f"{name:<12} {rep.params_m:>10.2f} {rep.flops_g:>10.2f} "
          f"{er_params(desc):>10.2f} {er_flops(desc):>9.2f}")
