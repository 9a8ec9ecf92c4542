"""Golden cost-model expectations for the reference architecture family.

Each row: scene label, size tier, coarse (depths, channels), fine
(depths, channels), expected parameter count in millions at two decimals,
and the expected FLOPs efficiency ratio against the uniform 8x256 pair.
"""

BASELINE_PARAMS_M = 1.09
BASELINE_FLOPS_G = 574.14

# (scene, size, coarse_depths, coarse_channels, fine_depths, fine_channels,
#  params_M, er_flops)
REFERENCE_ROWS = [
    ("chair", "s", (2, 1, 1), (9, 11, 12), (3, 1, 2), (200, 207, 214), 0.32, 2.42),
    ("chair", "xs", (2, 1, 1), (12, 12, 12), (3, 1, 2), (53, 57, 61), 0.08, 11.82),
    ("chair", "xxs", (2, 1, 1), (9, 11, 12), (2, 1, 1), (16, 18, 20), 0.05, 20.49),
    ("drums", "s", (2, 1, 1), (9, 11, 12), (3, 1, 2), (200, 207, 214), 0.32, 2.42),
    ("drums", "xs", (2, 1, 1), (20, 20, 20), (3, 1, 2), (53, 57, 61), 0.08, 11.65),
    ("drums", "xxs", (2, 1, 1), (12, 12, 12), (2, 1, 1), (16, 18, 20), 0.05, 20.45),
    ("ficus", "s", (2, 1, 1), (12, 12, 12), (3, 1, 2), (214, 214, 214), 0.33, 2.32),
    ("ficus", "xs", (2, 1, 1), (9, 11, 12), (2, 1, 1), (167, 174, 180), 0.18, 4.34),
    ("ficus", "xxs", (2, 1, 1), (9, 11, 12), (2, 1, 1), (33, 36, 39), 0.06, 16.80),
    ("hotdog", "s", (2, 1, 1), (9, 11, 12), (3, 1, 2), (200, 207, 214), 0.32, 2.42),
    ("hotdog", "xs", (2, 1, 1), (12, 12, 12), (3, 1, 2), (51, 51, 51), 0.07, 13.05),
    ("hotdog", "xxs", (2, 1, 1), (12, 12, 12), (2, 1, 1), (9, 11, 12), 0.05, 22.10),
    ("lego", "s", (2, 1, 1), (100, 104, 109), (3, 1, 2), (214, 214, 214), 0.39, 2.19),
    ("lego", "xs", (2, 1, 1), (12, 12, 12), (4, 1, 3), (64, 64, 64), 0.09, 9.73),
    ("lego", "xxs", (2, 1, 1), (16, 18, 20), (2, 1, 1), (20, 20, 20), 0.05, 19.78),
    ("materials", "s", (2, 1, 1), (16, 18, 20), (2, 1, 1), (180, 180, 180), 0.19, 4.19),
    ("materials", "xs", (2, 1, 1), (12, 12, 12), (3, 1, 2), (51, 51, 51), 0.07, 13.05),
    ("materials", "xxs", (2, 1, 1), (9, 11, 12), (2, 1, 1), (16, 18, 20), 0.05, 20.49),
    ("mic", "s", (4, 1, 3), (56, 60, 64), (2, 1, 1), (180, 180, 180), 0.23, 3.92),
    ("mic", "xs", (2, 1, 1), (9, 11, 12), (2, 1, 1), (33, 36, 39), 0.06, 16.80),
    ("mic", "xxs", (2, 1, 1), (12, 12, 12), (2, 1, 1), (16, 18, 20), 0.05, 20.45),
    ("ship", "s", (2, 1, 1), (9, 11, 12), (3, 1, 2), (200, 207, 214), 0.32, 2.42),
    ("ship", "xs", (2, 1, 1), (12, 12, 12), (2, 1, 1), (33, 36, 39), 0.06, 16.77),
    ("ship", "xxs", (2, 1, 1), (9, 11, 12), (2, 1, 1), (12, 12, 12), 0.05, 21.99),
]


def row_descriptor(row):
    from nerfsearch.field import ArchitectureDescriptor, CellConfig
    _, _, cd, cc, fd, fc, _, _ = row
    return ArchitectureDescriptor(coarse=CellConfig(cd, cc),
                                  fine=CellConfig(fd, fc))
