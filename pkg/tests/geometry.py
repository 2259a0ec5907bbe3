"""Shared (x, y, w, z) half-width geometries spanning both ratio-density cases."""

GEOMETRIES = [
    # case 1: x/w <= y/z
    (8.0, 10.0, 0.1, 0.1), (1.0, 1.0, 0.5, 0.5), (3.0, 10.0, 0.5, 0.2), (2.0, 4.0, 1.0, 0.3),
    (5.0, 6.0, 0.8, 0.5), (0.9, 1.0, 0.3, 0.1), (4.0, 8.0, 2.0, 1.0), (1.2, 9.0, 1.0, 0.5),
    (93.28, 100.0, 0.5, 0.5), (87.0, 100.0, 2.0, 0.5), (2.0, 3.0, 1.5, 0.5), (6.0, 20.0, 3.0, 2.0),
    # case 2: x/w > y/z
    (8.0, 10.0, 0.1, 0.4), (5.0, 5.0, 0.2, 1.0), (1.0, 2.0, 0.1, 0.9), (9.0, 10.0, 0.5, 2.0),
    (3.0, 3.5, 0.3, 1.5), (50.0, 60.0, 1.0, 10.0), (0.5, 1.0, 0.05, 0.3), (7.0, 7.5, 1.0, 3.0),
    (2.5, 4.0, 0.2, 3.5), (30.0, 100.0, 0.5, 5.0),
]


def is_case_one(x, y, w, z):
    return (x - w) / (y - z) <= (x + w) / (y + z)
