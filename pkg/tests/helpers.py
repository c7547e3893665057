import math

import numpy as np


def half_space_comparison_holds(rng, size, mc_samples=20_000):
    """MC check of the determinant-ratio rectangle comparison on one random
    pair of nested covariances."""
    a = rng.standard_normal((size, size))
    sigma_x = a @ a.T + 0.3 * np.eye(size)
    b = rng.standard_normal((size, size)) * 0.6
    sigma_y = sigma_x + b @ b.T
    lo = rng.uniform(-2.0, 0.0, size)
    hi = lo + rng.uniform(0.5, 3.0, size)

    lx = np.linalg.cholesky(sigma_x)
    ly = np.linalg.cholesky(sigma_y)
    zx = rng.standard_normal((size, mc_samples))
    zy = rng.standard_normal((size, mc_samples))
    in_box = lambda pts: ((pts >= lo[:, None]) & (pts <= hi[:, None])).all(axis=0)
    px = in_box(lx @ zx).mean()
    py = in_box(ly @ zy).mean()
    ratio = math.sqrt(np.linalg.det(sigma_x) / np.linalg.det(sigma_y))
    se = math.sqrt(py * (1 - py) / mc_samples) + ratio * math.sqrt(
        px * (1 - px) / mc_samples
    )
    return py >= ratio * px - 3.0 * se
