"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

Set the environment variable ``MEMBRANE_NO_NUMBA=1`` before import to force
the numpy paths.  Both paths compute identical results; the jitted loops
early-exit per trial column, which is the main win for event indicators on
large sample batches.  Factorizations and triangular solves live in
scipy/LAPACK and are not re-implemented here.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("MEMBRANE_NO_NUMBA", "").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


# ---------------------------------------------------------------------------
# loop implementations (jitted when numba is active)

def _positivity_hits_loop(values):
    k, b = values.shape
    out = np.zeros(b, dtype=np.bool_)
    for j in range(b):
        hit = True
        for i in range(k):
            if values[i, j] < 0.0:
                hit = False
                break
        out[j] = hit
    return out


def _smallness_hits_loop(values, bounds):
    k, b = values.shape
    out = np.zeros(b, dtype=np.bool_)
    for j in range(b):
        hit = True
        for i in range(k):
            v = values[i, j]
            if v < 0.0:
                v = -v
            if v > bounds[i]:
                hit = False
                break
        out[j] = hit
    return out


def _pair_bound_max_loop(greens, coords, depths, dim):
    m = greens.shape[0]
    ncoord = coords.shape[1]
    best = 0.0
    for a in range(m):
        da2 = depths[a] * depths[a]
        for b in range(a, m):
            cheb = 0
            for t in range(ncoord):
                d = coords[a, t] - coords[b, t]
                if d < 0:
                    d = -d
                if d > cheb:
                    cheb = d
            g = greens[a, b]
            if g < 0.0:
                g = -g
            val = g * float(cheb + 1) ** dim / (da2 * depths[b] * depths[b])
            if val > best:
                best = val
    return best


def _greedy_cover_count_loop(dist, radius):
    # pick the uncovered point whose open ball covers the most uncovered
    # points (first index on ties); every pick covers itself, so this ends
    m = dist.shape[0]
    covered = np.zeros(m, dtype=np.bool_)
    remaining = m
    count = 0
    while remaining > 0:
        best_i = -1
        best_gain = -1
        for i in range(m):
            if covered[i]:
                continue
            gain = 0
            for j in range(m):
                if not covered[j] and dist[i, j] < radius:
                    gain += 1
            if gain > best_gain:
                best_gain = gain
                best_i = i
        count += 1
        for j in range(m):
            if dist[best_i, j] < radius and not covered[j]:
                covered[j] = True
                remaining -= 1
    return count


# ---------------------------------------------------------------------------
# numpy fallbacks (vectorized, no early exit)

def _positivity_hits_numpy(values):
    return (values >= 0.0).all(axis=0)


def _smallness_hits_numpy(values, bounds):
    return (np.abs(values) <= bounds[:, None]).all(axis=0)


def _pair_bound_max_numpy(greens, coords, depths, dim, chunk=256):
    m = greens.shape[0]
    inv_d2 = 1.0 / (depths * depths)
    best = 0.0
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        # pairwise Chebyshev distances for this block of rows
        diff = coords[start:stop, None, :] - coords[None, :, :]
        cheb = np.abs(diff).max(axis=2)
        vals = (
            np.abs(greens[start:stop, :])
            * (cheb + 1.0) ** dim
            * inv_d2[start:stop, None]
            * inv_d2[None, :]
        )
        best = max(best, float(vals.max()))
    return best


def _greedy_cover_count_numpy(dist, radius):
    m = dist.shape[0]
    within = dist < radius
    covered = np.zeros(m, dtype=bool)
    count = 0
    while not covered.all():
        gains = (within & ~covered[None, :]).sum(axis=1)
        gains[covered] = -1
        covered |= within[int(np.argmax(gains))]
        count += 1
    return count


if USE_NUMBA:
    positivity_hits = njit(cache=True)(_positivity_hits_loop)
    smallness_hits = njit(cache=True)(_smallness_hits_loop)
    pair_bound_max = njit(cache=True)(_pair_bound_max_loop)
    greedy_cover_count = njit(cache=True)(_greedy_cover_count_loop)
else:
    positivity_hits = _positivity_hits_numpy
    smallness_hits = _smallness_hits_numpy
    pair_bound_max = _pair_bound_max_numpy
    greedy_cover_count = _greedy_cover_count_numpy
