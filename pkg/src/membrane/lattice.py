"""Geometry of the centered lattice box [-N, N]^n.

Sites are integer n-tuples; the box of half-side N holds (2N+1)^n sites.
Dense indexing is row-major over coordinates (last coordinate fastest),
which makes site <-> index conversion pure arithmetic.
"""

from dataclasses import dataclass

import numpy as np


class BoxDomain:
    """Lattice box of half-side N in dimension n (2 or 3).

    Immutable after construction; coordinate and boundary-distance tables
    are precomputed so concurrent readers never mutate shared state.
    """

    def __init__(self, n: int, N: int):
        if n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {n}")
        if N < 0:
            raise ValueError(f"half-side must be nonnegative, got {N}")
        self.n = n
        self.N = N
        self.side = 2 * N + 1
        self.site_count = self.side**n
        axes = [np.arange(-N, N + 1, dtype=np.int64)] * n
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = np.stack([m.ravel() for m in mesh], axis=1)
        self.depths = (N + 1 - np.abs(self.coords).max(axis=1)).astype(np.int64)
        # strides for row-major index arithmetic
        self._strides = self.side ** np.arange(n - 1, -1, -1, dtype=np.int64)

    # largest k with a nonempty annulus {2^k <= depth < 2^(k+1)};
    # depths range over [1, N+1], so this is floor(log2(N+1))
    @property
    def max_annulus_index(self) -> int:
        return (self.N + 1).bit_length() - 1

    def contains(self, site) -> bool:
        return all(abs(int(c)) <= self.N for c in site)

    def index_of(self, site) -> int:
        """Dense row-major index of a site; raises if outside the box."""
        if len(site) != self.n or not self.contains(site):
            raise ValueError(f"site {tuple(site)} outside box N={self.N}, n={self.n}")
        return int(((np.asarray(site, dtype=np.int64) + self.N) * self._strides).sum())

    def indices_of(self, sites: np.ndarray) -> np.ndarray:
        """Vectorized index_of for an (m, n) integer array of in-box sites."""
        return (sites + self.N) @ self._strides

    def site_of(self, index: int):
        if not 0 <= index < self.site_count:
            raise ValueError(f"index {index} out of range")
        return tuple(int(c) for c in self.coords[index])

    def __eq__(self, other):
        return isinstance(other, BoxDomain) and (self.n, self.N) == (other.n, other.N)

    def __hash__(self):
        return hash((self.n, self.N))

    def __repr__(self):
        return f"BoxDomain(n={self.n}, N={self.N})"


@dataclass(frozen=True)
class SiteSet:
    """Finite set of in-box sites, stored as sorted dense indices."""

    domain: BoxDomain
    indices: np.ndarray

    @classmethod
    def from_sites(cls, domain: BoxDomain, sites) -> "SiteSet":
        arr = np.asarray(sites, dtype=np.int64).reshape(-1, domain.n)
        if arr.size and np.abs(arr).max() > domain.N:
            raise ValueError("site outside the ambient box")
        idx = np.unique(domain.indices_of(arr)) if arr.size else np.empty(0, np.int64)
        return cls(domain, idx)

    @classmethod
    def from_indices(cls, domain: BoxDomain, indices) -> "SiteSet":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= domain.site_count):
            raise ValueError("index outside the ambient box")
        return cls(domain, idx)

    @property
    def sites(self) -> np.ndarray:
        return self.domain.coords[self.indices]

    def __len__(self):
        return int(self.indices.size)

    def __contains__(self, site):
        if not self.domain.contains(site):
            return False
        i = self.domain.index_of(site)
        pos = np.searchsorted(self.indices, i)
        return pos < len(self.indices) and self.indices[pos] == i

    def write_text(self, path) -> None:
        """Line-oriented dump: header ``n N count``, one site per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.domain.n} {self.domain.N} {len(self)}\n")
            for row in self.sites:
                fh.write(" ".join(str(int(c)) for c in row) + "\n")

    @classmethod
    def read_text(cls, path) -> "SiteSet":
        with open(path, "r", encoding="utf-8") as fh:
            n, N, count = (int(t) for t in fh.readline().split())
            sites = [
                tuple(int(t) for t in fh.readline().split()) for _ in range(count)
            ]
        domain = BoxDomain(n, N)
        out = cls.from_sites(domain, np.array(sites, dtype=np.int64).reshape(count, n))
        if len(out) != count:
            raise ValueError("duplicate sites in file")
        return out


def boundary_distance(domain: BoxDomain, site) -> int:
    """sup-norm distance from ``site`` to the complement of the box.

    Equals N + 1 - max_i |x_i|; positive for every in-box site.
    """
    if not domain.contains(site) or len(site) != domain.n:
        raise ValueError(f"site {tuple(site)} outside box N={domain.N}")
    return domain.N + 1 - max(abs(int(c)) for c in site)


def directional_distance(domain: BoxDomain, site, axis: int) -> int:
    """Distance to the boundary slab in coordinate direction ``axis`` (1-based)."""
    if not 1 <= axis <= domain.n:
        raise ValueError(f"axis must be in 1..{domain.n}, got {axis}")
    if not domain.contains(site) or len(site) != domain.n:
        raise ValueError(f"site {tuple(site)} outside box N={domain.N}")
    return domain.N + 1 - abs(int(site[axis - 1]))


def dyadic_annulus(domain: BoxDomain, k: int) -> SiteSet:
    """Sites whose boundary distance lies in [2^k, 2^(k+1)).

    Materialized for 0 <= k <= domain.max_annulus_index only; the exterior
    annulus (k = -1) is the box complement and is handled by predicate.
    """
    if not 0 <= k <= domain.max_annulus_index:
        raise ValueError(
            f"annulus index {k} out of range 0..{domain.max_annulus_index}"
        )
    mask = (domain.depths >= 2**k) & (domain.depths < 2 ** (k + 1))
    return SiteSet(domain, np.flatnonzero(mask).astype(np.int64))


def cube_around(domain: BoxDomain, x0, gamma: float) -> SiteSet:
    """In-box sites within sup-distance gamma * boundary_distance(x0) of x0.

    Requires 0 < gamma < 1/2 so that boundary distances inside the cube stay
    within a factor [1/2, 3/2] of the center's.
    """
    if not 0.0 < gamma < 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2), got {gamma}")
    radius = gamma * boundary_distance(domain, x0)
    x0 = np.asarray(x0, dtype=np.int64)
    dist = np.abs(domain.coords - x0).max(axis=1)
    return SiteSet(domain, np.flatnonzero(dist <= radius).astype(np.int64))


def sub_box(domain: BoxDomain, half_side: int) -> SiteSet:
    """All sites of the concentric sub-box of half-side ``half_side``."""
    if not 0 <= half_side <= domain.N:
        raise ValueError(f"half_side must be in 0..{domain.N}, got {half_side}")
    mask = np.abs(domain.coords).max(axis=1) <= half_side
    return SiteSet(domain, np.flatnonzero(mask).astype(np.int64))
