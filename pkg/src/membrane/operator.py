"""Discrete Laplacian of zero-extended box functions and the squared-Laplacian
precision matrix.

A function on the box is implicitly zero outside it.  Its Laplacian is then
supported on the box enlarged by one, and the precision matrix of the field
is Q = A^T A where A maps box functions to Laplacian values on the enlarged
box.  This factored assembly yields exact symmetry and positive definiteness;
all stencil weights are small integers, so assembly is exact in float64.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import BoxDomain


@dataclass
class LatticeFunction:
    """Real values on every site of a box, zero-extended off the box."""

    domain: BoxDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape != (self.domain.site_count,):
            raise ValueError(
                f"expected {self.domain.site_count} values, got {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite function values")

    @classmethod
    def zeros(cls, domain: BoxDomain) -> "LatticeFunction":
        return cls(domain, np.zeros(domain.site_count))

    def grid(self) -> np.ndarray:
        return self.values.reshape((self.domain.side,) * self.domain.n)


def laplacian_extended(f: LatticeFunction) -> LatticeFunction:
    """Discrete Laplacian of the zero extension, on the box enlarged by one.

    For every site x of the enlarged box returns
    sum_i [f(x+e_i) + f(x-e_i) - 2 f(x)] with f = 0 off the original box.
    The Laplacian vanishes identically outside the enlarged box.
    """
    domain = f.domain
    n, side = domain.n, domain.side
    ext = BoxDomain(n, domain.N + 1)
    # pad by 2 so every enlarged-box site sees all its neighbors
    buf = np.zeros((side + 4,) * n)
    inner = tuple(slice(2, 2 + side) for _ in range(n))
    buf[inner] = f.grid()
    window = tuple(slice(1, 1 + side + 2) for _ in range(n))
    lap = -2.0 * n * buf[window]
    for axis in range(n):
        for shift in (-1, 1):
            lap += np.roll(buf, shift, axis=axis)[window]
    return LatticeFunction(ext, lap.ravel())


def dirichlet_energy(f: LatticeFunction) -> float:
    """Squared L2 norm of the discrete Laplacian of the zero extension."""
    lap = laplacian_extended(f).values
    return float(lap @ lap)


def laplacian_pairing(f: LatticeFunction, g: LatticeFunction) -> float:
    """L2 pairing of the two Laplacians; pairing(f, f) is the Dirichlet energy."""
    if f.domain != g.domain:
        raise ValueError("functions live on different domains")
    return float(laplacian_extended(f).values @ laplacian_extended(g).values)


@dataclass
class PrecisionOperator:
    """Sparse SPD matrix of the squared Laplacian with zero exterior data."""

    domain: BoxDomain
    matrix: sp.csc_matrix

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values

    def quadratic_form(self, values: np.ndarray) -> float:
        return float(values @ (self.matrix @ values))

    def export_coo(self, path) -> None:
        """Coordinate text dump for cross-validation: header then i j value."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i} {j} {float(v)!r}\n")


def laplacian_matrix(domain: BoxDomain) -> sp.csr_matrix:
    """Sparse map from box functions to Laplacian values on the enlarged box."""
    n = domain.n
    ext = BoxDomain(n, domain.N + 1)
    rows, cols, vals = [], [], []
    offsets = [(np.zeros(n, dtype=np.int64), -2.0 * n)]
    for axis in range(n):
        for sign in (-1, 1):
            off = np.zeros(n, dtype=np.int64)
            off[axis] = sign
            offsets.append((off, 1.0))
    for off, weight in offsets:
        neighbor = ext.coords + off
        mask = np.abs(neighbor).max(axis=1) <= domain.N
        rows.append(np.flatnonzero(mask))
        cols.append(domain.indices_of(neighbor[mask]))
        vals.append(np.full(int(mask.sum()), weight))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ext.site_count, domain.site_count),
    )


def assemble_precision(domain: BoxDomain) -> PrecisionOperator:
    """Assemble Q = A^T A so that u^T Q u equals the summed squared Laplacian."""
    A = laplacian_matrix(domain)
    Q = (A.T @ A).tocsc()
    Q.sort_indices()
    return PrecisionOperator(domain, Q)
