import itertools

import numpy as np
import pytest

from membrane.lattice import BoxDomain
from membrane.operator import (
    LatticeFunction,
    assemble_precision,
    dirichlet_energy,
    laplacian_extended,
    laplacian_pairing,
)


def brute_laplacian(domain, values):
    """Independent oracle: dictionary-backed stencil with explicit loops."""
    table = {tuple(x): v for x, v in zip(domain.coords, values)}
    n = domain.n
    ext = BoxDomain(n, domain.N + 1)
    out = np.zeros(ext.site_count)
    for row, z in enumerate(map(tuple, ext.coords)):
        acc = -2.0 * n * table.get(z, 0.0)
        for axis in range(n):
            for sign in (-1, 1):
                zz = list(z)
                zz[axis] += sign
                acc += table.get(tuple(zz), 0.0)
        out[row] = acc
    return out


def brute_energy(domain, values):
    lap = brute_laplacian(domain, values)
    return float(lap @ lap)


class TestLaplacian:
    def test_indicator_at_origin(self):
        domain = BoxDomain(2, 0)
        lap = laplacian_extended(LatticeFunction(domain, [1.0]))
        ext = lap.domain
        grid = {tuple(x): v for x, v in zip(ext.coords, lap.values)}
        assert grid[(0, 0)] == -4.0
        for nb in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            assert grid[nb] == 1.0
        for corner in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            assert grid[corner] == 0.0

    def test_zero_function(self):
        domain = BoxDomain(3, 1)
        lap = laplacian_extended(LatticeFunction.zeros(domain))
        assert not lap.values.any()

    def test_linear_coordinate_matches_oracle(self):
        # interior values vanish; near the boundary the zero extension shows
        domain = BoxDomain(2, 2)
        values = domain.coords[:, 0].astype(float)
        lap = laplacian_extended(LatticeFunction(domain, values))
        oracle = brute_laplacian(domain, values)
        assert np.allclose(lap.values, oracle, atol=0)
        interior = np.abs(lap.domain.coords).max(axis=1) <= 1
        assert not lap.values[interior].any()
        assert np.abs(lap.values).max() > 0

    @pytest.mark.parametrize("n,N", [(2, 0), (2, 1), (2, 3), (3, 1), (3, 2)])
    def test_random_fields_match_oracle(self, n, N, rng):
        domain = BoxDomain(n, N)
        values = rng.standard_normal(domain.site_count)
        lap = laplacian_extended(LatticeFunction(domain, values))
        assert np.allclose(lap.values, brute_laplacian(domain, values), rtol=1e-12)


class TestPrecision:
    def test_single_site_2d(self):
        Q = assemble_precision(BoxDomain(2, 0)).matrix.toarray()
        assert Q.shape == (1, 1) and Q[0, 0] == 20.0

    def test_single_site_3d(self):
        Q = assemble_precision(BoxDomain(3, 0)).matrix.toarray()
        assert Q.shape == (1, 1) and Q[0, 0] == 42.0

    def test_exact_symmetry(self):
        for n, N in ((2, 3), (3, 2)):
            Q = assemble_precision(BoxDomain(n, N)).matrix
            assert (Q - Q.T).nnz == 0

    def test_bandwidth_is_two_per_axis(self):
        domain = BoxDomain(2, 4)
        Q = assemble_precision(domain).matrix.tocoo()
        gaps = np.abs(domain.coords[Q.row] - domain.coords[Q.col]).max(axis=0)
        assert (gaps <= 2).all()

    def test_energy_identity_random(self, rng):
        # u^T Q u equals the summed squared Laplacian of the zero extension
        for n, N in ((2, 1), (2, 4), (3, 2)):
            domain = BoxDomain(n, N)
            op = assemble_precision(domain)
            for _ in range(20):
                u = rng.standard_normal(domain.site_count)
                direct = dirichlet_energy(LatticeFunction(domain, u))
                assert direct > 0
                assert abs(op.quadratic_form(u) - direct) <= 1e-10 * direct

    def test_energy_identity_against_brute_oracle(self, rng):
        domain = BoxDomain(2, 2)
        op = assemble_precision(domain)
        u = rng.standard_normal(domain.site_count)
        oracle = brute_energy(domain, u)
        assert abs(op.quadratic_form(u) - oracle) <= 1e-10 * oracle

    def test_export_coo(self, tmp_path):
        op = assemble_precision(BoxDomain(2, 1))
        path = tmp_path / "precision.txt"
        op.export_coo(path)
        lines = path.read_text().splitlines()
        rows, cols, nnz = (int(t) for t in lines[0].split())
        assert rows == cols == 9 and nnz == len(lines) - 1
        rebuilt = np.zeros((rows, cols))
        for line in lines[1:]:
            i, j, v = line.split()
            rebuilt[int(i), int(j)] = float(v)
        assert np.array_equal(rebuilt, op.matrix.toarray())


class TestEnergyAndPairing:
    def test_zero_energy_iff_zero(self, rng):
        domain = BoxDomain(2, 2)
        assert dirichlet_energy(LatticeFunction.zeros(domain)) == 0.0
        u = rng.standard_normal(domain.site_count)
        assert dirichlet_energy(LatticeFunction(domain, u)) > 0.0

    def test_single_site_energy(self):
        assert dirichlet_energy(LatticeFunction(BoxDomain(2, 0), [1.0])) == 20.0

    def test_pairing_against_precision(self, rng):
        domain = BoxDomain(2, 2)
        op = assemble_precision(domain)
        f = rng.standard_normal(domain.site_count)
        g = rng.standard_normal(domain.site_count)
        lhs = laplacian_pairing(LatticeFunction(domain, f), LatticeFunction(domain, g))
        rhs = float(f @ (op.matrix @ g))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))

    def test_pairing_trivial_cases(self, rng):
        domain = BoxDomain(2, 2)
        f = LatticeFunction(domain, rng.standard_normal(domain.site_count))
        zero = LatticeFunction.zeros(domain)
        assert laplacian_pairing(f, zero) == 0.0
        assert laplacian_pairing(f, f) == dirichlet_energy(f)

    def test_polarization(self, rng):
        domain = BoxDomain(2, 3)
        f = rng.uniform(-1, 1, domain.site_count)
        g = rng.uniform(-1, 1, domain.site_count)
        ff, gg = LatticeFunction(domain, f), LatticeFunction(domain, g)
        plus = dirichlet_energy(LatticeFunction(domain, f + g))
        minus = dirichlet_energy(LatticeFunction(domain, f - g))
        pairing = laplacian_pairing(ff, gg)
        scale = max(1.0, plus, minus)
        assert abs(pairing - 0.25 * (plus - minus)) <= 1e-10 * scale

    def test_domain_mismatch(self):
        f = LatticeFunction.zeros(BoxDomain(2, 2))
        g = LatticeFunction.zeros(BoxDomain(2, 3))
        with pytest.raises(ValueError):
            laplacian_pairing(f, g)


def test_lattice_function_validation():
    domain = BoxDomain(2, 1)
    with pytest.raises(ValueError):
        LatticeFunction(domain, np.zeros(8))
    with pytest.raises(ValueError):
        LatticeFunction(domain, [np.nan] * 9)
