import numpy as np
import pytest

from membrane.greens import greens_column
from membrane.lattice import BoxDomain
from membrane.operator import LatticeFunction
from membrane.sampler import (
    FieldSample,
    SeededStream,
    empirical_covariance,
    read_field,
    sample,
    sample_batch,
    write_field,
)


class _ZeroStream:
    """Stub stream whose generator always emits zeros."""

    seed = 0
    stream = 0

    def generator(self, block=0):
        class G:
            @staticmethod
            def standard_normal(shape):
                return np.zeros(shape)

        return G()


class TestDeterminism:
    def test_same_key_reproduces(self, factor_cache):
        factor = factor_cache(2, 2)
        a = sample(factor, SeededStream(42, 3)).values
        b = sample(factor, SeededStream(42, 3)).values
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self, factor_cache):
        factor = factor_cache(2, 2)
        a = sample(factor, SeededStream(42, 3)).values
        b = sample(factor, SeededStream(42, 4)).values
        assert not np.array_equal(a, b)

    def test_blocks_differ_and_reproduce(self, factor_cache):
        factor = factor_cache(2, 2)
        s = SeededStream(7, 0)
        a = sample_batch(factor, s, 4, block=0)
        b = sample_batch(factor, s, 4, block=1)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, sample_batch(factor, s, 4, block=0))


class TestSampling:
    def test_stubbed_noise_returns_mean(self, factor_cache):
        factor = factor_cache(2, 2)
        mean = LatticeFunction(factor.domain, np.arange(25, dtype=float))
        fs = sample(factor, _ZeroStream(), mean=mean)
        assert np.array_equal(fs.values, mean.values)
        assert fs.mean_label == "shifted"

    def test_single_site_variance(self, factor_cache):
        # true variance 1/20; 1e5 samples, tolerance beyond 5 standard errors
        factor = factor_cache(2, 0)
        fields = sample_batch(factor, SeededStream(5, 0), 100_000)
        var = fields.var(ddof=1)
        assert 0.045 <= var <= 0.055

    def test_mean_domain_mismatch(self, factor_cache):
        factor = factor_cache(2, 2)
        mean = LatticeFunction.zeros(BoxDomain(2, 3))
        with pytest.raises(ValueError):
            sample(factor, SeededStream(1, 0), mean=mean)


class TestEmpiricalCovariance:
    def test_constant_zero_samples(self, factor_cache):
        factor = factor_cache(2, 1)
        domain = factor.domain
        zeros = [
            FieldSample(LatticeFunction.zeros(domain), 0, i) for i in range(5)
        ]
        rows = empirical_covariance(zeros, [((0, 0), (1, 1))])
        assert rows[0].covariance == 0.0

    def test_pair_with_itself_is_variance(self, factor_cache):
        factor = factor_cache(2, 1)
        fields = sample_batch(factor, SeededStream(9, 0), 500)
        samples = [
            FieldSample(LatticeFunction(factor.domain, fields[:, i]), 9, 0)
            for i in range(fields.shape[1])
        ]
        row = empirical_covariance(samples, [((0, 1), (0, 1))])[0]
        idx = factor.domain.index_of((0, 1))
        assert row.covariance == pytest.approx(np.var(fields[idx], ddof=1), rel=1e-12)

    def test_matches_greens_entries(self, factor_cache, rng):
        factor = factor_cache(2, 4)
        domain = factor.domain
        fields = sample_batch(factor, SeededStream(3, 1), 10_000)
        samples = [
            FieldSample(LatticeFunction(domain, fields[:, i]), 3, 1)
            for i in range(fields.shape[1])
        ]
        pairs = []
        for _ in range(10):
            ix, iy = rng.integers(0, domain.site_count, 2)
            pairs.append((domain.site_of(int(ix)), domain.site_of(int(iy))))
        rows = empirical_covariance(samples, pairs)
        for row in rows:
            truth = greens_column(factor, row.x).values[domain.index_of(row.y)]
            assert abs(row.covariance - truth) <= 5 * row.std_error

    def test_needs_two_samples(self, factor_cache):
        factor = factor_cache(2, 1)
        one = [FieldSample(LatticeFunction.zeros(factor.domain), 0, 0)]
        with pytest.raises(ValueError):
            empirical_covariance(one, [((0, 0), (0, 0))])


def test_field_dump_roundtrip(tmp_path, factor_cache):
    factor = factor_cache(2, 2)
    fs = sample(factor, SeededStream(13, 2))
    path = tmp_path / "field.txt"
    write_field(fs, path)
    header = path.read_text().splitlines()[0]
    assert header == "2 2 13 2"
    back = read_field(path)
    assert np.array_equal(back.values, fs.values)
    assert (back.seed, back.stream) == (13, 2)
