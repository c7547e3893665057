"""Exact Gaussian sampling of the membrane field.

Samples are mean + L^{-T} z with z iid standard normal, so the covariance
is exactly the Green's function of the factorized precision.  Randomness
comes from the counter-based Philox generator keyed by (master seed, stream
index); distinct streams are independent and a given (seed, stream, block)
reproduces bit-for-bit, so results do not depend on how work is scheduled.
"""

from dataclasses import dataclass

import numpy as np

from .greens import PrecisionFactor
from .operator import LatticeFunction


@dataclass(frozen=True)
class SeededStream:
    """One reproducible random stream out of a keyed family."""

    seed: int
    stream: int = 0

    def generator(self, block: int = 0) -> np.random.Generator:
        """Fresh generator for one counter block of this stream.

        Blocks are spaced 2^64 draws apart in the Philox counter, far more
        than any batch consumes, so per-block generators never overlap.
        """
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        counter = np.array([0, block % 2**64, 0, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def shifted(self, offset: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream + offset)


@dataclass
class FieldSample:
    """One field realization with its provenance."""

    function: LatticeFunction
    seed: int
    stream: int
    mean_label: str = "zero"

    @property
    def values(self) -> np.ndarray:
        return self.function.values


def sample_batch(
    factor: PrecisionFactor,
    stream: SeededStream,
    size: int,
    block: int = 0,
    mean: LatticeFunction | None = None,
) -> np.ndarray:
    """Matrix of ``size`` field samples (one per column) from one counter block."""
    if mean is not None and mean.domain != factor.domain:
        raise ValueError("mean lives on a different domain")
    z = stream.generator(block).standard_normal((factor.domain.site_count, size))
    fields = factor.half_solve_t(z)
    if mean is not None:
        fields += mean.values[:, None]
    return fields


def sample(
    factor: PrecisionFactor,
    stream: SeededStream,
    mean: LatticeFunction | None = None,
) -> FieldSample:
    """Draw one exact sample of the field, optionally shifted by a mean."""
    values = sample_batch(factor, stream, 1, mean=mean)[:, 0]
    return FieldSample(
        LatticeFunction(factor.domain, values),
        seed=stream.seed,
        stream=stream.stream,
        mean_label="zero" if mean is None else "shifted",
    )


@dataclass
class CovarianceEntry:
    x: tuple
    y: tuple
    covariance: float
    std_error: float


def empirical_covariance(samples, pairs) -> list[CovarianceEntry]:
    """Unbiased sample covariances for the requested site pairs.

    The standard error uses the Gaussian fourth-moment formula
    sqrt((s_xx * s_yy + s_xy^2) / (m - 1)).
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    domain = samples[0].function.domain
    if any(s.function.domain != domain for s in samples):
        raise ValueError("samples live on different domains")
    data = np.stack([s.values for s in samples], axis=1)
    m = data.shape[1]
    out = []
    for x, y in pairs:
        ix, iy = domain.index_of(x), domain.index_of(y)
        vx = data[ix] - data[ix].mean()
        vy = data[iy] - data[iy].mean()
        sxy = float(vx @ vy) / (m - 1)
        sxx = float(vx @ vx) / (m - 1)
        syy = float(vy @ vy) / (m - 1)
        se = np.sqrt((sxx * syy + sxy**2) / (m - 1))
        out.append(CovarianceEntry(tuple(x), tuple(y), sxy, float(se)))
    return out


def write_field(sample: FieldSample, path) -> None:
    """Text dump of one field: header ``n N seed stream`` then one value per line."""
    d = sample.function.domain
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{d.n} {d.N} {sample.seed} {sample.stream}\n")
        for v in sample.values:
            fh.write(f"{float(v)!r}\n")


def read_field(path) -> FieldSample:
    from .lattice import BoxDomain

    with open(path, "r", encoding="utf-8") as fh:
        n, N, seed, stream = (int(t) for t in fh.readline().split())
        values = np.array([float(line) for line in fh], dtype=np.float64)
    return FieldSample(LatticeFunction(BoxDomain(n, N), values), seed, stream)
