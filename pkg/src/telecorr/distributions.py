"""Degree histograms, binary logarithmic binning and Zipf-Mandelbrot fits.

Bin ``i`` covers the half-open degree range ``[2**i, 2**(i+1))``.  The
Zipf-Mandelbrot model ``p(d) ~ (d + delta)**-alpha`` is normalized over the
finite support ``1..support_max`` and pooled into the same bins before it is
compared with data, so the fit never evaluates the model at bin centers.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataQualityError, UsageError
from .hypersparse import DegreeVector

__all__ = [
    "BinnedDistribution",
    "ProbabilityViews",
    "ZipfMandelbrotFit",
    "ALPHA_GRID",
    "DELTA_GRID",
    "histogram",
    "bin_exponents",
    "bin_degrees",
    "probability_views",
    "zm_pdf",
    "zm_binned",
    "zm_log_residual",
    "fit_zipf_mandelbrot",
    "sample_zipf_mandelbrot",
    "fit_to_dict",
    "fit_to_json",
    "plot_csv",
]

ALPHA_GRID = tuple(np.round(np.arange(10, 401) * 0.01, 2).tolist())
DELTA_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)

# Degrees below this are summed term by term; larger bins use Euler-Maclaurin.
_DIRECT_LIMIT = 1 << 12


@dataclass(frozen=True)
class BinnedDistribution:
    bin_lower_exponents: tuple[int, ...]
    counts: tuple[int, ...]
    total: int
    d_max: int

    def __post_init__(self):
        if self.d_max < 1:
            raise UsageError("d_max must be >= 1")
        top = self.d_max.bit_length() - 1
        if tuple(self.bin_lower_exponents) != tuple(range(top + 1)):
            raise UsageError(f"bins must run contiguously from 0 to {top}")
        if len(self.counts) != len(self.bin_lower_exponents):
            raise UsageError("one count per bin required")
        if any(c < 0 for c in self.counts):
            raise UsageError("bin counts must be nonnegative")
        if sum(self.counts) != self.total:
            raise UsageError("total must equal the sum of bin counts")

    @classmethod
    def from_counts(cls, counts, d_max: int | None = None) -> "BinnedDistribution":
        counts = tuple(int(c) for c in counts)
        if d_max is None:
            d_max = (1 << len(counts)) - 1
        return cls(tuple(range(len(counts))), counts, sum(counts), int(d_max))

    @property
    def nbins(self) -> int:
        return len(self.counts)

    @property
    def lower_edges(self) -> np.ndarray:
        return np.left_shift(1, np.asarray(self.bin_lower_exponents, dtype=np.int64))


class ProbabilityViews(NamedTuple):
    p: np.ndarray
    P: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class ZipfMandelbrotFit:
    alpha: float
    delta: float
    residual: float
    normalizer: float
    support_max: int


def _as_degree_array(degrees) -> np.ndarray:
    if isinstance(degrees, DegreeVector):
        return np.asarray(degrees.values, dtype=np.uint64)
    arr = np.asarray(degrees)
    if arr.size and arr.dtype.kind not in "iu":
        raise UsageError("degrees must be integers")
    if arr.size and arr.dtype.kind == "i" and arr.min() < 0:
        raise DataQualityError("negative degree encountered")
    return arr.astype(np.uint64).ravel()


def histogram(degrees) -> tuple[np.ndarray, np.ndarray]:
    """Unbinned histogram n(d): the distinct degrees and how many vertices have each."""
    d, n = np.unique(_as_degree_array(degrees), return_counts=True)
    return d, n


def bin_exponents(values: np.ndarray) -> np.ndarray:
    """floor(log2(v)) for positive integers, computed exactly with shifts."""
    v = np.asarray(values, dtype=np.uint64).copy()
    e = np.zeros(v.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        big = v >= np.uint64(1 << shift)
        e[big] += shift
        v[big] >>= np.uint64(shift)
    return e


def bin_degrees(degrees) -> BinnedDistribution:
    """Pool per-vertex degrees into binary logarithmic bins.

    Accepts a :class:`DegreeVector` or any integer array of degrees.

    >>> bin_degrees([1, 1, 2, 3]).counts
    (2, 2)
    """
    d = _as_degree_array(degrees)
    if d.size == 0:
        raise UsageError("cannot bin an empty degree set")
    if d.min() == 0:
        raise DataQualityError("zero degree encountered; degree vectors never store zeros")
    e = bin_exponents(d)
    counts = np.bincount(e)
    return BinnedDistribution(
        tuple(range(len(counts))), tuple(int(c) for c in counts), int(d.size), int(d.max())
    )


def probability_views(b: BinnedDistribution) -> ProbabilityViews:
    """Per-bin probability p, cumulative P, and differential cumulative D."""
    if b.total <= 0:
        raise UsageError("distribution has no mass")
    p = np.asarray(b.counts, dtype=np.float64) / b.total
    P = np.cumsum(p)
    D = np.diff(P, prepend=0.0)
    return ProbabilityViews(p, P, D)


def _check_params(alpha: float, delta: float) -> None:
    if not alpha > 0:
        raise UsageError(f"alpha must be > 0, got {alpha}")
    if not delta >= 0:
        raise UsageError(f"delta must be >= 0, got {delta}")


def _zm_weights(alpha: float, delta: float, support_max: int) -> np.ndarray:
    k = np.arange(1, support_max + 1, dtype=np.float64)
    return (k + delta) ** -alpha


def zm_pdf(d, alpha: float, delta: float, support_max: int):
    """Zipf-Mandelbrot probability of degree ``d`` on the support 1..support_max."""
    _check_params(alpha, delta)
    if support_max < 1:
        raise UsageError("support_max must be >= 1")
    d_arr = np.asarray(d)
    if d_arr.size and (d_arr.min() < 1 or d_arr.max() > support_max):
        raise UsageError(f"degree outside support [1, {support_max}]")
    norm = _zm_weights(alpha, delta, support_max).sum()
    out = (d_arr.astype(np.float64) + delta) ** -alpha / norm
    return float(out) if out.ndim == 0 else out


def _bin_power_sums(alphas: np.ndarray, delta: float, support_max: int) -> np.ndarray:
    """sum_{k in bin i, k <= support_max} (k + delta)**-alpha for every alpha.

    Returns an array of shape (len(alphas), nbins).
    """
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1, 1)
    nbins = int(support_max).bit_length()
    out = np.zeros((alphas.shape[0], nbins))

    n_direct = min(support_max, _DIRECT_LIMIT - 1)
    k = np.arange(1, n_direct + 1, dtype=np.float64)
    terms = np.exp(-alphas * np.log(k + delta))
    starts = (1 << np.arange(n_direct.bit_length())) - 1
    out[:, : len(starts)] = np.add.reduceat(terms, starts, axis=1)

    for i in range(len(starts), nbins):
        lo = 1 << i
        hi = min((1 << (i + 1)) - 1, support_max)
        out[:, i] = _euler_maclaurin(alphas[:, 0], lo + delta, hi + delta)
    return out


def _euler_maclaurin(alphas: np.ndarray, xa: float, xb: float) -> np.ndarray:
    """sum_{x = xa, xa+1, ..., xb} x**-alpha for xa >= 4096."""
    la, lb = np.log(xa), np.log(xb)
    one_m = 1.0 - alphas
    span = lb - la
    safe = np.where(one_m == 0.0, 1.0, one_m)
    integral = np.where(
        one_m == 0.0,
        span,
        np.exp(one_m * la) * np.expm1(one_m * span) / safe,
    )
    fa, fb = np.exp(-alphas * la), np.exp(-alphas * lb)
    total = integral + 0.5 * (fa + fb)
    # B2/2!, B4/4!, B6/6! with odd derivatives f^(m)(x) = (-1)^m (alpha)_m x^(-alpha-m)
    coeffs = {1: 1.0 / 12.0, 3: -1.0 / 720.0, 5: 1.0 / 30240.0}
    rising = np.ones_like(alphas)
    for m in range(1, 6):
        rising = rising * (alphas + m - 1)
        if m in coeffs:
            deriv_b = -rising * np.exp(-(alphas + m) * lb)
            deriv_a = -rising * np.exp(-(alphas + m) * la)
            total = total + coeffs[m] * (deriv_b - deriv_a)
    return total


def zm_binned(alpha: float, delta: float, support_max: int) -> np.ndarray:
    """Zipf-Mandelbrot probability mass pooled into bins 0..floor(log2 support_max)."""
    _check_params(alpha, delta)
    sums = _bin_power_sums(np.array([alpha]), delta, support_max)[0]
    return sums / sums.sum()


def _data_log_D(b: BinnedDistribution) -> tuple[np.ndarray, np.ndarray]:
    D = probability_views(b).D
    nz = np.flatnonzero(np.asarray(b.counts) > 0)
    return nz, np.log10(D[nz])


def zm_log_residual(b: BinnedDistribution, alpha: float, delta: float) -> float:
    """Fit objective at one parameter point (support_max = observed d_max)."""
    nz, log_data = _data_log_D(b)
    model = zm_binned(alpha, delta, b.d_max)
    return float(np.sum((np.log10(model[nz]) - log_data) ** 2))


def fit_zipf_mandelbrot(
    b: BinnedDistribution,
    alpha_grid=ALPHA_GRID,
    delta_grid=DELTA_GRID,
) -> ZipfMandelbrotFit:
    """Exhaustive grid fit of the pooled Zipf-Mandelbrot model to binned data.

    Minimizes the sum over nonempty bins of squared log10 differences in D.
    Ties go to the smaller alpha, then the smaller delta.
    """
    nz = np.flatnonzero(np.asarray(b.counts) > 0)
    if len(nz) < 3:
        raise UsageError(f"need at least 3 nonempty bins to fit, got {len(nz)}")
    alphas = np.asarray(alpha_grid, dtype=np.float64)
    deltas = np.asarray(delta_grid, dtype=np.float64)
    if alphas.size == 0 or deltas.size == 0:
        raise UsageError("parameter grids must be nonempty")
    if alphas.min() <= 0 or deltas.min() < 0:
        raise UsageError("grid values out of range")
    _, log_data = _data_log_D(b)

    residuals = np.empty((len(alphas), len(deltas)))
    norms = np.empty_like(residuals)
    for j, delta in enumerate(deltas):
        sums = _bin_power_sums(alphas, float(delta), b.d_max)
        norm = sums.sum(axis=1)
        log_model = np.log10(sums[:, nz]) - np.log10(norm)[:, None]
        residuals[:, j] = np.sum((log_model - log_data) ** 2, axis=1)
        norms[:, j] = norm
    # Row-major argmin returns the first minimum: smallest alpha, then delta.
    ia, jd = np.unravel_index(int(np.argmin(residuals)), residuals.shape)
    return ZipfMandelbrotFit(
        alpha=float(alphas[ia]),
        delta=float(deltas[jd]),
        residual=float(residuals[ia, jd]),
        normalizer=float(norms[ia, jd]),
        support_max=int(b.d_max),
    )


def sample_zipf_mandelbrot(
    alpha: float, delta: float, support_max: int, n: int, seed=None
) -> DegreeVector:
    """Draw ``n`` degrees by inverse CDF; vertex indices are 0..n-1."""
    _check_params(alpha, delta)
    if n < 1:
        raise UsageError("n must be >= 1")
    if support_max < 1:
        raise UsageError("support_max must be >= 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(_zm_weights(alpha, delta, support_max))
    cdf /= cdf[-1]
    u = rng.random(n)
    d = np.minimum(np.searchsorted(cdf, u, side="right") + 1, support_max)
    return DegreeVector(np.arange(n, dtype=np.uint32), d.astype(np.uint64))


def fit_to_dict(fit: ZipfMandelbrotFit, b: BinnedDistribution) -> dict:
    views = probability_views(b)
    bins = [
        {"i": int(i), "count": int(c), "p": float(p), "P": float(P), "D": float(D)}
        for i, c, p, P, D in zip(b.bin_lower_exponents, b.counts, views.p, views.P, views.D)
    ]
    return {
        "alpha": fit.alpha,
        "delta": fit.delta,
        "residual": fit.residual,
        "support_max": fit.support_max,
        "bins": bins,
    }


def fit_to_json(fit: ZipfMandelbrotFit, b: BinnedDistribution) -> str:
    return json.dumps(fit_to_dict(fit, b), indent=2)


def plot_csv(b: BinnedDistribution) -> str:
    """``d,D`` rows keyed by each bin's lower edge."""
    buf = io.StringIO()
    buf.write("d,D\n")
    for edge, D in zip(b.lower_edges.tolist(), probability_views(b).D.tolist()):
        buf.write(f"{edge},{D!r}\n")
    return buf.getvalue()
