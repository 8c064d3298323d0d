"""Cross-site source overlap and temporal correlation fits.

A telescope capture is summarized as a :class:`SourceSet` (source id ->
packets seen in the window).  Outposts contribute plain sets of source ids,
one per month.  Time is measured in months since 1970-01 as a real number:
a calendar month ``YYYY-MM`` sits at its center (``+0.5``), while a capture
timestamp maps to the fractional month in which it falls.

Temporal curves are fit by exhaustive grid search against peak-normalized
models, scoring each candidate with the sum of square roots of absolute
residuals.
"""

from __future__ import annotations

import calendar
import io
import json
import math
import re
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple

import numpy as np

from .distributions import bin_exponents
from .errors import DegenerateFitError, UsageError
from .hypersparse import DegreeVector, TrafficMatrix, row_sums

__all__ = [
    "SourceSet",
    "BrightnessOverlap",
    "CurvePoint",
    "CorrelationCurve",
    "ModifiedCauchyFit",
    "CauchyFit",
    "GaussianFit",
    "MC_ALPHA_GRID",
    "MC_BETA_GRID",
    "WIDTH_GRID",
    "month_coordinate",
    "month_label",
    "month_center_timestamp",
    "overlap_by_brightness",
    "brightness_law",
    "temporal_curve",
    "modified_cauchy",
    "cauchy_model",
    "gaussian_model",
    "fit_modified_cauchy",
    "fit_cauchy",
    "fit_gaussian",
    "fit_all",
    "curve_to_dict",
    "plot_csv",
]

MC_ALPHA_GRID = tuple(np.round(np.arange(5, 61) * 0.05, 2).tolist())
MC_BETA_GRID = tuple(np.round(np.arange(1, 65) * 0.25, 2).tolist())
WIDTH_GRID = MC_BETA_GRID

_MICROS = 1_000_000
_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


# -- time coordinates -------------------------------------------------------

def _month_bounds(year: int, month: int) -> tuple[float, float]:
    start = datetime(year, month, 1, tzinfo=timezone.utc).timestamp()
    days = calendar.monthrange(year, month)[1]
    return start, start + days * 86400.0


def _month_index(year: int, month: int) -> int:
    return (year - 1970) * 12 + (month - 1)


def month_coordinate(value) -> float:
    """Real-valued month coordinate of a label, datetime, or microsecond timestamp.

    >>> month_coordinate("1970-02")
    1.5
    """
    if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
        dt = datetime.fromtimestamp(float(value) / _MICROS, tz=timezone.utc)
        seconds = float(value) / _MICROS
    elif isinstance(value, datetime):
        dt = value if value.tzinfo else value.replace(tzinfo=timezone.utc)
        seconds = dt.timestamp()
    elif isinstance(value, str):
        m = _MONTH_RE.match(value.strip())
        if m:
            year, month = int(m.group(1)), int(m.group(2))
            if not 1 <= month <= 12:
                raise UsageError(f"bad month in label {value!r}")
            return _month_index(year, month) + 0.5
        try:
            dt = datetime.fromisoformat(value.strip())
        except ValueError:
            raise UsageError(f"cannot read a time from {value!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        seconds = dt.timestamp()
    else:
        raise UsageError(f"cannot read a time from {value!r}")
    start, end = _month_bounds(dt.year, dt.month)
    return _month_index(dt.year, dt.month) + (seconds - start) / (end - start)


def month_label(coordinate: float) -> str:
    idx = math.floor(coordinate)
    return f"{1970 + idx // 12:04d}-{idx % 12 + 1:02d}"


def month_center_timestamp(label: str) -> int:
    """Microsecond timestamp at the midpoint of calendar month ``label``."""
    m = _MONTH_RE.match(label)
    if not m:
        raise UsageError(f"expected YYYY-MM, got {label!r}")
    start, end = _month_bounds(int(m.group(1)), int(m.group(2)))
    return int(round((start + end) / 2 * _MICROS))


# -- source sets and overlap ------------------------------------------------

@dataclass(frozen=True)
class SourceSet:
    window_label: str
    sources: Mapping[Hashable, int]
    id_space: str = "ipv4-index"

    def __post_init__(self):
        if not self.window_label:
            raise UsageError("window_label must be nonempty")
        if any(c < 1 for c in self.sources.values()):
            raise UsageError("source counts must be >= 1")

    @classmethod
    def from_degree_vector(cls, v: DegreeVector, window_label: str, id_space: str = "ipv4-index") -> "SourceSet":
        return cls(window_label, v.to_dict(), id_space)

    @classmethod
    def from_matrix(cls, a: TrafficMatrix, window_label: str, id_space: str = "ipv4-index") -> "SourceSet":
        return cls.from_degree_vector(row_sums(a), window_label, id_space)

    def __len__(self) -> int:
        return len(self.sources)

    def _arrays(self) -> tuple[list, np.ndarray]:
        ids = list(self.sources)
        counts = np.fromiter((self.sources[k] for k in ids), dtype=np.uint64, count=len(ids))
        return ids, counts

    def in_bin(self, exponent: int) -> list:
        ids, counts = self._arrays()
        e = bin_exponents(counts)
        return [ids[k] for k in np.flatnonzero(e == exponent)]


class BrightnessOverlap(NamedTuple):
    exponent: int
    matched: int
    eligible: int
    fraction: float


def _id_kind(ids) -> str | None:
    for x in ids:
        return "str" if isinstance(x, str) else "int"
    return None


def _check_spaces(telescope: SourceSet, outpost, outpost_space: str | None) -> None:
    if outpost_space is not None and outpost_space != telescope.id_space:
        raise UsageError(
            f"identifier spaces differ: telescope {telescope.id_space!r}, outpost {outpost_space!r}"
        )
    tk, ok = _id_kind(telescope.sources), _id_kind(outpost)
    if tk and ok and tk != ok:
        raise UsageError(f"identifier kinds differ: telescope uses {tk}, outpost uses {ok}")


def overlap_by_brightness(
    telescope: SourceSet, outpost_sources: Iterable[Hashable], outpost_space: str | None = None
) -> list[BrightnessOverlap]:
    """Fraction of telescope sources in each brightness bin seen by the outpost.

    Bins without telescope sources are left out.
    """
    outpost = outpost_sources if isinstance(outpost_sources, (set, frozenset)) else set(outpost_sources)
    _check_spaces(telescope, outpost, outpost_space)
    ids, counts = telescope._arrays()
    if not ids:
        return []
    e = bin_exponents(counts)
    seen = np.fromiter((k in outpost for k in ids), dtype=bool, count=len(ids))
    eligible = np.bincount(e)
    matched = np.bincount(e, weights=seen, minlength=len(eligible)).astype(np.int64)
    return [
        BrightnessOverlap(int(i), int(matched[i]), int(eligible[i]), matched[i] / eligible[i])
        for i in np.flatnonzero(eligible)
    ]


def brightness_law(d, n_valid):
    """Chance that a source of brightness ``d`` is also seen elsewhere the same month.

    ``min(1, log2(d) / log2(sqrt(n_valid)))``; saturates at ``d >= sqrt(n_valid)``.
    """
    d_arr = np.asarray(d, dtype=np.float64)
    if d_arr.size and d_arr.min() < 1:
        raise UsageError("brightness must be >= 1")
    if n_valid < 4:
        raise UsageError("n_valid must be >= 4")
    out = np.minimum(1.0, np.log2(d_arr) / (0.5 * math.log2(n_valid)))
    return float(out) if out.ndim == 0 else out


# -- temporal curves ----------------------------------------------------------

class CurvePoint(NamedTuple):
    t: float
    fraction: float
    matched: int
    eligible: int


@dataclass(frozen=True)
class CorrelationCurve:
    reference_time: float
    brightness_exponent: int
    points: tuple[CurvePoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pts = []
        for p in self.points:
            p = CurvePoint(float(p[0]), float(p[1]), int(p[2]), int(p[3]))
            if p.eligible <= 0:
                raise UsageError("curve points need eligible > 0")
            if not 0 <= p.matched <= p.eligible:
                raise UsageError("matched must lie in [0, eligible]")
            if p.fraction != p.matched / p.eligible:
                raise UsageError("fraction must equal matched / eligible")
            pts.append(p)
        object.__setattr__(self, "points", tuple(sorted(pts, key=lambda p: p.t)))

    @classmethod
    def from_counts(cls, reference_time: float, brightness_exponent: int, t, matched, eligible) -> "CorrelationCurve":
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), np.shape(matched))
        eligible = np.broadcast_to(np.asarray(eligible), np.shape(matched))
        pts = [CurvePoint(float(ti), m / e, int(m), int(e)) for ti, m, e in zip(t, np.asarray(matched).tolist(), eligible.tolist())]
        return cls(float(reference_time), int(brightness_exponent), tuple(pts))

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def fractions(self) -> np.ndarray:
        return np.array([p.fraction for p in self.points])


def temporal_curve(
    telescope: SourceSet,
    brightness_exponent: int,
    outposts: Sequence[tuple[float | str, Iterable[Hashable]]],
    outpost_space: str | None = None,
) -> CorrelationCurve:
    """One overlap point per outpost window for telescope sources in one bin.

    Window times may be month coordinates or labels; the reference time
    comes from the telescope's window label.
    """
    if not outposts:
        raise UsageError("need at least one outpost window")
    eligible = telescope.in_bin(brightness_exponent)
    if not eligible:
        raise UsageError(
            f"no telescope sources in bin {brightness_exponent} "
            f"[{1 << brightness_exponent}, {1 << (brightness_exponent + 1)})"
        )
    t0 = month_coordinate(telescope.window_label)
    pts = []
    for t, ids in outposts:
        ids = ids if isinstance(ids, (set, frozenset)) else set(ids)
        _check_spaces(telescope, ids, outpost_space)
        matched = sum(1 for k in eligible if k in ids)
        tc = month_coordinate(t) if isinstance(t, str) else float(t)
        pts.append(CurvePoint(tc, matched / len(eligible), matched, len(eligible)))
    return CorrelationCurve(t0, int(brightness_exponent), tuple(pts))


# -- models -------------------------------------------------------------------

def modified_cauchy(t, t0: float, alpha: float, beta: float):
    """beta / (beta + |t - t0|**alpha); equals 1 at t0."""
    if not (alpha > 0 and beta > 0):
        raise UsageError("alpha and beta must be > 0")
    x = np.abs(np.asarray(t, dtype=np.float64) - t0) ** alpha
    out = beta / (beta + x)
    return float(out) if out.ndim == 0 else out


def cauchy_model(t, t0: float, gamma: float):
    if not gamma > 0:
        raise UsageError("gamma must be > 0")
    g2 = gamma * gamma
    out = g2 / (g2 + np.abs(np.asarray(t, dtype=np.float64) - t0) ** 2)
    return float(out) if out.ndim == 0 else out


def gaussian_model(t, t0: float, sigma: float):
    if not sigma > 0:
        raise UsageError("sigma must be > 0")
    dt = np.asarray(t, dtype=np.float64) - t0
    out = np.exp(-(dt * dt) / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModifiedCauchyFit:
    alpha: float
    beta: float
    peak: float
    residual: float
    one_month_drop: float

    def model(self, t, t0: float):
        return self.peak * modified_cauchy(t, t0, self.alpha, self.beta)


@dataclass(frozen=True)
class CauchyFit:
    gamma: float
    peak: float
    residual: float

    def model(self, t, t0: float):
        return self.peak * cauchy_model(t, t0, self.gamma)


@dataclass(frozen=True)
class GaussianFit:
    sigma: float
    peak: float
    residual: float

    def model(self, t, t0: float):
        return self.peak * gaussian_model(t, t0, self.sigma)


def _prepare(curve: CorrelationCurve) -> tuple[np.ndarray, np.ndarray, float]:
    if len(curve.points) < 3:
        raise UsageError(f"need at least 3 curve points, got {len(curve.points)}")
    f = curve.fractions
    peak = float(f.max())
    if peak <= 0:
        raise DegenerateFitError("curve is identically zero; nothing to fit")
    dt = np.abs(curve.t - curve.reference_time)
    return dt, f, peak


def _root_abs_objective(f: np.ndarray, model: np.ndarray) -> np.ndarray:
    """Sum over the last axis of |f - model|**(1/2)."""
    return np.sqrt(np.abs(f - model)).sum(axis=-1)


def fit_modified_cauchy(curve: CorrelationCurve, alpha_grid=MC_ALPHA_GRID, beta_grid=MC_BETA_GRID) -> ModifiedCauchyFit:
    """Grid fit of ``peak * beta / (beta + |t - t0|**alpha)``.

    ``peak`` is the largest observed fraction.  Ties go to the smaller alpha,
    then the smaller beta.
    """
    dt, f, peak = _prepare(curve)
    alphas = np.asarray(alpha_grid, dtype=np.float64)
    betas = np.asarray(beta_grid, dtype=np.float64)
    if alphas.size == 0 or betas.size == 0 or alphas.min() <= 0 or betas.min() <= 0:
        raise UsageError("alpha and beta grids must be nonempty and positive")
    powered = dt[None, :] ** alphas[:, None]                       # (alpha, point)
    shape = betas[None, :, None] / (betas[None, :, None] + powered[:, None, :])
    scores = _root_abs_objective(f, peak * shape)                  # (alpha, beta)
    ia, ib = np.unravel_index(int(np.argmin(scores)), scores.shape)
    beta = float(betas[ib])
    return ModifiedCauchyFit(
        alpha=float(alphas[ia]),
        beta=beta,
        peak=peak,
        residual=float(scores[ia, ib]),
        one_month_drop=1.0 / (beta + 1.0),
    )


def _fit_width(curve: CorrelationCurve, widths, shape_fn):
    dt, f, peak = _prepare(curve)
    w = np.asarray(widths, dtype=np.float64)
    if w.size == 0 or w.min() <= 0:
        raise UsageError("width grid must be nonempty and positive")
    scores = _root_abs_objective(f, peak * shape_fn(dt[None, :], w[:, None]))
    k = int(np.argmin(scores))
    return float(w[k]), peak, float(scores[k])


def fit_cauchy(curve: CorrelationCurve, gamma_grid=WIDTH_GRID) -> CauchyFit:
    gamma, peak, res = _fit_width(curve, gamma_grid, lambda dt, g: g * g / (g * g + dt * dt))
    return CauchyFit(gamma, peak, res)


def fit_gaussian(curve: CorrelationCurve, sigma_grid=WIDTH_GRID) -> GaussianFit:
    sigma, peak, res = _fit_width(curve, sigma_grid, lambda dt, s: np.exp(-(dt * dt) / (2.0 * s * s)))
    return GaussianFit(sigma, peak, res)


def fit_all(curve: CorrelationCurve) -> dict:
    return {
        "modified_cauchy": fit_modified_cauchy(curve),
        "cauchy": fit_cauchy(curve),
        "gaussian": fit_gaussian(curve),
    }


# -- emission -----------------------------------------------------------------

def curve_to_dict(curve: CorrelationCurve, fits: dict | None = None) -> dict:
    fits = fit_all(curve) if fits is None else fits
    out = {
        "t0": curve.reference_time,
        "brightness_exponent": curve.brightness_exponent,
        "points": [p._asdict() for p in curve.points],
        "fits": {},
    }
    for name, fit in fits.items():
        out["fits"][name] = None if fit is None else {k: getattr(fit, k) for k in fit.__dataclass_fields__}
    return out


def plot_csv(curve: CorrelationCurve, fits: dict | None = None) -> str:
    """``t,fraction,model_mc,model_cauchy,model_gauss`` rows, one per point."""
    fits = fit_all(curve) if fits is None else fits
    t = curve.t
    cols = []
    for name in ("modified_cauchy", "cauchy", "gaussian"):
        fit = fits.get(name)
        cols.append(fit.model(t, curve.reference_time) if fit is not None else np.full(len(t), np.nan))
    buf = io.StringIO()
    buf.write("t,fraction,model_mc,model_cauchy,model_gauss\n")
    for k, p in enumerate(curve.points):
        row = (p.t, p.fraction, cols[0][k], cols[1][k], cols[2][k])
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def curve_to_json(curve: CorrelationCurve, fits: dict | None = None) -> str:
    return json.dumps(curve_to_dict(curve, fits), indent=2)
