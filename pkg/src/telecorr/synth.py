"""Synthetic telescope/outpost pair with known generative parameters.

Source brightness follows a Zipf-Mandelbrot law.  A source of brightness
``d`` appears in the outpost's month-``t`` set with probability::

    share(d) * drift_beta / (drift_beta + |t - t0|**drift_alpha)

where ``share(d) = min(1, log2(d) / log2(sqrt(n_valid)))`` under the
"brightness" law, or a fixed rate under the "constant" law.  The outpost
also sees background sources the telescope never observed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .correlation import SourceSet, brightness_law, modified_cauchy, month_coordinate
from .distributions import sample_zipf_mandelbrot
from .errors import UsageError
from .pipeline import InternalPrefixes, PacketBatch

__all__ = ["SynthConfig", "SynthDataset", "synth_two_site", "month_labels"]


@dataclass(frozen=True)
class SynthConfig:
    n_sources: int = 100_000
    zm_alpha: float = 2.0
    zm_delta: float = 1.0
    support_max: int = 1 << 20
    n_valid: int = 1 << 30
    months: int = 15
    drift_alpha: float = 1.0
    drift_beta: float = 4.0
    share_law: str = "brightness"
    constant_rate: float = 0.5
    background_sources: int = 0
    start_month: str = "2020-01"
    capture_month: int | None = None
    internal_cidr: str = "44.0.0.0/8"
    invalid_fraction: float = 0.0
    capture_seconds: int = 3600
    emit_packets: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_sources < 1:
            raise UsageError("n_sources must be >= 1")
        if not (self.zm_alpha > 0 and self.zm_delta >= 0):
            raise UsageError("Zipf-Mandelbrot needs alpha > 0 and delta >= 0")
        if self.support_max < 1:
            raise UsageError("support_max must be >= 1")
        if self.n_valid < 4:
            raise UsageError("n_valid must be >= 4")
        if self.months < 3:
            raise UsageError("months must be >= 3")
        if not (self.drift_alpha > 0 and self.drift_beta > 0):
            raise UsageError("drift_alpha and drift_beta must be > 0")
        if self.share_law not in ("brightness", "constant"):
            raise UsageError("share_law must be 'brightness' or 'constant'")
        if not 0 <= self.constant_rate <= 1:
            raise UsageError("constant_rate must lie in [0, 1]")
        if self.background_sources < 0:
            raise UsageError("background_sources must be >= 0")
        if not 0 <= self.invalid_fraction < 1:
            raise UsageError("invalid_fraction must lie in [0, 1)")
        if self.capture_month is not None and not 0 <= self.capture_month < self.months:
            raise UsageError("capture_month must index one of the generated months")
        month_coordinate(self.start_month)

    @property
    def capture_index(self) -> int:
        return self.months // 2 if self.capture_month is None else self.capture_month


@dataclass
class SynthDataset:
    telescope: list[SourceSet]
    outposts: list[tuple[float, set[int]]]
    outpost_labels: list[str]
    ground_truth: dict
    packets: PacketBatch | None = None

    def ground_truth_json(self) -> str:
        return json.dumps(self.ground_truth, indent=2, sort_keys=True)


def month_labels(start: str, count: int) -> list[str]:
    year, month = (int(x) for x in start.split("-"))
    out = []
    for k in range(count):
        idx = year * 12 + (month - 1) + k
        out.append(f"{idx // 12:04d}-{idx % 12 + 1:02d}")
    return out


def _month_center(label: str) -> datetime:
    year, month = (int(x) for x in label.split("-"))
    start = datetime(year, month, 1, tzinfo=timezone.utc)
    nxt = datetime(year + month // 12, month % 12 + 1, 1, tzinfo=timezone.utc)
    return start + (nxt - start) / 2


def _draw_external(rng, n: int, internal: InternalPrefixes, exclude: np.ndarray | None = None) -> np.ndarray:
    """``n`` distinct random addresses outside the internal prefixes (and ``exclude``)."""
    taken = np.zeros(0, dtype=np.uint32) if exclude is None else np.asarray(exclude, dtype=np.uint32)
    out = np.zeros(0, dtype=np.uint32)
    while len(out) < n:
        cand = rng.integers(1 << 24, 0xE0000000, size=2 * (n - len(out)) + 16, dtype=np.uint64).astype(np.uint32)
        cand = cand[~internal.contains(cand)]
        cand = cand[~np.isin(cand, taken) & ~np.isin(cand, out)]
        _, first = np.unique(cand, return_index=True)
        cand = cand[np.sort(first)]
        out = np.concatenate((out, cand[: n - len(out)]))
    return out


def synth_two_site(config: SynthConfig = SynthConfig()) -> SynthDataset:
    """Generate one telescope capture and a monthly outpost series.

    Deterministic for a fixed ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    internal = InternalPrefixes([config.internal_cidr])

    degrees = sample_zipf_mandelbrot(
        config.zm_alpha, config.zm_delta, config.support_max, config.n_sources, seed=rng
    ).values.astype(np.int64)
    ids = _draw_external(rng, config.n_sources, internal)

    labels = month_labels(config.start_month, config.months)
    capture_label = labels[config.capture_index]
    capture_time = _month_center(capture_label)
    window_label = capture_time.isoformat()
    t0 = month_coordinate(window_label)
    t_months = [month_coordinate(lab) for lab in labels]

    if config.share_law == "brightness":
        share = brightness_law(degrees, config.n_valid)
    else:
        share = np.full(len(degrees), config.constant_rate)

    background = _draw_external(rng, config.background_sources, internal, exclude=ids)
    outposts = []
    for t in t_months:
        prob = share * modified_cauchy(t, t0, config.drift_alpha, config.drift_beta)
        seen = ids[rng.random(len(ids)) < prob]
        extra = background[rng.random(len(background)) < 0.5] if len(background) else background
        outposts.append((t, set(seen.tolist()) | set(extra.tolist())))

    telescope = SourceSet(window_label, dict(zip(ids.tolist(), degrees.tolist())))

    packets = None
    n_invalid = 0
    if config.emit_packets:
        packets, n_invalid = _telescope_packets(rng, config, internal, ids, degrees, capture_time)

    truth = asdict(config)
    truth.update(
        {
            "t0": t0,
            "capture_label": window_label,
            "month_labels": labels,
            "month_coordinates": t_months,
            "telescope_sources": int(len(ids)),
            "telescope_valid_packets": int(degrees.sum()),
            "invalid_packets": int(n_invalid),
        }
    )
    return SynthDataset([telescope], outposts, labels, truth, packets)


def _telescope_packets(rng, config: SynthConfig, internal: InternalPrefixes, ids, degrees, capture_time):
    """Time-ordered darkspace packets: each source sends ``d`` packets inward."""
    src = np.repeat(ids, degrees)
    net = int(internal._nets[0])
    host_bits = 32 - int(config.internal_cidr.partition("/")[2] or 32)
    dst = (net + rng.integers(0, 1 << host_bits, size=len(src), dtype=np.uint64)).astype(np.uint32)

    n_invalid = int(round(len(src) * config.invalid_fraction / (1 - config.invalid_fraction)))
    if n_invalid:
        # Backscatter-like noise: internal -> external, removed by the quadrant filter.
        bad_src = (net + rng.integers(0, 1 << host_bits, size=n_invalid, dtype=np.uint64)).astype(np.uint32)
        bad_dst = rng.choice(ids, size=n_invalid)
        src = np.concatenate((src, bad_src))
        dst = np.concatenate((dst, bad_dst))

    order = rng.permutation(len(src))
    src, dst = src[order], dst[order]
    start = capture_time - timedelta(seconds=config.capture_seconds / 2)
    start_us = int(start.timestamp()) * 1_000_000
    ts = start_us + np.sort(rng.integers(0, config.capture_seconds * 1_000_000, size=len(src)))
    return PacketBatch(ts, src, dst), n_invalid
