import json

import numpy as np
import pytest

from telecorr.correlation import (
    brightness_law,
    fit_modified_cauchy,
    month_coordinate,
    overlap_by_brightness,
    temporal_curve,
)
from telecorr.errors import UsageError
from telecorr.pipeline import InternalPrefixes, WindowSpec, window_and_build
from telecorr.quantities import source_packets
from telecorr.synth import SynthConfig, month_labels, synth_two_site


def test_month_labels_wrap_year():
    assert month_labels("2020-11", 4) == ["2020-11", "2020-12", "2021-01", "2021-02"]


@pytest.mark.parametrize(
    "bad",
    [
        {"months": 2},
        {"n_sources": 0},
        {"zm_alpha": 0.0},
        {"drift_beta": -1.0},
        {"share_law": "linear"},
        {"constant_rate": 1.5},
        {"capture_month": 20},
        {"start_month": "2020/01"},
        {"invalid_fraction": 1.0},
    ],
)
def test_config_validation(bad):
    with pytest.raises(UsageError):
        SynthConfig(**bad)


def test_deterministic_per_seed():
    cfg = SynthConfig(n_sources=3000, emit_packets=True, seed=7)
    a, b = synth_two_site(cfg), synth_two_site(cfg)
    assert a.telescope[0] == b.telescope[0]
    assert a.outposts == b.outposts
    assert a.ground_truth_json() == b.ground_truth_json()
    assert np.array_equal(a.packets.src, b.packets.src)
    assert np.array_equal(a.packets.timestamps, b.packets.timestamps)
    c = synth_two_site(SynthConfig(n_sources=3000, seed=8))
    assert c.telescope[0] != a.telescope[0]


def test_ground_truth_carries_parameters():
    d = synth_two_site(SynthConfig(n_sources=500, months=5, seed=1))
    gt = json.loads(d.ground_truth_json())
    for key in ("zm_alpha", "zm_delta", "drift_alpha", "drift_beta", "n_valid", "seed", "t0", "share_law"):
        assert key in gt
    assert gt["month_labels"] == ["2020-01", "2020-02", "2020-03", "2020-04", "2020-05"]
    assert gt["t0"] == month_coordinate("2020-03")
    assert gt["telescope_valid_packets"] == sum(d.telescope[0].sources.values())


def test_flat_curve_for_huge_drift_beta():
    d = synth_two_site(SynthConfig(n_sources=20_000, months=3, drift_beta=1e6, share_law="constant", seed=2))
    c = temporal_curve(d.telescope[0], 0, d.outposts)
    assert np.ptp(c.fractions) < 0.03
    assert np.allclose(c.fractions, 0.5, atol=0.03)


def test_bright_sources_fully_shared_at_capture():
    cfg = SynthConfig(n_sources=5000, zm_alpha=0.5, support_max=1 << 12, n_valid=1 << 16, seed=3)
    d = synth_two_site(cfg)
    tel = d.telescope[0]
    t0 = d.ground_truth["t0"]
    same = dict(d.outposts)[t0]
    bright = [o for o in overlap_by_brightness(tel, same) if o.exponent >= 8]
    assert bright and all(o.fraction == 1.0 for o in bright)


def test_brightness_law_per_bin():
    d = synth_two_site(SynthConfig(seed=4))
    tel = d.telescope[0]
    same = dict(d.outposts)[d.ground_truth["t0"]]
    ids, deg = tel._arrays()
    for o in overlap_by_brightness(tel, same):
        if o.eligible >= 400:
            mask = (deg >= 1 << o.exponent) & (deg < 2 << o.exponent)
            expected = float(np.mean(brightness_law(deg[mask], 1 << 30)))
            assert abs(o.fraction - expected) <= 0.05


@pytest.mark.parametrize("seed", range(3))
def test_default_drift_recovered(seed):
    d = synth_two_site(SynthConfig(seed=seed))
    tel = d.telescope[0]
    checked = 0
    for e in range(1, 12):
        if len(tel.in_bin(e)) < 5000:
            continue
        fit = fit_modified_cauchy(temporal_curve(tel, e, d.outposts))
        assert 0.8 <= fit.alpha <= 1.2 and 3.0 <= fit.beta <= 5.25, (e, fit)
        checked += 1
    assert checked >= 2


def test_background_sources_not_in_telescope():
    d = synth_two_site(SynthConfig(n_sources=1000, background_sources=500, seed=5))
    tel = set(d.telescope[0].sources)
    extra = set().union(*(ids for _, ids in d.outposts)) - tel
    assert 400 <= len(extra) <= 500


def test_packets_reproduce_telescope():
    cfg = SynthConfig(n_sources=2000, support_max=1 << 10, emit_packets=True, invalid_fraction=0.1, seed=6)
    d = synth_two_site(cfg)
    p = d.packets
    assert np.all(np.diff(p.timestamps) >= 0)
    total_valid = d.ground_truth["telescope_valid_packets"]
    assert len(p) == total_valid + d.ground_truth["invalid_packets"]
    n_valid = 1 << int(np.floor(np.log2(total_valid)))
    out = window_and_build(p, WindowSpec(n_valid, 1 << 6), InternalPrefixes([cfg.internal_cidr]))
    assert out.n_valid_packets == total_valid
    assert sum(m.total_packets for m in out.matrices) + out.remainder == total_valid
    keep = InternalPrefixes([cfg.internal_cidr]).external_to_internal(p.src, p.dst)
    ids, n = np.unique(p.src[keep], return_counts=True)
    counts = dict(zip(ids.tolist(), n.tolist()))
    assert counts == d.telescope[0].sources
    assert source_packets(out.matrices[0]).sum() == n_valid
