"""Tests for the parameter-to-property reduction"""
import math

import numpy as np
import pytest

from src.analysis.reduction import (
    PROPERTIES,
    PropertySamples,
    PropertySummary,
    kde_mode,
    percentiles,
    reduce,
    silverman_bandwidth,
    sp_ratio,
    summarize,
)
from src.exporters.record_exporter import to_jsonable
from src.model.parameters import CouplingConfig
from src.utils.settings import ReductionConfig

COUPLING = CouplingConfig(rp_ms=250.0)


class TestKdeMode:
    def test_normal_sample(self):
        x = np.random.default_rng(0).normal(500.0, 40.0, size=5000)
        assert kde_mode(x) == pytest.approx(500.0, abs=10.0)

    def test_bimodal_picks_the_heavier_mode(self):
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(300.0, 20.0, 3000), rng.normal(700.0, 20.0, 1000)])
        assert kde_mode(x) == pytest.approx(300.0, abs=15.0)

    def test_degenerate_samples(self):
        assert kde_mode([420.0]) == 420.0
        assert kde_mode([420.0] * 10) == 420.0
        with pytest.raises(ValueError):
            kde_mode([])

    def test_mode_within_sample_range(self):
        x = np.random.default_rng(2).exponential(50.0, size=500) + 100.0
        mode = kde_mode(x)
        assert x.min() <= mode <= x.max()

    def test_subsample_is_seeded(self):
        x = np.random.default_rng(3).gamma(4.0, 30.0, size=3000)
        assert kde_mode(x, max_samples=500, seed=5) == kde_mode(x, max_samples=500, seed=5)

    def test_bandwidth_uses_robust_spread(self):
        x = np.random.default_rng(4).normal(0.0, 10.0, size=4000)
        assert silverman_bandwidth(x) == pytest.approx(10.0 * (4.0 / (3.0 * 4000)) ** 0.2, rel=0.1)


def test_percentiles_linear_interpolation():
    p5, p95 = percentiles(np.arange(1.0, 101.0))
    assert p5 == pytest.approx(5.95)
    assert p95 == pytest.approx(95.05)


def test_sp_ratio():
    assert sp_ratio(3, 1) == 0.25
    assert sp_ratio(0, 4) == 1.0
    assert math.isnan(sp_ratio(0, 0))


class TestSummarize:
    def samples(self, **overrides):
        rng = np.random.default_rng(0)
        base = {name: rng.normal(300.0, 30.0, 800) for name in PROPERTIES}
        base.update(overrides)
        return PropertySamples(**base, n_fp=30, n_sp=10)

    def test_fields(self):
        summary = summarize(self.samples(), ReductionConfig(), np.random.SeedSequence(1))
        for name in PROPERTIES:
            assert summary.phi_5[name] <= summary.phi_max[name] <= summary.phi_95[name]
            assert summary.width(name) > 0
        assert summary.sp_ratio == 0.25
        assert summary.n_samples["r_fp"] == 800

    def test_empty_property_is_nan(self):
        summary = summarize(self.samples(d_sp=np.empty(0)))
        assert math.isnan(summary.phi_max["d_sp"])
        assert not math.isnan(summary.phi_max["d_fp"])

    def test_total_delay_scales_by_ten(self):
        summary = summarize(self.samples())
        total = summary.total_delay()
        assert set(total) == {"d_fp", "d_sp"}
        assert total["d_sp"]["max"] == pytest.approx(10 * summary.phi_max["d_sp"])

    def test_record_keeps_undefined_values(self):
        summary = summarize(PropertySamples(**{name: np.array([300.0, 310.0]) for name in PROPERTIES}))
        record = to_jsonable(summary.to_record())
        assert record["sp_ratio"] is None
        assert record["sp_ratio_defined"] is False
        restored = PropertySummary.from_record(record)
        assert math.isnan(restored.sp_ratio)
        assert restored.phi_max == summary.phi_max


class TestReduce:
    def test_pooled_samples(self, mid_theta):
        thetas = np.vstack([mid_theta.to_array(), mid_theta.to_array()])
        samples = reduce(thetas, 6.0, COUPLING, np.random.SeedSequence(0), duration_ms=30_000.0)
        counts = samples.counts()
        assert counts["r_fp"] == counts["d_fp"] > 0
        assert samples.n_fp + samples.n_sp > 0
        assert np.all(samples.r_sp >= mid_theta.r_min_sp)

    def test_deterministic(self, mid_theta):
        thetas = mid_theta.to_array()[None, :]
        a = reduce(thetas, 6.0, COUPLING, np.random.SeedSequence(4), duration_ms=30_000.0)
        b = reduce(thetas, 6.0, COUPLING, np.random.SeedSequence(4), duration_ms=30_000.0)
        np.testing.assert_array_equal(a.d_sp, b.d_sp)

    def test_subsample_cap(self):
        samples = PropertySamples(**{name: np.arange(100.0) for name in PROPERTIES})
        pools = samples.subsample(30, np.random.SeedSequence(0))
        assert all(v.size == 30 for v in pools.values())
        assert samples.subsample(500, 0)["r_fp"].size == 100
