"""Tests for the parameter vector, bounds and the network simulator"""
import math

import numpy as np
import pytest

from src.analysis.reduction import sp_ratio
from src.model.av_node import (
    ADJACENCY,
    COUPLING_NODE,
    NODES_PER_PATHWAY,
    atrial_arrivals,
    coupling_rp_from_data,
    delay,
    refractory,
    simulate,
)
from src.model.parameters import (
    ABC_BOUNDS,
    GA_BOUNDS,
    N_PARAMETERS,
    PARAMETER_NAMES,
    CouplingConfig,
    ModelParameters,
    PathwayParameters,
)

COUPLING = CouplingConfig(rp_ms=250.0, cd_ms=60.0)


class TestParameters:
    def test_array_and_dict_forms_agree(self, mid_theta):
        assert ModelParameters.from_array(mid_theta.to_array()) == mid_theta
        assert ModelParameters.from_dict(mid_theta.to_dict()) == mid_theta
        assert list(mid_theta.to_dict()) == PARAMETER_NAMES

    def test_negative_value_rejected(self, mid_theta):
        values = mid_theta.to_array()
        values[3] = -1.0
        with pytest.raises(ValueError):
            ModelParameters.from_array(values)

    def test_pathway_view(self, mid_theta):
        sp = mid_theta.pathway("sp")
        assert sp.r_min == mid_theta.r_min_sp
        assert sp.tau_d == mid_theta.tau_d_sp
        with pytest.raises(ValueError):
            mid_theta.pathway("xp")

    def test_bounds_tables(self):
        assert GA_BOUNDS.lower.shape == (N_PARAMETERS,)
        assert np.all(ABC_BOUNDS.lower <= GA_BOUNDS.lower)
        assert np.all(ABC_BOUNDS.upper >= GA_BOUNDS.upper)
        ga = GA_BOUNDS.to_dict()
        assert ga["r_min_fp"] == [100.0, 1000.0]
        assert ga["tau_d_sp"] == [25.0, 500.0]
        assert ABC_BOUNDS.to_dict()["d_min_sp"] == [0.1, 80.0]

    def test_contains_and_clip(self, mid_theta):
        assert GA_BOUNDS.contains(mid_theta)
        outside = GA_BOUNDS.upper + 1.0
        assert not GA_BOUNDS.contains(outside)
        np.testing.assert_array_equal(GA_BOUNDS.clip(outside), GA_BOUNDS.upper)

    def test_coupling_validation(self):
        with pytest.raises(ValueError):
            CouplingConfig(rp_ms=0.0)


class TestClosedForms:
    PARAMS = PathwayParameters(r_min=300.0, delta_r=400.0, tau_r=150.0, d_min=8.0, delta_d=25.0, tau_d=90.0)

    def test_refractory_limits(self):
        p = self.PARAMS
        assert refractory(p, 0.0) == pytest.approx(p.r_min, rel=1e-12)
        assert refractory(p, p.tau_r) == pytest.approx(p.r_min + p.delta_r * (1 - math.exp(-1)), rel=1e-12)
        assert refractory(p, math.inf) == pytest.approx(p.r_min + p.delta_r, rel=1e-12)

    def test_delay_limits(self):
        p = self.PARAMS
        assert delay(p, 0.0) == pytest.approx(p.d_min + p.delta_d, rel=1e-12)
        assert delay(p, p.tau_d) == pytest.approx(p.d_min + p.delta_d * math.exp(-1), rel=1e-12)
        assert delay(p, math.inf) == pytest.approx(p.d_min, rel=1e-12)

    def test_random_draws_match_formulas(self):
        rng = np.random.default_rng(3)
        for row in ABC_BOUNDS.scale(rng.random((1000, N_PARAMETERS))):
            p = ModelParameters.from_array(row).pathway("fp")
            t = float(rng.uniform(0, 2000))
            assert refractory(p, t) == pytest.approx(p.r_min + p.delta_r * (1 - math.exp(-t / p.tau_r)), rel=1e-12)
            assert delay(p, t) == pytest.approx(p.d_min + p.delta_d * math.exp(-t / p.tau_d), rel=1e-12)

    def test_zero_time_constant_is_a_step(self):
        p = PathwayParameters(r_min=300.0, delta_r=400.0, tau_r=0.0, d_min=8.0, delta_d=25.0, tau_d=0.0)
        assert refractory(p, 0.0) == 300.0
        assert refractory(p, 1.0) == 700.0
        assert delay(p, 0.0) == 33.0
        assert delay(p, 1.0) == 8.0


def test_topology():
    assert len(ADJACENCY) == 2 * NODES_PER_PATHWAY + 1
    assert ADJACENCY[COUPLING_NODE] == [NODES_PER_PATHWAY - 1, 2 * NODES_PER_PATHWAY - 1]
    assert ADJACENCY[0] == [1]
    assert ADJACENCY[5] == [4, 6]


def test_coupling_rp_is_mean_of_shortest():
    rr = np.concatenate([np.arange(300.0, 310.0), np.full(50, 800.0)])
    assert coupling_rp_from_data(rr) == pytest.approx(304.5)
    with pytest.raises(ValueError):
        coupling_rp_from_data([500.0] * 5)


def test_atrial_arrivals_count():
    rng = np.random.default_rng(0)
    counts = [atrial_arrivals(rng, 8.0, 60_000.0).size for _ in range(50)]
    assert abs(np.mean(counts) - 480.0) < 4 * math.sqrt(480.0 / 50)


class TestSimulate:
    def test_deterministic_per_seed(self, mid_theta):
        a = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 5)
        b = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 5)
        np.testing.assert_array_equal(a.ventricular_times, b.ventricular_times)
        c = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 6)
        assert not np.array_equal(a.ventricular_times, c.ventricular_times)

    def test_rr_never_below_coupling_rp(self, mid_theta):
        for seed in range(10):
            result = simulate(mid_theta, COUPLING, 8.0, 60_000.0, seed)
            assert result.rr_intervals.size > 0
            assert np.all(np.diff(result.ventricular_times) >= COUPLING.rp_ms - 1e-9)

    def test_warmup_intervals_dropped(self, mid_theta):
        full = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 1, warmup_intervals=0)
        trimmed = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 1, warmup_intervals=10)
        np.testing.assert_array_equal(full.rr_intervals[10:], trimmed.rr_intervals)

    def test_pathway_counts_add_up(self, mid_theta):
        result = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 2)
        assert result.n_fp + result.n_sp == result.n_ventricular
        assert result.n_ventricular <= result.n_atrial

    def test_tracking(self, mid_theta):
        result = simulate(mid_theta, COUPLING, 6.0, 60_000.0, 3, track=True)
        tracked = result.tracked
        assert tracked.r_fp.size == tracked.d_fp.size > 0
        assert np.all(tracked.r_fp >= mid_theta.r_min_fp)
        assert np.all(tracked.r_fp <= mid_theta.r_min_fp + mid_theta.delta_r_fp + 1e-9)
        assert np.all(tracked.d_sp >= mid_theta.d_min_sp)
        assert np.all(tracked.d_sp <= mid_theta.d_min_sp + mid_theta.delta_d_sp + 1e-9)

    def test_longer_refractory_periods_conduct_fewer_impulses(self, mid_theta):
        slower = mid_theta.to_dict()
        slower["r_min_fp"] += 300.0
        slower["r_min_sp"] += 300.0
        slower = ModelParameters.from_dict(slower)
        for seed in range(10):
            base = simulate(mid_theta, COUPLING, 8.0, 60_000.0, seed).n_ventricular
            assert simulate(slower, COUPLING, 8.0, 60_000.0, seed).n_ventricular <= base

    def test_blocked_slow_pathway_never_reaches_the_ventricles(self):
        theta = ModelParameters(
            r_min_fp=100.0, delta_r_fp=0.0, tau_r_fp=25.0, d_min_fp=2.0, delta_d_fp=0.0, tau_d_fp=25.0,
            r_min_sp=1300.0, delta_r_sp=1300.0, tau_r_sp=25.0, d_min_sp=200.0, delta_d_sp=0.0, tau_d_sp=25.0,
        )
        result = simulate(theta, COUPLING, 8.0, 60_000.0, 4)
        assert result.n_sp == 0
        assert result.n_fp == result.n_ventricular > 0
        assert sp_ratio(result.n_fp, result.n_sp) == 0.0

    def test_regular_input_is_conducted_one_to_one(self):
        theta = ModelParameters(
            r_min_fp=100.0, delta_r_fp=0.0, tau_r_fp=25.0, d_min_fp=5.0, delta_d_fp=0.0, tau_d_fp=25.0,
            r_min_sp=100.0, delta_r_sp=0.0, tau_r_sp=25.0, d_min_sp=5.0, delta_d_sp=0.0, tau_d_sp=25.0,
        )
        rate = 2.0
        arrivals = np.arange(0.0, 600_000.0, 1000.0 / rate)
        result = simulate(theta, COUPLING, rate, 600_000.0, 0, arrivals=arrivals)
        assert result.n_atrial == arrivals.size
        assert result.n_ventricular == arrivals.size
        assert result.rr_intervals.mean() == pytest.approx(1000.0 / rate, rel=0.05)

    @pytest.mark.parametrize("rate,duration", [(0.0, 1000.0), (6.0, 0.0)])
    def test_invalid_arguments(self, mid_theta, rate, duration):
        with pytest.raises(ValueError):
            simulate(mid_theta, COUPLING, rate, duration, 0)
