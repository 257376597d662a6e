import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radiomap.apsm import ApsmEstimator
from radiomap.errors import ConfigurationError, InvalidInputError, OrderingError
from radiomap.harness import (
    GridSpec,
    IdwEstimator,
    NnEstimator,
    baseline_idw,
    baseline_nn,
    grid_eval,
    learning_curve,
    sampled_radius,
    tracking_experiment,
)
from radiomap.kernels import KernelBank, Measurement, Position
from radiomap.multikernel import MultiKernelEstimator
from radiomap.simulator import Area, GroundTruthMap, Pl0Shift, default_scenario, simulate_stream


class Const:
    def __init__(self, v):
        self.v = v

    def predict(self, pts):
        return np.full(len(np.atleast_2d(pts)), float(self.v))


def meas(x, y, v, t):
    return Measurement(Position(x, y), v, t)


def mk():
    return MultiKernelEstimator(KernelBank.geometric(8, 12.5))


class TestGridSpec:
    def test_centers_cover_area(self):
        g = GridSpec(Area(0, 1000, 0, 500), 50, 25)
        np.testing.assert_allclose(g.xs[[0, -1]], [10.0, 990.0])
        np.testing.assert_allclose(g.ys[[0, -1]], [10.0, 490.0])
        assert g.centers().shape == (1250, 2)
        np.testing.assert_array_equal(g.centers()[1], [10.0, 30.0])

    def test_degenerate(self):
        with pytest.raises(ConfigurationError):
            GridSpec(nx=1)


class TestGridEval:
    def test_truth_oracle_zero_error(self):
        gmap = GroundTruthMap.build(default_scenario(0))
        rep = grid_eval(gmap, gmap, GridSpec())
        assert rep.rmse == 0.0 and rep.mae == 0.0

    def test_zero_vs_constant(self):
        rep = grid_eval(Const(0.0), Const(100.0), GridSpec())
        assert rep.rmse == 100.0 and rep.mae == 100.0
        assert rep.error_grid.shape == (50, 50)

    def test_two_pass_recomputation(self):
        gmap = GroundTruthMap.build(default_scenario(1))
        stream, _ = simulate_stream(default_scenario(1, n_steps=300))
        est = IdwEstimator()
        for m in stream:
            est.observe(m)
        grid = GridSpec(nx=20, ny=30)
        rep = grid_eval(est.snapshot(), gmap, grid, stream)
        pts = grid.centers()
        total = 0.0
        for p in pts:
            e = max(est.snapshot().predict([p])[0], 0.0) - gmap.predict([p])[0]
            total += e * e
        assert rep.rmse == pytest.approx(np.sqrt(total / len(pts)), rel=1e-12)

    def test_sampled_region(self):
        ms = [meas(10, 10, 50.0, 1), meas(30, 10, 50.0, 2), meas(30, 40, 50.0, 3)]
        # nearest-neighbour distances 20, 20, 30: median 20, radius 40
        assert sampled_radius(np.array([m.position for m in ms])) == 40.0
        rep = grid_eval(Const(0.0), Const(1.0), GridSpec(), ms)
        assert rep.sampled_radius == 40.0 and rep.sampled_rmse == 1.0
        assert 0 < rep.sampled_fraction < 0.02

    def test_no_measurements_sampled_nan(self):
        rep = grid_eval(Const(0.0), Const(1.0), GridSpec())
        assert np.isnan(rep.sampled_rmse) and rep.sampled_fraction == 0.0

    def test_estimates_clamped(self):
        rep = grid_eval(Const(-5.0), Const(0.0), GridSpec())
        assert rep.rmse == 0.0

    @given(st.integers(0, 2**32 - 1))
    def test_rmse_at_least_mae(self, seed):
        rng = np.random.default_rng(seed)
        ms = [meas(*rng.uniform(0, 1000, 2), float(rng.uniform(0, 200)), t) for t in range(1, 30)]
        est = NnEstimator()
        for m in ms:
            est.observe(m)
        rep = grid_eval(est.snapshot(), Const(rng.uniform(0, 200)), GridSpec(nx=10, ny=10), ms)
        assert rep.rmse >= rep.mae - 1e-12 and rep.rmse >= 0

    @pytest.mark.parametrize("make", [mk, ApsmEstimator, IdwEstimator])
    def test_snapshot_isolation(self, make):
        est = make()
        stream, _ = simulate_stream(default_scenario(2, n_steps=120))
        for m in stream:
            est.observe(m)
        before = pickle.dumps(est)
        grid_eval(est.snapshot(), GroundTruthMap.build(default_scenario(2)), GridSpec(), stream)
        assert pickle.dumps(est) == before


class TestBaselines:
    def test_single_measurement_everywhere(self):
        ms = [meas(3, 4, 77.0, 1)]
        for x in [(0, 0), (900, 100), (3, 4)]:
            assert baseline_idw(ms, x) == 77.0
            assert baseline_nn(ms, x) == 77.0

    def test_exact_hit(self):
        ms = [meas(0, 0, 10.0, 1), meas(100, 0, 20.0, 2)]
        assert baseline_idw(ms, (100, 0)) == 20.0
        assert baseline_idw(ms, (50, 0)) == 15.0

    def test_nn_tie_lowest_time(self):
        ms = [meas(10, 0, 2.0, 9), meas(-10, 0, 1.0, 4)]
        assert baseline_nn(ms, (0, 0)) == 1.0

    def test_idw_large_power_approaches_nn(self, rng):
        ms = [meas(*rng.uniform(0, 1000, 2), float(rng.uniform(50, 150)), t) for t in range(1, 41)]
        q = rng.uniform(0, 1000, (50, 2))
        idw = np.array([baseline_idw(ms, x, power=12) for x in q])
        nn = np.array([baseline_nn(ms, x) for x in q])
        pos = np.array([m.position for m in ms])
        d = np.sort(np.hypot(*(q[:, None, :] - pos[None]).transpose(2, 0, 1)), axis=1)
        clear = d[:, 1] / d[:, 0] > 1.5  # nearest neighbour clearly nearest
        np.testing.assert_allclose(idw[clear], nn[clear], atol=1.0)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            baseline_idw([], (0, 0))
        with pytest.raises(InvalidInputError):
            baseline_nn([], (0, 0))

    def test_estimators_enforce_order(self):
        est = NnEstimator()
        est.observe(meas(0, 0, 1.0, 2))
        with pytest.raises(OrderingError):
            est.observe(meas(0, 0, 1.0, 2))

    def test_empty_snapshot_predicts_zero(self):
        np.testing.assert_array_equal(IdwEstimator().snapshot().predict([(1, 1)]), [0.0])


class TestLearningCurve:
    SC = default_scenario(4, n_steps=400)

    def test_empty_checkpoints(self):
        assert learning_curve(self.SC, mk, []) == []

    def test_beyond_stream(self):
        with pytest.raises(ConfigurationError):
            learning_curve(self.SC, mk, [100, 401])

    def test_not_increasing(self):
        with pytest.raises(ConfigurationError):
            learning_curve(self.SC, mk, [200, 200])

    def test_reproducible(self):
        a = learning_curve(self.SC, mk, [100, 400])
        b = learning_curve(self.SC, mk, [100, 400])
        assert [n for n, _ in a] == [100, 400]
        for (_, ra), (_, rb) in zip(a, b):
            assert ra.summary() == rb.summary()
            np.testing.assert_array_equal(ra.estimate, rb.estimate)


class TestTracking:
    def test_null_event_matches_no_event(self):
        sc = default_scenario(5, n_steps=600)
        cps = [200, 400, 600]
        a = tracking_experiment(sc, None, 300, mk, cps)
        b = tracking_experiment(sc, Pl0Shift(0, 0.0), 300, mk, cps)
        assert a.sampled_rmse == b.sampled_rmse
        assert len(a.sampled_rmse) == len(cps)

    def test_event_step_range(self):
        with pytest.raises(ConfigurationError):
            tracking_experiment(default_scenario(0, n_steps=100), None, 101, mk, [50])

    def test_spike_then_decrease(self):
        sc = default_scenario(3, n_steps=4000)
        r = tracking_experiment(sc, Pl0Shift(0, 6.0), 2500, mk, list(range(2000, 4001, 100)))
        pre = r.level(2000, 2500)
        peak = max(r.at(n) for n in (2600, 2700, 2800))
        assert pre == pytest.approx(6.135, abs=1e-3)
        assert peak == pytest.approx(8.274, abs=1e-3)
        assert r.at(4000) == pytest.approx(5.155, abs=1e-3)
        assert peak > pre and r.at(4000) < peak
