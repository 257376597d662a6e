import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radiomap.apsm import (
    ApsmConfig,
    ApsmEstimator,
    Hyperslab,
    RkhsFunction,
    apsm_update,
    evaluate,
    project_hyperslab,
    rkhs_distance,
    run_stream_apsm,
)
from radiomap.errors import ConfigurationError, InvalidInputError, OrderingError
from radiomap.kernels import (
    DictConfig,
    Dictionary,
    KernelSpec,
    Measurement,
    Position,
    gram_matrix,
)

K = KernelSpec("gaussian", 50.0)


def make_f(rng, n=5, kernel=K, scale=50.0):
    pts = rng.uniform(0, 300, (n, 2))
    d = Dictionary(positions=pts, values=np.zeros(n), times=np.arange(1, n + 1), reference_kernel=kernel)
    return RkhsFunction(kernel, d, rng.normal(0, scale, n))


def slab_at(f, rng, idx=None, eps=1.0):
    pos = f.dictionary.positions[rng.integers(len(f.dictionary)) if idx is None else idx]
    return Hyperslab(tuple(pos), float(rng.uniform(0, 150)), eps)


class TestEvaluate:
    def test_empty(self):
        assert evaluate(RkhsFunction.zero(K, Dictionary()), (3, 3)) == 0.0

    def test_single_entry(self):
        d = Dictionary(positions=[[10.0, 20.0]], values=[0.0], times=[1])
        assert evaluate(RkhsFunction(K, d, [120.0]), (10.0, 20.0)) == 120.0

    def test_two_entries_match_gram_row(self, rng):
        f = make_f(rng, n=2)
        g = gram_matrix(K, f.dictionary.positions)
        for i in range(2):
            assert evaluate(f, f.dictionary.positions[i]) == pytest.approx(g[i] @ f.coefficients, abs=1e-12)

    def test_coefficient_length_checked(self):
        with pytest.raises(InvalidInputError):
            RkhsFunction(K, Dictionary(), [1.0])


class TestProjectHyperslab:
    def test_inside_unchanged(self, rng):
        f = make_f(rng)
        x = f.dictionary.positions[0]
        s = Hyperslab(tuple(x), evaluate(f, x) + 0.5, 1.0)
        assert project_hyperslab(f, s) is f

    def test_zero_function_closed_form(self):
        d = Dictionary(positions=[[0.0, 0.0]], values=[0.0], times=[1])
        f = RkhsFunction(K, d, [0.0])
        out = project_hyperslab(f, Hyperslab((0.0, 0.0), 100.0, 1.0))
        assert out.coefficients[0] == 99.0
        assert 100.0 - evaluate(out, (0.0, 0.0)) == 1.0

    def test_off_dictionary_adds_temporary_center(self):
        f = RkhsFunction.zero(K, Dictionary())
        out = project_hyperslab(f, Hyperslab((5.0, 5.0), -10.0, 2.0))
        np.testing.assert_array_equal(out.extra_centers, [[5.0, 5.0]])
        assert out.extra_coefficients[0] == -8.0

    def test_minimality_vs_random_feasible(self, rng):
        f = make_f(rng)
        s = slab_at(f, rng, eps=1.0)
        p = project_hyperslab(f, s)
        d_star = rkhs_distance(p, f)
        for _ in range(100):
            g = RkhsFunction(K, f.dictionary, f.coefficients + rng.normal(0, 30, len(f.coefficients)))
            g = project_hyperslab(g, s)  # a random member of the slab
            assert d_star <= rkhs_distance(g, f) + 1e-9

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
    def test_idempotent_and_feasible(self, seed, eps):
        rng = np.random.default_rng(seed)
        f = make_f(rng)
        s = slab_at(f, rng, eps=eps)
        p = project_hyperslab(f, s)
        assert abs(s.target - evaluate(p, s.position)) <= eps + 1e-9
        pp = project_hyperslab(p, s)
        np.testing.assert_allclose(pp.weights, p.weights, rtol=0, atol=1e-9)

    @given(st.integers(0, 2**32 - 1))
    def test_nonexpansive(self, seed):
        rng = np.random.default_rng(seed)
        f = make_f(rng)
        g = RkhsFunction(K, f.dictionary, rng.normal(0, 50, len(f.coefficients)))
        s = slab_at(f, rng)
        assert rkhs_distance(project_hyperslab(f, s), project_hyperslab(g, s)) <= rkhs_distance(f, g) + 1e-9

    def test_distance_to_itself_is_exactly_zero(self, rng):
        f = make_f(rng)
        s = Hyperslab(tuple(rng.uniform(0, 300, 2)), 500.0, 1.0)  # off-dictionary slab adds a temporary
        p = project_hyperslab(f, s)
        assert len(p.extra_centers) == 1
        assert rkhs_distance(p, p) == 0.0


class TestApsmConfig:
    @pytest.mark.parametrize("mu", [0.0, 2.0, -1.0])
    def test_mu_range(self, mu):
        with pytest.raises(ConfigurationError):
            ApsmConfig(relaxation_mu=mu)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            ApsmConfig(window_q=2, weights=(0.5, 0.6))

    def test_weights_length(self):
        with pytest.raises(ConfigurationError):
            ApsmConfig(window_q=3, weights=(0.5, 0.5))


class TestApsmUpdate:
    def test_all_satisfied_unchanged(self, rng):
        f = make_f(rng)
        slabs = [Hyperslab(tuple(x), evaluate(f, x), 1.0) for x in f.dictionary.positions[:2]]
        out = apsm_update(f, slabs, ApsmConfig(window_q=2))
        np.testing.assert_array_equal(out.coefficients, f.coefficients)

    def test_reduction_q1_mu1(self, rng):
        for _ in range(20):
            f = make_f(rng)
            s = slab_at(f, rng)
            a = apsm_update(f, [s], ApsmConfig(window_q=1, relaxation_mu=1.0))
            b = project_hyperslab(f, s)
            np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_two_distant_slabs_move_toward_targets(self):
        d = Dictionary(positions=[[0.0, 0.0], [900.0, 900.0]], values=[0, 0], times=[1, 2])
        f = RkhsFunction(K, d)
        slabs = [Hyperslab((0.0, 0.0), 100.0, 1.0), Hyperslab((900.0, 900.0), 80.0, 1.0)]
        out = apsm_update(f, slabs, ApsmConfig(window_q=2))
        for s in slabs:
            assert abs(s.target - evaluate(out, s.position)) < abs(s.target - evaluate(f, s.position))
        # distant centers barely interact, so each moves by half its overshoot
        assert evaluate(out, (0.0, 0.0)) == pytest.approx(49.5, abs=1e-6)
        assert evaluate(out, (900.0, 900.0)) == pytest.approx(39.5, abs=1e-6)

    def test_weight_count_mismatch(self, rng):
        f = make_f(rng)
        with pytest.raises(ConfigurationError):
            apsm_update(f, [slab_at(f, rng)], ApsmConfig(window_q=2), weights=(0.5, 0.5))

    def test_empty_recent(self, rng):
        with pytest.raises(InvalidInputError):
            apsm_update(make_f(rng), [], ApsmConfig())

    def test_rejected_measurement_merges_into_nearest_center(self):
        d = DictConfig(10, 0.5, K).empty(K)
        f = RkhsFunction.zero(K, d)
        m1 = Measurement(Position(0.0, 0.0), 50.0, 1)
        f = apsm_update(f, [Hyperslab((0.0, 0.0), 50.0, 1.0)], ApsmConfig(window_q=1), new=m1)
        # 5 m away: coherence ~0.995 > 0.5, so no admission; the step lands on the nearest center
        m2 = Measurement(Position(5.0, 0.0), 80.0, 2)
        s2 = Hyperslab((5.0, 0.0), 80.0, 1.0)
        r = 80.0 - evaluate(f, (5.0, 0.0))
        out = apsm_update(f, [s2], ApsmConfig(window_q=1), new=m2)
        assert len(out.dictionary) == 1 and len(out.extra_centers) == 0
        assert out.coefficients[0] == pytest.approx(f.coefficients[0] + (r - 1.0), abs=1e-12)

    def test_negligible_temporary_discarded(self):
        d = Dictionary(positions=[[0.0, 0.0]], values=[0], times=[1])
        f = RkhsFunction(K, d, [1e9])
        # residual just past the slab: the step is far below 1e-6 * max|coef|
        target = evaluate(f, (400.0, 0.0)) + 1.0 + 1e-3
        out = apsm_update(f, [Hyperslab((400.0, 0.0), target, 1.0)], ApsmConfig(window_q=1))
        np.testing.assert_array_equal(out.coefficients, f.coefficients)


def bump_batch(n=50, spacing=120.0, kernel=KernelSpec("gaussian", 60.0), seed=7):
    """Noiseless samples of a function in the span of kernels centered at the sample points."""
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.arange(10) * spacing, np.arange(5) * spacing, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])[:n] + 50.0
    h = rng.uniform(40.0, 120.0, n)
    y = gram_matrix(kernel, pts) @ h
    return pts, h, y


class TestRunStream:
    def test_empty_stream(self):
        f, diags = run_stream_apsm([])
        assert len(f.dictionary) == 0 and diags == []
        assert evaluate(f, (1, 1)) == 0.0

    def test_diagnostics_length(self, rng):
        stream = [Measurement(Position(*rng.uniform(0, 500, 2)), 100.0, t) for t in range(1, 31)]
        _, diags = run_stream_apsm(stream)
        assert [d.step for d in diags] == list(range(1, 31))

    def test_unordered_rejected(self):
        stream = [Measurement(Position(0, 0), 1.0, 2), Measurement(Position(1, 1), 1.0, 1)]
        with pytest.raises(OrderingError):
            run_stream_apsm(stream)
        est = ApsmEstimator()
        est.observe(stream[0])
        with pytest.raises(OrderingError):
            est.observe(stream[1])

    def test_single_bump_converges(self):
        k = KernelSpec("gaussian", 40.0)
        pts = np.random.default_rng(3).uniform(0, 200, (20, 2))
        y = 70.0 * k.of_distance(np.hypot(*(pts - [100.0, 100.0]).T))
        cfg = ApsmConfig(kernel=k, epsilon=1.0, window_q=2)
        est = ApsmEstimator(cfg, DictConfig(400, 0.999, k))
        t = 0
        for _ in range(200):
            for p, v in zip(pts, y):
                t += 1
                est.observe(Measurement(Position(*p), float(v), t))
        res = np.abs(y - est.predict(pts))
        assert res.max() <= 1.0 + 1e-6

    @pytest.mark.parametrize("mu", [0.5, 1.0, 1.5])
    def test_fejer_monotone_on_consistent_data(self, mu):
        k = KernelSpec("gaussian", 60.0)
        pts, h_coef, y = bump_batch(n=20, kernel=k)
        cfg = ApsmConfig(kernel=k, epsilon=0.5, window_q=2, relaxation_mu=mu)
        est = ApsmEstimator(cfg, DictConfig(400, 0.5, k))
        t = 0
        dists = []
        for _ in range(5):
            for p, v in zip(pts, y):
                t += 1
                est.observe(Measurement(Position(*p), float(v), t))
                f = est.snapshot()
                if len(f.dictionary) == len(pts):
                    h = RkhsFunction(k, f.dictionary, h_coef)
                    dists.append(rkhs_distance(f, h))
        assert len(dists) > 50
        assert all(b <= a + 1e-9 for a, b in zip(dists, dists[1:]))

    def test_snapshot_isolated_from_later_updates(self, rng):
        est = ApsmEstimator()
        est.observe(Measurement(Position(10, 10), 100.0, 1))
        snap = est.snapshot()
        before = snap.coefficients.copy()
        est.observe(Measurement(Position(10, 10), 50.0, 2))
        np.testing.assert_array_equal(snap.coefficients, before)
