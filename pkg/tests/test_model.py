import numpy as np
import pytest

from fastdim.model import GaussianModel, LatentState, NoiseModel, eval_noise, exact_flow_map
from fastdim.schedule import build_schedule
from fastdim.solvers import solve_reference


@pytest.fixture(scope="module")
def sched():
    return build_schedule()


def test_protocol(sched):
    assert isinstance(GaussianModel(sched), NoiseModel)


def test_standard_normal_noise_is_sigma_x(sched):
    m = GaussianModel(sched, spread=1.0)
    x = np.array([0.3, -1.2, 2.0])
    for t in (1, 250, 1000, 37.5):
        ev = eval_noise(m, LatentState(x, t), np.zeros(3))
        _, s = sched.alpha_sigma_at(t)
        np.testing.assert_allclose(ev.eps_hat, s * x, rtol=1e-14)


def test_clean_time(sched):
    m = GaussianModel(sched, spread=0.4)
    x = np.array([1.0, 2.0])
    ev = eval_noise(m, LatentState(x, 0), np.array([5.0, -5.0]))
    assert np.all(ev.eps_hat == 0)
    assert np.array_equal(ev.x0_hat, x)


def test_mode_has_zero_noise(sched):
    m = GaussianModel(sched, spread=0.7)
    z = np.array([0.5, -0.25, 1.5])
    for t in (10, 600):
        a, _ = sched.alpha_sigma_at(t)
        ev = eval_noise(m, LatentState(a * z, t), z)
        np.testing.assert_allclose(ev.eps_hat, 0, atol=1e-15)
        np.testing.assert_allclose(ev.x0_hat, z, rtol=1e-12)


def test_parameterizations_consistent(sched):
    rng = np.random.default_rng(11)
    for _ in range(200):
        m = GaussianModel(sched, spread=rng.choice([0.25, 0.5, 1.0, 3.0]))
        t = float(rng.choice([0, rng.integers(1, 1001), rng.uniform(1, 1000)]))
        x = rng.normal(size=6) * 3
        z = rng.normal(size=6)
        ev = eval_noise(m, LatentState(x, t), z)
        a, s = sched.alpha_sigma_at(t)
        np.testing.assert_allclose(a * ev.x0_hat + s * ev.eps_hat, x, atol=1e-10)


def test_dimension_handling(sched):
    m = GaussianModel(sched)
    with pytest.raises(ValueError):
        eval_noise(m, LatentState(np.ones(3), 5), np.ones(2))
    padded = GaussianModel(sched, dim=4)
    np.testing.assert_array_equal(padded.mean([1.0, 2.0], 4), [1, 2, 0, 0])
    np.testing.assert_array_equal(padded.mean([1, 2, 3, 4, 5], 4), [1, 2, 3, 4])
    with pytest.raises(ValueError):
        padded.mean([1.0], 3)


def test_rejects_non_finite(sched):
    with pytest.raises(ValueError):
        LatentState(np.array([1.0, np.nan]), 3)
    m = GaussianModel(sched)
    with pytest.raises(ValueError):
        m.predict_noise(np.ones(2), np.array([np.inf, 0.0]), 4)
    with pytest.raises(ValueError):
        GaussianModel(sched, spread=0.0)


class TestExactFlow:
    def test_identity_transport(self, sched):
        m = GaussianModel(sched, 0.5)
        st = LatentState(np.array([0.1, 0.2]), 321)
        out = exact_flow_map(m, st, np.array([1.0, 0.0]), 321)
        assert np.array_equal(out.x, st.x)

    def test_standard_normal_is_fixed(self, sched):
        m = GaussianModel(sched, 1.0)
        rng = np.random.default_rng(2)
        for _ in range(5):
            s, t = rng.uniform(1, 1000, 2)
            x = LatentState(rng.normal(size=3), s)
            np.testing.assert_allclose(exact_flow_map(m, x, np.zeros(3), t).x, x.x, rtol=1e-14)
            ref = solve_reference(sched, m, np.zeros(3), x, t, 1000)
            assert np.linalg.norm(ref.x - x.x) / np.linalg.norm(x.x) < 1e-8

    def test_roundtrip_through_noise(self, sched):
        m = GaussianModel(sched, 0.3)
        z = np.array([1.0, -2.0, 0.5])
        x0 = LatentState(np.array([0.9, -1.7, 0.2]), 0)
        back = exact_flow_map(m, exact_flow_map(m, x0, z, 1000), z, 0)
        np.testing.assert_allclose(back.x, x0.x, atol=1e-12)

    def test_group_law(self, sched):
        rng = np.random.default_rng(5)
        for _ in range(50):
            m = GaussianModel(sched, rng.choice([0.25, 0.5, 1.0]))
            s, u, t = rng.choice([0.0, *rng.uniform(1, 1000, 3)], 3, replace=False)
            z = rng.normal(size=4)
            x = LatentState(rng.normal(size=4), s)
            two = exact_flow_map(m, exact_flow_map(m, x, z, u), z, t)
            one = exact_flow_map(m, x, z, t)
            np.testing.assert_allclose(two.x, one.x, atol=1e-12)

    def test_matches_reference_integrator(self, sched):
        rng = np.random.default_rng(8)
        for spread in (0.25, 0.5, 1.0):
            m = GaussianModel(sched, spread)
            s, t = rng.uniform(1, 1000, 2)
            z = rng.normal(size=3)
            x = LatentState(rng.normal(size=3), s)
            ex = exact_flow_map(m, x, z, t)
            ref = solve_reference(sched, m, z, x, t, 1000)
            assert np.linalg.norm(ref.x - ex.x) / np.linalg.norm(ex.x) < 1e-8

    def test_transports_marginal_moments(self, sched):
        # samples of p_s pushed through the map follow p_t
        m = GaussianModel(sched, 0.5)
        z = np.array([2.0])
        rng = np.random.default_rng(0)
        a_s, _ = sched.alpha_sigma_at(100)
        n = 4000
        samples = a_s * 2.0 + np.sqrt(m.marginal_var(100)) * rng.standard_normal(n)
        out = np.array([exact_flow_map(m, LatentState([v], 100), z, 800).x[0] for v in samples])
        mean_t = sched.alpha_sigma_at(800)[0] * 2.0
        std_t = np.sqrt(m.marginal_var(800))
        assert abs(out.mean() - mean_t) < 4 * std_t / np.sqrt(n)
        assert abs(out.std() / std_t - 1) < 4 / np.sqrt(2 * n)
