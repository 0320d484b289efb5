import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fastdim.schedule import FD_STEP, TimeGrid, build_schedule, make_time_grid

# Reference values from a 40-digit mpmath evaluation of the product formula.
MP_ALPHA = {1: 0.99994999874993749609, 2: 0.99989004995049330674, 500: 0.28068506092687892927, 1000: 0.0063849331624923349488}
MP_SIGMA = {1: 0.01, 2: 0.014828621311504316651, 500: 0.95979992528259464508, 1000: 0.99997961610650369578}
MP_LAMBDA = {1: 4.6051201834879246889, 2: 4.2110861372425842137, 500: -1.2294915904063563278, 1000: -5.0537938733458734154}


@pytest.fixture(scope="module")
def sched():
    return build_schedule()


class TestBuild:
    def test_beta_endpoints(self, sched):
        assert sched.beta[1] == 0.0001
        assert sched.beta[1000] == pytest.approx(0.0199801, abs=1e-15)
        assert np.isnan(sched.beta[0])

    def test_first_alpha(self, sched):
        assert sched.alpha[1] ** 2 == pytest.approx(0.9999, abs=1e-15)

    def test_clean_endpoint(self, sched):
        assert sched.alpha[0] == 1.0
        assert sched.sigma[0] == 0.0
        assert sched.lambda_[0] == np.inf

    def test_variance_preserving(self, sched):
        assert np.max(np.abs(sched.alpha**2 + sched.sigma**2 - 1.0)) < 1e-12

    @pytest.mark.parametrize("i", sorted(MP_ALPHA))
    def test_against_high_precision(self, sched, i):
        assert sched.alpha[i] == pytest.approx(MP_ALPHA[i], rel=1e-12)
        assert sched.sigma[i] == pytest.approx(MP_SIGMA[i], rel=1e-12)
        assert sched.lambda_[i] == pytest.approx(MP_LAMBDA[i], rel=1e-12)

    def test_against_plain_product(self, sched):
        a2 = 1.0
        for i in range(1, 1001):
            a2 *= 1.0 - (0.0001 + (i - 1) * (0.02 - 0.0001) / 1000)
            assert sched.alpha[i] ** 2 == pytest.approx(a2, rel=1e-12)

    def test_monotone(self, sched):
        assert np.all(np.diff(sched.alpha[1:]) < 0)
        assert np.all(np.diff(sched.sigma[1:]) > 0)
        assert np.all(np.diff(sched.lambda_[1:]) < 0)

    def test_terminal_is_mostly_noise(self, sched):
        a, s = sched.alpha_sigma_at(1000)
        assert a < 0.1
        assert s > 0.99

    def test_tables_are_read_only(self, sched):
        with pytest.raises(ValueError):
            sched.alpha[3] = 0.5

    @pytest.mark.parametrize(
        "args",
        [(1000, 0.02, 0.0001), (1000, 0.0, 0.02), (1000, 0.01, 1.0), (1, 0.0001, 0.02), (10.5, 0.0001, 0.02)],
    )
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(ValueError):
            build_schedule(*args)


class TestContinuous:
    def test_integer_log_snr(self, sched):
        assert sched.log_snr(1000) == pytest.approx(MP_LAMBDA[1000], rel=1e-12)
        assert sched.log_snr(1000) == math.log(sched.alpha[1000] / sched.sigma[1000])

    def test_midpoint(self, sched):
        for i in (1, 17, 500, 999):
            assert sched.log_snr(i + 0.5) == pytest.approx(
                (sched.lambda_[i] + sched.lambda_[i + 1]) / 2, abs=1e-14
            )

    def test_floor(self, sched):
        for t in (0.0, 0.5, 0.999):
            with pytest.raises(ValueError):
                sched.log_snr(t)
        with pytest.raises(ValueError):
            sched.log_snr(1000.01)

    def test_alpha_sigma_rejects_below_floor(self, sched):
        with pytest.raises(ValueError):
            sched.alpha_sigma_at(0.5)
        assert sched.alpha_sigma_at(0) == (1.0, 0.0)

    def test_monotone_on_random_points(self, sched):
        rng = np.random.default_rng(7)
        t = np.sort(rng.uniform(1, 1000, 1000))
        lam = sched.log_snr(t)
        a, s = sched.alpha_sigma_at(t)
        assert np.all(np.diff(lam) < 0)
        assert np.all(np.diff(a) < 0)
        assert np.all(np.diff(s) > 0)

    def test_variance_preserving_everywhere(self, sched):
        rng = np.random.default_rng(3)
        t = rng.uniform(1, 1000, 1000)
        a, s = sched.alpha_sigma_at(t)
        assert np.max(np.abs(a**2 + s**2 - 1)) < 1e-12
        for tt in t[:50]:
            a, s = sched.alpha_sigma_at(float(tt))
            assert abs(a * a + s * s - 1) < 1e-12

    def test_integer_queries_match_tables(self, sched):
        t = np.arange(0, 1001)
        a, s = sched.alpha_sigma_at(t.astype(float))
        assert np.max(np.abs(a - sched.alpha)) < 1e-12
        assert np.max(np.abs(s - sched.sigma)) < 1e-12
        # the lambda route agrees with the tables as well
        lam = sched.log_snr(t[1:].astype(float) + 0.0)
        a_l = 1 / np.sqrt(1 + np.exp(-2 * lam))
        assert np.max(np.abs(a_l - sched.alpha[1:])) < 1e-12


class TestDriftDiffusion:
    def test_signs(self, sched):
        for t in np.linspace(1.01, 999.99, 400):
            f, g2 = sched.drift_diffusion(t)
            assert f < 0
            assert g2 > 0

    def test_drift_integrates_to_alpha_ratio(self, sched):
        for a, b in [(1.5, 10.0), (20.0, 300.0), (250.0, 999.0), (2.0, 999.0)]:
            pts = np.arange(math.ceil(a), math.floor(b) + 1)
            integral, _ = quad(lambda t: sched.drift_diffusion(t)[0], a, b, points=pts, limit=2000)
            ratio = sched.alpha_sigma_at(b)[0] / sched.alpha_sigma_at(a)[0]
            assert math.exp(integral) == pytest.approx(ratio, rel=1e-4)

    def test_vp_relation(self, sched):
        # for a VP schedule g^2 = -2 f, up to finite-difference error
        for t in (3.3, 77.7, 512.25, 998.0):
            f, g2 = sched.drift_diffusion(t)
            assert g2 == pytest.approx(-2 * f, rel=1e-5)

    def test_rejects_boundary(self, sched):
        with pytest.raises(ValueError):
            sched.drift_diffusion(1.0)
        with pytest.raises(ValueError):
            sched.drift_diffusion(1000.0)
        sched.drift_diffusion(1.0 + 2 * FD_STEP)

    def test_piece_form_agrees_inside_piece(self, sched):
        for t in (5.5, 400.25):
            assert sched.drift_diffusion(t, piece=int(t)) == pytest.approx(sched.drift_diffusion(t), rel=1e-12)
        # at a knot the piece form uses the one-sided slope of its segment
        f_left, _ = sched.drift_diffusion(10.0, piece=9)
        f_right, _ = sched.drift_diffusion(10.0, piece=10)
        assert f_left != f_right


class TestTimeGrid:
    def test_identity(self, sched):
        g = make_time_grid(sched, 1000)
        assert np.array_equal(g.indices, np.arange(1001))

    def test_two_steps(self, sched):
        assert list(make_time_grid(sched, 2)) == [0, 500, 1000]

    def test_three_steps_round_half_up(self, sched):
        assert list(make_time_grid(sched, 3)) == [0, 333, 667, 1000]
        assert list(make_time_grid(sched, 80))[:3] == [0, 13, 25]

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=1, max_value=1000))
    def test_endpoints_and_distinct(self, n):
        g = make_time_grid(build_schedule(), n)
        assert len(g) == n + 1
        assert g.indices[0] == 0 and g.indices[-1] == 1000
        assert np.all(np.diff(g.indices) > 0)

    def test_rejects(self, sched):
        with pytest.raises(ValueError):
            make_time_grid(sched, 1001)
        with pytest.raises(ValueError):
            make_time_grid(sched, 0)
        with pytest.raises(ValueError):
            TimeGrid(np.array([1, 5, 10]), 2)
        with pytest.raises(ValueError):
            TimeGrid(np.array([0, 5, 5]), 2)
