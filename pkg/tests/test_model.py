import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bayesdl.corpus import CellGrid
from bayesdl.errors import DomainError, MalformedRow, MissingImputation
from bayesdl.model import (
    Parametrization,
    PriorSpec,
    Theta,
    cell_log_likelihood,
    check_mono_conditions,
    log_inv_gamma,
    log_likelihood,
    log_prior,
    mean,
    mean_du,
    mean_surface,
    read_theta,
    sample_prior,
    write_theta,
)


def sparse_grid(cells):
    return CellGrid.from_cells(cells)


class TestMean:
    def test_zero_overs(self, simple_theta):
        for w in range(10):
            assert mean(0, w, simple_theta) == 0.0

    def test_closed_form_value(self):
        a = np.array([400, 350, 300, 280, 250, 200, 150, 100, 80, 60], float)
        b = np.full(10, 0.05)
        b[:3] = [0.03, 0.035, 0.04]
        theta = Theta(a, b, 1.0)
        assert mean(50, 3, theta) == pytest.approx(280 * (1 - math.exp(-2.5)))
        assert round(mean(50, 3, theta), 2) == 257.02

    def test_increasing_in_u(self, simple_theta):
        for w in range(10):
            assert mean(10, w, simple_theta) < mean(11, w, simple_theta)

    @pytest.mark.parametrize("u,w", [(-1, 0), (51, 0), (10, 10), (10, -1)])
    def test_domain(self, simple_theta, u, w):
        with pytest.raises(DomainError):
            mean(u, w, simple_theta)

    def test_surface_matches_scalar(self, simple_theta):
        m = mean_surface(simple_theta)
        assert m.shape == (50, 10)
        for u, w in [(1, 0), (17, 4), (50, 9)]:
            assert m[u - 1, w] == mean(u, w, simple_theta)

    def test_gradient_matches_finite_difference(self, theta_star):
        h = 1e-5
        for u in (0.5, 5.0, 20.0, 37.5, 49.0):
            for w in range(10):
                f = lambda x: theta_star.a[w] * -math.expm1(-theta_star.b[w] * x)
                fd = (f(u + h) - f(u - h)) / (2 * h)
                assert mean_du(u, w, theta_star) == pytest.approx(fd, rel=1e-6)

    def test_ratio_invariant_to_scaling_a(self, theta_star):
        scaled = theta_star.replace(a=theta_star.a * 3.7)
        r1 = mean_surface(theta_star) / mean(50, 0, theta_star)
        r2 = mean_surface(scaled) / mean(50, 0, scaled)
        np.testing.assert_allclose(r1, r2, rtol=1e-13)


class TestTheta:
    def test_invariants(self, simple_theta):
        assert simple_theta.is_valid(PriorSpec())
        assert not simple_theta.replace(a=simple_theta.a[::-1]).is_valid()
        b = simple_theta.b.copy()
        b[1] = simple_theta.a[0] * simple_theta.b[0] / simple_theta.a[1] * 1.01
        assert not simple_theta.replace(b=b).is_valid()

    def test_prior_bounds(self, simple_theta):
        assert not simple_theta.is_valid(PriorSpec(A0=250.0))
        assert not simple_theta.is_valid(PriorSpec(B0=0.02))
        # under AC the bound is on c_0 instead of b_0
        assert simple_theta.is_valid(PriorSpec(B0=0.02, parametrization="ac"))
        assert not simple_theta.is_valid(PriorSpec(C0=5.0, parametrization="ac"))

    def test_read_only(self, simple_theta):
        with pytest.raises(ValueError):
            simple_theta.a[0] = 1.0

    def test_from_ac(self, simple_theta):
        t = Theta.from_ac(simple_theta.a, simple_theta.c, 2.0)
        np.testing.assert_allclose(t.b, simple_theta.b, rtol=1e-15)

    def test_serialization_round_trip(self, rng):
        for _ in range(20):
            theta = sample_prior(PriorSpec(), rng)
            buf = io.StringIO()
            write_theta(theta, buf)
            assert read_theta(io.StringIO(buf.getvalue())) == theta
        assert buf.getvalue().splitlines()[0] == "w,a,b"
        assert buf.getvalue().splitlines()[-1].startswith("sigma2,")

    def test_read_rejects_incomplete(self):
        with pytest.raises(MalformedRow):
            read_theta(io.StringIO("w,a,b\n0,1,2\nsigma2,1\n"))


class TestPriorSpec:
    def test_defaults(self):
        s = PriorSpec()
        assert (s.A0, s.B0, s.gamma_a, s.gamma_b) == (2000.0, 100.0, 0.1, 0.1)
        assert s.parametrization is Parametrization.AB

    @pytest.mark.parametrize("field", ["A0", "B0", "C0", "gamma_a", "gamma_b"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            PriorSpec(**{field: 0.0})


class TestSamplePrior:
    @pytest.mark.parametrize("par", list(Parametrization))
    def test_orderings(self, rng, par):
        spec = PriorSpec(parametrization=par)
        for _ in range(500):
            t = sample_prior(spec, rng)
            assert np.all(np.diff(t.a) < 0) and np.all(t.a > 0)
            assert np.all(np.diff(t.c) < 0)
            assert t.is_valid(spec)

    def test_a0_mean(self, rng):
        a0 = np.array([sample_prior(PriorSpec(), rng).a[0] for _ in range(10_000)])
        assert a0.mean() == pytest.approx(1000.0, rel=0.02)

    def test_nested_uniform_marginal(self, rng):
        # a_1 / a_0 is U(0, 1) and independent of a_0
        draws = [sample_prior(PriorSpec(), rng) for _ in range(4000)]
        ratio = np.array([d.a[1] / d.a[0] for d in draws])
        assert stats.kstest(ratio, "uniform").pvalue > 1e-3

    def test_deterministic(self):
        mk = lambda: np.random.Generator(np.random.Philox(3))
        assert sample_prior(PriorSpec(), mk()) == sample_prior(PriorSpec(), mk())


class TestLogPrior:
    def test_outside_support(self, simple_theta):
        bad = simple_theta.replace(a=np.r_[simple_theta.a[1], simple_theta.a[0], simple_theta.a[2:]])
        assert log_prior(bad, PriorSpec()) == -math.inf

    def test_hand_evaluation(self):
        a = np.array([1000, 500, 400, 300, 200, 150, 100, 80, 60, 40], float)
        b = np.linspace(0.02, 0.05, 10)
        theta = Theta(a, b, 50.0)
        c = a * b
        expected = -math.log(2000) - math.log(100)
        expected += -math.log(1000)  # a_1 | a_0 ~ U(0, 1000)
        expected += -math.log(c[0] / a[1])
        for w in range(1, 9):
            expected += -math.log(a[w]) - math.log(c[w] / a[w + 1])
        expected += stats.invgamma.logpdf(50.0, 0.1, scale=0.1)
        assert log_prior(theta, PriorSpec()) == pytest.approx(expected, rel=1e-12)

    def test_flat_in_b_inside_support(self, simple_theta):
        # b_9 does not enter any normaliser, so moving it inside its support leaves the prior unchanged
        b = simple_theta.b.copy()
        b[9] *= 0.5
        assert log_prior(simple_theta.replace(b=b), PriorSpec()) == pytest.approx(
            log_prior(simple_theta, PriorSpec()), abs=1e-12)

    def test_ac_density(self, simple_theta):
        spec = PriorSpec(parametrization="ac")
        a, c = simple_theta.a, simple_theta.c
        expected = -math.log(2000) - math.log(2000)
        for w in range(9):
            expected += -math.log(a[w]) - math.log(c[w])
        expected += log_inv_gamma(simple_theta.sigma2, 0.1, 0.1)
        assert log_prior(simple_theta, spec) == pytest.approx(expected, rel=1e-12)

    def test_inv_gamma(self):
        for s2 in (0.01, 1.0, 300.0):
            assert log_inv_gamma(s2, 2.5, 4.0) == pytest.approx(stats.invgamma.logpdf(s2, 2.5, scale=4.0))


class TestLogLikelihood:
    def test_zero_residual_single_cell(self, simple_theta):
        m = mean(30, 2, simple_theta)
        g = sparse_grid({(30, 2): (4, m)})
        ll = log_likelihood(simple_theta, g, include_missing=False)
        assert ll == pytest.approx(-0.5 * math.log(2 * math.pi * simple_theta.sigma2 / 4))

    def test_doubling_n(self, simple_theta):
        m = mean(30, 2, simple_theta)
        l4 = log_likelihood(simple_theta, sparse_grid({(30, 2): (4, m)}), include_missing=False)
        l8 = log_likelihood(simple_theta, sparse_grid({(30, 2): (8, m)}), include_missing=False)
        assert l8 - l4 == pytest.approx(0.5 * math.log(2))

    def test_two_cells_against_scipy(self, simple_theta):
        cells = {(50, 0): (7, 250.0), (12, 6): (3, 40.0)}
        ll = log_likelihood(simple_theta, sparse_grid(cells), include_missing=False)
        sd = math.sqrt(simple_theta.sigma2)
        expected = sum(stats.norm.logpdf(v, mean(u, w, simple_theta), sd / math.sqrt(n))
                       for (u, w), (n, v) in cells.items())
        assert ll == pytest.approx(expected, rel=1e-12)

    def test_missing_needs_imputation(self, simple_theta):
        g = sparse_grid({(50, 0): (1, 250.0)})
        with pytest.raises(MissingImputation):
            log_likelihood(simple_theta, g)
        partial = {(u, w): 1.0 for u, w in g.missing_cells()[:-1]}
        with pytest.raises(MissingImputation):
            log_likelihood(simple_theta, g, partial)

    def test_imputed_cells_weight_one(self, simple_theta):
        g = sparse_grid({(50, 0): (5, 250.0)})
        imputed = {cell: 10.0 for cell in g.missing_cells()}
        full = log_likelihood(simple_theta, g, imputed)
        obs = log_likelihood(simple_theta, g, include_missing=False)
        sd = math.sqrt(simple_theta.sigma2)
        extra = sum(stats.norm.logpdf(10.0, mean(u, w, simple_theta), sd) for u, w in g.missing_cells())
        assert full == pytest.approx(obs + extra, rel=1e-12)

    def test_additive_over_cells(self, simple_theta, rng):
        from conftest import full_grid
        g = full_grid(simple_theta, rng)
        total = log_likelihood(simple_theta, g)
        parts = cell_log_likelihood(simple_theta, g.rbar, g.n)
        assert total == pytest.approx(math.fsum(parts.ravel()), rel=1e-12)


class TestMonotonicity:
    @pytest.mark.parametrize("par", list(Parametrization))
    def test_prior_draws_clean(self, rng, par):
        for _ in range(300):
            assert check_mono_conditions(sample_prior(PriorSpec(parametrization=par), rng)).ok

    def test_equal_asymptotes(self):
        theta = Theta(np.full(10, 100.0), np.full(10, 0.05), 1.0)
        report = check_mono_conditions(theta)
        assert not report.ok
        assert report.first.axis == "w"

    def test_product_violation_at_small_u(self):
        a = np.array([300.0, 200.0, 180.0, 160.0, 140.0, 120.0, 100.0, 80.0, 60.0, 40.0])
        b = np.full(10, 0.03)
        b[1] = 1.5 * a[0] * b[0] / a[1]
        theta = Theta(a, b, 1.0)
        bad = sorted(v.u for v in check_mono_conditions(theta).violations if v.axis == "w" and v.w == 0)
        assert bad and bad[0] == 1
        # the two curves cross once: m(u, 1) >= m(u, 0) up to the crossing, below it after
        cross = bad[-1]
        assert bad == list(range(1, cross + 1))
        assert cross < 50
        assert mean(cross, 1, theta) >= mean(cross, 0, theta)
        assert mean(cross + 1, 1, theta) < mean(cross + 1, 0, theta)

    def test_saturated_columns_judged_exactly(self):
        # every float mean equals a_w here, yet the exact surface is strictly monotone
        a = np.linspace(1000.0, 100.0, 10)
        b = 60.0 * a[0] / a * np.linspace(1.0, 0.5, 10)
        theta = Theta(a, b, 1.0)
        assert theta.is_valid()
        assert check_mono_conditions(theta).ok


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_valid_theta_is_monotone(seed):
    theta = sample_prior(PriorSpec(), np.random.Generator(np.random.Philox(seed)))
    m = mean_surface(theta)
    assert np.all(np.diff(m, axis=0) >= 0)
    assert np.all(np.diff(m, axis=1) <= 0)
    assert check_mono_conditions(theta).ok
