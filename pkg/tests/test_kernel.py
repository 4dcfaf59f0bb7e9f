"""Sweep kernels: agreement between backends and with the model's densities."""
import math

import numpy as np
import pytest

from bayesdl import _kernel_py, sampler
from bayesdl.corpus import CellGrid
from bayesdl.model import Parametrization, PriorSpec, Theta, log_likelihood, log_prior, sample_prior

from conftest import full_grid

needs_compiled = pytest.mark.skipif("compiled" not in sampler.available_backends(),
                                    reason="compiled kernel not built")


def sparse_grid(theta, rng, keep=0.6):
    g = full_grid(theta, rng)
    mask = rng.random((50, 10)) < keep
    mask[49, 0] = True
    n = np.where(mask, g.n, 0)
    return CellGrid(n, np.where(mask, g.rbar, np.nan), g.g50)


def kernel_inputs(theta, grid, par):
    a = list(theta.a)
    s = list(theta.b if par is Parametrization.AB else theta.c)
    values = np.where(grid.missing, 0.0, grid.rbar).T.tolist()
    weights = grid.n.astype(float).T.tolist()
    return a, s, values, weights


@needs_compiled
class TestBackendsAgree:
    @pytest.mark.parametrize("par", list(Parametrization))
    @pytest.mark.parametrize("augment", [False, True])
    def test_bit_identical(self, theta_star, rng, par, augment):
        grid = sparse_grid(theta_star, rng)
        cfg = sampler.McmcConfig(burn_in=30, keep=20, thin=3, seed=11, augment_missing=augment)
        spec = PriorSpec(parametrization=par)
        fast = sampler.run_chain(grid, spec, cfg, backend="compiled")
        slow = sampler.run_chain(grid, spec, cfg, backend="python")
        for name in ("a", "b", "sigma2", "imputed"):
            np.testing.assert_array_equal(getattr(fast, name), getattr(slow, name))
        assert fast.evaluations == slow.evaluations

    def test_collapse_raised_by_both(self):
        # a_1 above A0 leaves a_0 an empty interval
        a = np.linspace(300.0, 120.0, 10)
        a[1] = 2500.0
        bad = Theta.__new__(Theta)
        object.__setattr__(bad, "a", a)
        object.__setattr__(bad, "b", np.full(10, 0.01))
        object.__setattr__(bad, "sigma2", 1.0)
        grid = CellGrid.from_cells({(50, 0): (3, 250.0)})
        cfg = sampler.McmcConfig(burn_in=1, keep=1)
        for backend in ("compiled", "python"):
            with pytest.raises(sampler.SliceCollapse):
                sampler.run_chain(grid, PriorSpec(), cfg, backend=backend, init=bad)


class TestPartialTarget:
    """The kernel's one-coordinate target differs from the full log posterior by a constant."""

    @pytest.mark.parametrize("par", list(Parametrization))
    def test_constant_offset(self, theta_star, rng, par):
        spec = PriorSpec(parametrization=par)
        grid = full_grid(theta_star, rng)
        ab = par is Parametrization.AB
        a, s, values, weights = kernel_inputs(theta_star, grid, par)
        for k in range(20):
            lo, hi = _kernel_py.coordinate_bounds(k, a, s, ab, spec.A0, spec.B0 if ab else spec.C0)
            diffs = []
            for frac in (0.1, 0.35, 0.6, 0.9):
                x = lo + frac * (min(hi, 4 * max(lo, 1e-3) + 1.0) - lo)
                aa, ss = list(a), list(s)
                if k < 10:
                    aa[k] = x
                else:
                    ss[k - 10] = x
                theta = Theta(aa, ss, theta_star.sigma2) if ab else Theta.from_ac(aa, ss, theta_star.sigma2)
                full = log_prior(theta, spec) + log_likelihood(theta, grid)
                part = _kernel_py.log_target(k, x, aa, ss, theta_star.sigma2, values, weights, ab)
                diffs.append(full - part)
            np.testing.assert_allclose(diffs, diffs[0], rtol=0, atol=1e-7 * max(1.0, abs(diffs[0])))


class TestBounds:
    @pytest.mark.parametrize("par", list(Parametrization))
    def test_support_matches_validity(self, rng, par):
        spec = PriorSpec(parametrization=par)
        ab = par is Parametrization.AB
        for _ in range(30):
            theta = sample_prior(spec, rng)
            a = list(theta.a)
            s = list(theta.b if ab else theta.c)
            for k in range(20):
                lo, hi = _kernel_py.coordinate_bounds(k, a, s, ab, spec.A0, spec.B0 if ab else spec.C0)
                assert lo < hi

                def with_x(x):
                    aa, ss = list(a), list(s)
                    if k < 10:
                        aa[k] = x
                    else:
                        ss[k - 10] = x
                    return Theta(aa, ss, 1.0) if ab else Theta.from_ac(aa, ss, 1.0)

                assert with_x(lo + 0.5 * (hi - lo)).is_valid(spec)
                assert not with_x(hi * (1 + 1e-9)).is_valid(spec)
                if lo > 0:
                    assert not with_x(lo * (1 - 1e-9)).is_valid(spec)

    def test_empty_support_raises(self):
        a = [300.0, 310.0] + list(np.linspace(250.0, 120.0, 8))
        s = [0.01] * 10
        with pytest.raises(_kernel_py.SliceCollapseError):
            _kernel_py.slice_coordinate(0, a, s, 1.0, [[0.0] * 50] * 10, [[0.0] * 50] * 10, True,
                                        2000.0, 100.0, 10.0, 30, np.random.default_rng(0))


def test_prior_coefficients_from_density():
    # d log prior / d log x for each coordinate, by finite differences
    theta = Theta(np.linspace(300.0, 120.0, 10), np.linspace(0.03, 0.045, 10), 5.0)
    for par, coef_a, coef_s in ((Parametrization.AB, _kernel_py.PRIOR_COEF_A_AB, _kernel_py.PRIOR_COEF_B_AB),
                                (Parametrization.AC, _kernel_py.PRIOR_COEF_AC, _kernel_py.PRIOR_COEF_AC)):
        spec = PriorSpec(parametrization=par)
        second = theta.b if par is Parametrization.AB else theta.c
        for k in range(20):
            eps = 1e-7
            coords = [np.array(theta.a), np.array(second)]
            arr = coords[k // 10]
            base = arr[k % 10]
            vals = []
            for f in (1 - eps, 1 + eps):
                arr[k % 10] = base * f
                t = (Theta(coords[0], coords[1], 5.0) if par is Parametrization.AB
                     else Theta.from_ac(coords[0], coords[1], 5.0))
                vals.append(log_prior(t, spec))
            arr[k % 10] = base
            slope = (vals[1] - vals[0]) / (math.log1p(eps) - math.log1p(-eps))
            expected = (coef_a if k < 10 else coef_s)[k % 10]
            assert slope == pytest.approx(expected, abs=1e-5)
