import numpy as np
import pytest

from conftest import bin_probabilities, chi2_pvalue
from paramdist.evaluation import BetaProduct
from paramdist.measures import DiscreteMeasure, ParameterDomain, make_uniform_grid
from paramdist.sampler import McmcConfig, RefinedDensity, metropolis_sample, refine_density

UNIT = ParameterDomain()
BINS10 = np.linspace(0, 1, 11)


def coarse_masses(r, grid):
    """Sum fine-cell masses over each node's cell, by cell centre."""
    cx, cy = r.centers
    a = np.abs(cx[:, None] - grid.q1_axis[None, :]).argmin(axis=1)
    b = np.abs(cy[:, None] - grid.q2_axis[None, :]).argmin(axis=1)
    out = np.zeros(grid.shape)
    np.add.at(out, (a[:, None], b[None, :]), r.cell_masses)
    return out


@pytest.fixture(scope="module")
def beta_measure():
    return BetaProduct(2, 5).discretize(make_uniform_grid(UNIT, 20, 20))


class TestRefine:
    @pytest.mark.parametrize("factor", [1, 2, 4, 7])
    def test_nonnegative_unit_mass(self, beta_measure, factor):
        r = refine_density(beta_measure, factor)
        assert np.all(r.density >= 0)
        assert r.total_mass() == pytest.approx(1.0, abs=1e-9)
        assert r.x_edges[0] == 0 and r.x_edges[-1] == 1
        assert np.all(np.diff(r.x_edges) > 0) and np.all(np.diff(r.y_edges) > 0)

    def test_factor_one_keeps_weights(self, beta_measure):
        r = refine_density(beta_measure, 1)
        np.testing.assert_allclose(r.cell_masses.ravel(), beta_measure.weights, atol=1e-12)

    @pytest.mark.parametrize("factor", [3, 4])
    def test_uniform_stays_uniform(self, factor):
        m = DiscreteMeasure.uniform(make_uniform_grid(UNIT, 6, 5))
        r = refine_density(m, factor)
        inner = r.density[1:-1, 1:-1]
        np.testing.assert_allclose(inner, inner[0, 0], rtol=1e-6)
        # boundary nodes keep their full weight in the boundary cells
        np.testing.assert_allclose(coarse_masses(r, m.grid).ravel(), m.weights, atol=1e-12)

    def test_coarse_aggregates(self, beta_measure):
        r = refine_density(beta_measure, 4)
        coarse = coarse_masses(r, beta_measure.grid)
        assert np.abs(coarse.ravel() - beta_measure.weights).max() <= 0.02

    def test_small_grid_falls_back(self):
        m = DiscreteMeasure.uniform(make_uniform_grid(UNIT, 3, 5))
        r = refine_density(m, 3)
        assert r.fallback and r.method == "bilinear"
        assert r.total_mass() == pytest.approx(1.0, abs=1e-9)
        assert not refine_density(DiscreteMeasure.uniform(make_uniform_grid(UNIT, 4, 4)), 2).fallback

    def test_point_mass_refines(self):
        m = DiscreteMeasure.point_mass(make_uniform_grid(UNIT, 5, 5), 12)
        r = refine_density(m, 4)
        assert r.total_mass() == pytest.approx(1.0, abs=1e-9)
        # spline ringing spreads some mass, but the node's own cell keeps the peak
        coarse = coarse_masses(r, m.grid)
        assert np.unravel_index(coarse.argmax(), coarse.shape) == (2, 2)
        np.testing.assert_allclose(coarse, coarse[::-1, ::-1], atol=1e-12)
        np.testing.assert_allclose(coarse, coarse.T, atol=1e-12)

    def test_bad_factor(self, beta_measure):
        with pytest.raises(ValueError):
            refine_density(beta_measure, 0)


def _box(density):
    e = np.linspace(0, 1, density.shape[0] + 1)
    return RefinedDensity(e, np.linspace(0, 1, density.shape[1] + 1), density, UNIT)


class TestMetropolis:
    def test_uniform_accepts_everything(self):
        s = metropolis_sample(_box(np.ones((4, 4))), McmcConfig(50_000, 0, seed=3))
        assert s.acceptance_rate == 1.0
        bins = np.linspace(0, 1, 6)
        p = chi2_pvalue(s.points, np.full((5, 5), 1 / 25), bins, bins)
        assert p > 0.01

    def test_concentrated_cell(self):
        d = np.full((10, 10), 1e-12)
        d[3, 7] = 100.0 * (1 - 99e-12)
        s = metropolis_sample(_box(d), McmcConfig(20_000, seed=1))
        inside = (np.floor(s.points[:, 0] * 10) == 3) & (np.floor(s.points[:, 1] * 10) == 7)
        assert inside.mean() >= 0.99

    def test_beta_chi_square(self, beta_measure):
        r = refine_density(beta_measure, 4)
        cfg = McmcConfig(5_000 + 50_000 * 10, 5_000, seed=11, thin=10)
        s = metropolis_sample(r, cfg)
        assert len(s) == 50_000
        assert chi2_pvalue(s.points, bin_probabilities(r, BINS10, BINS10), BINS10, BINS10) > 0.01

    def test_deterministic(self, beta_measure):
        r = refine_density(beta_measure, 2)
        a = metropolis_sample(r, McmcConfig(3000, seed=5, thin=2))
        b = metropolis_sample(r, McmcConfig(3000, seed=5, thin=2))
        np.testing.assert_array_equal(a.points, b.points)
        c = metropolis_sample(r, McmcConfig(3000, seed=6, thin=2))
        assert not np.array_equal(a.points, c.points)

    def test_samples_inside_domain(self, beta_measure):
        s = metropolis_sample(refine_density(beta_measure, 4), McmcConfig(5000, seed=0))
        assert np.all((s.points >= 0) & (s.points <= 1))

    def test_config(self):
        cfg = McmcConfig(1000)
        assert cfg.burn_in == 100
        assert cfg.kept == 900
        assert McmcConfig(1000, 100, thin=10).kept == 90
        for bad in (dict(chain_length=0), dict(chain_length=10, burn_in=10), dict(chain_length=10, thin=0)):
            with pytest.raises(ValueError):
                McmcConfig(**bad)

    def test_no_mass_in_domain(self):
        dom = ParameterDomain(0, 1, 0, 1)
        r = RefinedDensity(np.array([1.5, 2.0]), np.array([0.0, 1.0]), np.ones((1, 1)), dom)
        with pytest.raises(ValueError):
            metropolis_sample(r, McmcConfig(10))
