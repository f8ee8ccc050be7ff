import numpy as np
import pytest

from paramdist.estimator import AggregateDataset
from paramdist.evaluation import synthetic_inputs
from paramdist.pde_forward import discretize_at, propagate


def node_dataset(q, episodes, N):
    """Noiseless data generated by the single parameter point ``q``."""
    out = []
    for ep in episodes:
        out.append(ep.with_output(propagate(discretize_at(q, N, ep.tau), ep.input_u)))
    return AggregateDataset(tuple(out))


@pytest.fixture(scope="session")
def short_inputs():
    return synthetic_inputs(count=3, n=80, tau=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _overlap(edges, bins):
    lo = np.maximum(edges[:-1, None], bins[None, :-1])
    hi = np.minimum(edges[1:, None], bins[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def bin_probabilities(density, bins1, bins2):
    """Exact mass of a piecewise-constant density in each bin, renormalised
    over the binned region."""
    mass = _overlap(density.x_edges, bins1).T @ density.density @ _overlap(density.y_edges, bins2)
    return mass / mass.sum()


def chi2_pvalue(points, probs, bins1, bins2):
    from scipy.stats import chisquare

    counts, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=[bins1, bins2])
    expected = probs * counts.sum()
    keep = expected > 0
    return chisquare(counts[keep], expected[keep]).pvalue
