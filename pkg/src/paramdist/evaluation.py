"""Synthetic aggregate data, leave-one-out cross-validation and output bands."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.stats

from .estimator import (
    AggregateDataset,
    OutputDictionary,
    RegularizationWeights,
    SolverOptions,
    build_dictionary,
    estimate,
)
from .measures import DiscreteMeasure, ParameterDomain, ParameterGrid
from .pde_forward import Episode, TacSeries, discretize_at, propagate
from .sampler import McmcConfig, metropolis_sample, refine_density

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BetaProduct:
    """Independent ``Beta(alpha, beta)`` laws on both axes, scaled to ``domain``."""

    alpha: float = 2.0
    beta: float = 5.0
    domain: ParameterDomain = ParameterDomain()

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta parameters must be positive")

    def _scale(self):
        d = self.domain
        return d.lower, d.upper - d.lower

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        lo, width = self._scale()
        u = rng.beta(self.alpha, self.beta, size=(size, 2))
        return lo + width * u

    def cdf(self, points) -> np.ndarray:
        lo, width = self._scale()
        z = np.clip((np.atleast_2d(points) - lo) / width, 0.0, 1.0)
        F = scipy.stats.beta.cdf(z, self.alpha, self.beta)
        return F[:, 0] * F[:, 1]

    def discretize(self, grid: ParameterGrid) -> DiscreteMeasure:
        """Node weights equal to the probability of each node-centred cell."""
        lo, width = self._scale()
        e1, e2 = grid.cell_edges()
        F1 = scipy.stats.beta.cdf(np.clip((e1 - lo[0]) / width[0], 0, 1), self.alpha, self.beta)
        F2 = scipy.stats.beta.cdf(np.clip((e2 - lo[1]) / width[1], 0, 1), self.alpha, self.beta)
        return DiscreteMeasure.from_unnormalized(grid, np.outer(np.diff(F1), np.diff(F2)))


TrueDistribution = Union[BetaProduct, DiscreteMeasure]


@dataclass(frozen=True)
class SyntheticConfig:
    true_dist: TrueDistribution = BetaProduct()
    path_count: int = 100
    noise_std: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.path_count < 1:
            raise ValueError("path_count must be >= 1")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be >= 0")


def draw_parameters(dist: TrueDistribution, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` parameter pairs as an (size, 2) array."""
    if isinstance(dist, DiscreteMeasure):
        idx = rng.choice(dist.grid.size, size=size, p=dist.weights)
        return dist.grid.nodes[idx]
    return dist.sample(size, rng)


def synthetic_brac(
    n: int,
    tau: float,
    peak: float = 0.08,
    t_peak: float = 1.0,
    elimination: float = 0.015,
    onset: float = 0.0,
) -> np.ndarray:
    """Breath alcohol curve: smooth rise to ``peak`` then linear elimination."""
    t = tau * np.arange(n)
    s = t - onset
    rise = peak * np.sin(0.5 * np.pi * np.clip(s / t_peak, 0.0, 1.0)) ** 2
    fall = np.clip(peak - elimination * (s - t_peak), 0.0, None)
    return np.where(s < 0, 0.0, np.where(s <= t_peak, rise, fall))


# Peak, time to peak, elimination rate and onset for the built-in episodes.
DEFAULT_EPISODE_SHAPES = (
    (0.080, 1.0, 0.015, 0.5),
    (0.055, 0.6, 0.012, 1.5),
    (0.100, 1.5, 0.020, 0.0),
    (0.045, 0.8, 0.010, 2.0),
    (0.070, 1.2, 0.017, 1.0),
    (0.090, 0.5, 0.014, 0.3),
)


def synthetic_inputs(
    count: int = 3,
    n: int = 150,
    tau: float = 0.1,
    shapes: Sequence[tuple[float, float, float, float]] = DEFAULT_EPISODE_SHAPES,
) -> list[Episode]:
    """Input-only episodes built from ``shapes`` (cycled if ``count`` is larger)."""
    out = []
    for i in range(count):
        peak, t_peak, elim, onset = shapes[i % len(shapes)]
        u = synthetic_brac(n, tau, peak, t_peak, elim, onset)
        out.append(Episode(f"ep{i + 1:02d}", tau, u))
    return out


def simulate_paths(params: np.ndarray, inputs: np.ndarray, N: int, tau: float) -> np.ndarray:
    """Outputs for every parameter row; shape (S, n) or (S, n, m)."""
    return np.stack([propagate(discretize_at(q, N, tau), inputs) for q in params])


def simulate_aggregate(
    episodes: Sequence[Episode],
    cfg: SyntheticConfig,
    N: int,
) -> AggregateDataset:
    """Population-mean outputs for ``cfg.path_count`` draws plus Gaussian noise.

    The same parameter draws are shared by all episodes.
    """
    episodes = list(episodes)
    rng = np.random.default_rng(cfg.seed)
    params = draw_parameters(cfg.true_dist, cfg.path_count, rng)
    tau = episodes[0].tau
    for ep in episodes:
        if abs(ep.tau - tau) > 1e-9 * tau:
            raise ValueError("all episodes must share one sampling interval")
    n = max(len(ep) for ep in episodes)
    U = np.zeros((n, len(episodes)))
    for i, ep in enumerate(episodes):
        U[: len(ep), i] = ep.input_u
    mean = simulate_paths(params, U, N, tau).mean(axis=0)
    out = []
    for i, ep in enumerate(episodes):
        y = mean[: len(ep), i]
        if cfg.noise_std > 0:
            y = y + cfg.noise_std * rng.standard_normal(len(ep))
        out.append(ep.with_output(y))
    return AggregateDataset(tuple(out))


def nrmse(measured, estimated) -> float:
    """Root-mean-square error divided by the range of the measured series."""
    y = np.asarray(getattr(measured, "values", measured), dtype=float)
    yhat = np.asarray(getattr(estimated, "values", estimated), dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"series lengths differ: {y.size} vs {yhat.size}")
    span = y.max() - y.min()
    if not span > 0:
        raise ValueError("measured series is flat; NRMSE is undefined")
    return float(np.sqrt(np.mean((y - yhat) ** 2)) / span)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    episode_id: str
    nrmse: float
    seconds: float
    converged: bool = True


@dataclass(frozen=True)
class LoocvReport:
    per_fold: tuple[FoldResult, ...]
    nrmse_mean: float
    M: int
    N: int
    w1: float
    w2: float

    @property
    def excluded(self) -> tuple[FoldResult, ...]:
        return tuple(f for f in self.per_fold if not f.converged)


@dataclass(frozen=True)
class LoocvSettings:
    path_count: int = 100
    refine_factor: int = 4
    thin: int = 10
    solver: SolverOptions = SolverOptions()
    sampling: str = "refined"  # or "grid": draw nodes from the estimated pmf

    def __post_init__(self):
        if self.sampling not in ("refined", "grid"):
            raise ValueError(f"sampling must be 'refined' or 'grid', got {self.sampling!r}")


def sample_estimate(
    measure: DiscreteMeasure,
    count: int,
    seed: int,
    refine_factor: int = 4,
    thin: int = 10,
) -> np.ndarray:
    """``count`` Metropolis draws from the spline-refined version of ``measure``."""
    density = refine_density(measure, refine_factor)
    burn = max(count // 10, 100)
    cfg = McmcConfig(chain_length=burn + count * thin, burn_in=burn, seed=seed, thin=thin)
    return metropolis_sample(density, cfg).points


def loocv(
    dataset: AggregateDataset,
    grid: ParameterGrid,
    N: int,
    reg: RegularizationWeights,
    S: int = 100,
    seed: int = 0,
    settings: Optional[LoocvSettings] = None,
    dictionary: Optional[OutputDictionary] = None,
) -> LoocvReport:
    """Leave-one-episode-out prediction error of the estimated population model.

    Fold ``i`` estimates the weights from the other episodes, draws ``S``
    parameters from the refined estimate (or from the node weights when
    ``settings.sampling == "grid"``), simulates them on episode ``i``'s
    input and scores the pointwise mean against its measured output.  Folds
    whose solve did not converge are reported but left out of the mean.
    """
    settings = settings or LoocvSettings(path_count=S)
    if dataset.m < 2:
        raise ValueError("leave-one-out needs at least two episodes")
    tau = dataset.tau
    if dictionary is None:
        dictionary = build_dictionary(grid, dataset, N)
    folds = []
    for i, test in enumerate(dataset.episodes):
        start = time.perf_counter()
        train_idx = [k for k in range(dataset.m) if k != i]
        train = dataset.subset(train_idx)
        fit = estimate(dictionary.subset(train_idx, n=train.n), train, reg, settings.solver)
        # per-fold seed keeps folds reproducible independently of each other
        fold_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        if settings.sampling == "grid":
            params = draw_parameters(fit.measure, S, np.random.default_rng(fold_seed))
        else:
            params = sample_estimate(
                fit.measure, S, fold_seed, settings.refine_factor, settings.thin
            )
        paths = simulate_paths(params, test.input_u, N, tau)
        err = nrmse(test.output_y, paths.mean(axis=0))
        if not fit.converged:
            logger.warning("fold %d (%s) did not converge; excluded from the mean", i, test.id)
        folds.append(
            FoldResult(i, test.id, err, time.perf_counter() - start, bool(fit.converged))
        )
    kept = [f.nrmse for f in folds if f.converged]
    mean = float(np.mean(kept)) if kept else float("nan")
    return LoocvReport(tuple(folds), mean, grid.size, int(N), reg.w1, reg.w2)


def t_quantile_upper(prob: float, dof: int) -> float:
    """Upper ``prob`` quantile of Student's t with ``dof`` degrees of freedom."""
    return float(scipy.stats.t.isf(prob, dof))


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    times: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    alpha: float
    multiplier: float

    @property
    def lower(self) -> np.ndarray:
        return self.mean - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.mean + self.half_width

    def contains(self, series) -> np.ndarray:
        y = np.asarray(getattr(series, "values", series), dtype=float)
        return (y >= self.lower) & (y <= self.upper)


def confidence_band(paths, alpha: float = 0.05, tau: float = 1.0) -> ConfidenceBand:
    """Bonferroni simultaneous band for the mean of ``S`` sampled output paths."""
    if isinstance(paths, (list, tuple)) and paths and isinstance(paths[0], TacSeries):
        tau = paths[0].tau
        X = np.stack([p.values for p in paths])
    else:
        X = np.atleast_2d(np.asarray(paths, dtype=float))
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    S, n = X.shape
    if S < 2:
        raise ValueError("a band needs at least two paths")
    mult = t_quantile_upper(alpha / (2 * n), S - 1)
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    # constant columns: remove rounding so the band collapses onto the path
    flat = np.ptp(X, axis=0) == 0
    mean[flat] = X[0, flat]
    sd[flat] = 0.0
    return ConfidenceBand(tau * np.arange(1, n + 1), mean, mult * sd / np.sqrt(S), alpha, mult)
