"""Spline refinement of a grid measure and Metropolis sampling from it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .measures import DiscreteMeasure, ParameterDomain, cdf

MIN_CUBIC_NODES = 4


@dataclass(frozen=True, eq=False)
class RefinedDensity:
    """Piecewise-constant density on a rectangular cell partition.

    ``density[a, b]`` is the value on ``[x_edges[a], x_edges[a+1]] x
    [y_edges[b], y_edges[b+1]]``.  Sampling is restricted to ``domain``.
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    density: np.ndarray
    domain: ParameterDomain
    method: str = "cubic"

    def __post_init__(self):
        d = np.array(self.density, dtype=float)
        if d.shape != (self.x_edges.size - 1, self.y_edges.size - 1):
            raise ValueError("density shape does not match the cell edges")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("density values must be finite and nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "density", d)

    @property
    def fallback(self) -> bool:
        """True when the grid was too small for cubic interpolation."""
        return self.method != "cubic"

    @property
    def cell_areas(self) -> np.ndarray:
        return np.outer(np.diff(self.x_edges), np.diff(self.y_edges))

    @property
    def cell_masses(self) -> np.ndarray:
        return self.density * self.cell_areas

    @property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            0.5 * (self.x_edges[1:] + self.x_edges[:-1]),
            0.5 * (self.y_edges[1:] + self.y_edges[:-1]),
        )

    def total_mass(self) -> float:
        return float(self.cell_masses.sum())

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cell indices of each point (points outside map to the edge cells)."""
        pts = np.atleast_2d(points)
        ia = np.clip(np.searchsorted(self.x_edges, pts[:, 0], side="right") - 1, 0, self.density.shape[0] - 1)
        ib = np.clip(np.searchsorted(self.y_edges, pts[:, 1], side="right") - 1, 0, self.density.shape[1] - 1)
        return ia, ib

    def __call__(self, points) -> np.ndarray:
        ia, ib = self.locate(points)
        return self.density[ia, ib]


def _interp_axis(values, knots, targets, axis, cubic):
    if cubic:
        return CubicSpline(knots, values, axis=axis, bc_type="natural")(targets)
    return np.apply_along_axis(lambda v: np.interp(targets, knots, v), axis, values)


def _inside_edges(fine, lo, hi):
    """Indices of fine edges inside ``(lo, hi)`` plus the two ends.

    Edges within round-off of a bound are dropped so no sliver cells appear.
    """
    eps = 1e-9 * (fine[1] - fine[0])
    keep = np.flatnonzero((fine > lo + eps) & (fine < hi - eps))
    return np.concatenate([[0], keep, [fine.size - 1]]), np.concatenate([[lo], fine[keep], [hi]])


def refine_density(measure: DiscreteMeasure, factor: int) -> RefinedDensity:
    """Interpolate the CDF with a tensor-product natural cubic spline.

    Node ``j`` owns the cell ``[q_j - h/2, q_j + h/2]``; the CDF is known
    exactly at the cell edges and is interpolated onto edges ``factor`` times
    finer.  Fine cells are then cut at the domain boundary and the part of a
    boundary node's cell lying outside is lumped into the first fine cell
    inside, so every node keeps its weight.  Mixed second differences give
    the fine-cell masses; negative ones (spline overshoot) are set to zero and
    the result is renormalised.  Grids with fewer than four nodes on an axis
    use linear interpolation instead (``method == "bilinear"``).
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("refinement factor must be >= 1")
    grid = measure.grid
    dom = grid.domain
    cubic = min(grid.shape) >= MIN_CUBIC_NODES
    e1, e2 = grid.cell_edges()
    F = np.zeros((grid.m1 + 1, grid.m2 + 1))
    F[1:, 1:] = cdf(measure).values

    f1 = np.linspace(e1[0], e1[-1], grid.m1 * factor + 1)
    f2 = np.linspace(e2[0], e2[-1], grid.m2 * factor + 1)
    if factor == 1:
        Ff = F
    else:
        Ff = _interp_axis(F, e1, f1, 0, cubic)
        Ff = _interp_axis(Ff, e2, f2, 1, cubic)
    i1, x1 = _inside_edges(f1, dom.q1_min, dom.q1_max)
    i2, x2 = _inside_edges(f2, dom.q2_min, dom.q2_max)
    Ff = Ff[np.ix_(i1, i2)]
    mass = np.diff(np.diff(Ff, axis=0), axis=1)
    mass = np.clip(mass, 0.0, None)
    total = mass.sum()
    if not total > 0:
        raise ValueError("refined measure has no positive mass")
    mass /= total
    area = np.outer(np.diff(x1), np.diff(x2))
    return RefinedDensity(x1, x2, mass / area, dom, "cubic" if cubic else "bilinear")


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings; ``burn_in`` defaults to 10% of the chain.

    Kept states are ``states[burn_in::thin]``.
    """

    chain_length: int
    burn_in: Optional[int] = None
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.chain_length < 1:
            raise ValueError("chain_length must be >= 1")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.chain_length // 10)
        if not 0 <= self.burn_in < self.chain_length:
            raise ValueError("burn_in must be in [0, chain_length)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def kept(self) -> int:
        return len(range(self.burn_in, self.chain_length, self.thin))


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray  # (n, 2)
    acceptance_rate: float = np.nan

    def __len__(self) -> int:
        return len(self.points)


def metropolis_sample(density: RefinedDensity, config: McmcConfig) -> SampleSet:
    """Independence Metropolis chain with uniform proposals on the domain.

    The chain starts at the centre of the highest-density cell (clipped into
    the domain); a proposal ``q'`` replaces the state ``q`` with probability
    ``min(1, f(q') / f(q))``.  Randomness comes only from a PCG64 generator
    seeded with ``config.seed``.
    """
    dom = density.domain
    lo, hi = dom.lower, dom.upper
    # only the part of the density inside the domain is reachable
    cx, cy = density.centers
    inside = (
        (density.x_edges[1:] > lo[0])[:, None]
        & (density.x_edges[:-1] < hi[0])[:, None]
        & (density.y_edges[1:] > lo[1])[None, :]
        & (density.y_edges[:-1] < hi[1])[None, :]
    )
    reachable = np.where(inside, density.density, 0.0)
    if not np.any(reachable > 0):
        raise ValueError("density is identically zero on the sampling domain")

    a, b = np.unravel_index(np.argmax(reachable), reachable.shape)
    start = np.clip([cx[a], cy[b]], lo, hi)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    steps = config.chain_length
    proposals = lo + (hi - lo) * rng.random((steps, 2))
    u = rng.random(steps)
    f_prop = density(proposals).tolist()
    f_cur = float(density(start[None, :])[0])

    state = np.empty(steps, dtype=np.int64)
    cur = -1
    accepted = 0
    uu = u.tolist()
    for k in range(steps):
        fp = f_prop[k]
        if fp >= f_cur or uu[k] * f_cur < fp:
            cur = k
            f_cur = fp
            accepted += 1
        state[k] = cur

    kept = state[config.burn_in :: config.thin]
    pts = np.where((kept >= 0)[:, None], proposals[np.maximum(kept, 0)], start)
    return SampleSet(pts, accepted / steps)
