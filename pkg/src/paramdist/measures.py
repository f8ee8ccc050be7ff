"""Parameter domains, Dirac-node grids and discrete probability measures.

A measure estimated by this package is a finite mixture of point masses
placed on a fixed rectangular grid of parameter nodes ``(q1, q2)``.  Grids are
stored row-major: node ``j = j1 * m2 + j2`` has coordinates
``(q1_axis[j1], q2_axis[j2])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

WEIGHT_SUM_TOL = 1e-10

# Subset enumeration is 2**n; refuse beyond this.
MAX_PROHOROV_SUPPORT = 20


class ParameterPoint(NamedTuple):
    q1: float
    q2: float


@dataclass(frozen=True)
class ParameterDomain:
    """Closed rectangle ``[q1_min, q1_max] x [q2_min, q2_max]``.

    ``metric_order`` is the ``p`` of the p-metric used as ``d_Q``
    (``np.inf`` gives the max-metric).
    """

    q1_min: float = 0.0
    q1_max: float = 1.0
    q2_min: float = 0.0
    q2_max: float = 1.0
    metric_order: float = 2.0

    def __post_init__(self):
        bounds = (self.q1_min, self.q1_max, self.q2_min, self.q2_max)
        if not all(np.isfinite(b) for b in bounds):
            raise ValueError(f"domain bounds must be finite, got {bounds}")
        if not (0.0 <= self.q1_min < self.q1_max and 0.0 <= self.q2_min < self.q2_max):
            raise ValueError(
                "domain must satisfy 0 <= q_min < q_max on both axes, got "
                f"q1=[{self.q1_min}, {self.q1_max}], q2=[{self.q2_min}, {self.q2_max}]"
            )
        if not self.metric_order >= 1:
            raise ValueError("metric_order must be >= 1")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.q1_min, self.q2_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.q1_max, self.q2_max])

    def contains(self, points, atol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower - atol) & (pts <= self.upper + atol), axis=1)

    def distance(self, a, b) -> np.ndarray:
        """p-metric distance between points (broadcasts over leading axes)."""
        diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if np.isinf(self.metric_order):
            return diff.max(axis=-1)
        return np.sum(diff**self.metric_order, axis=-1) ** (1.0 / self.metric_order)


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Cartesian product of two strictly increasing coordinate axes."""

    domain: ParameterDomain
    q1_axis: np.ndarray
    q2_axis: np.ndarray

    def __post_init__(self):
        q1 = np.array(self.q1_axis, dtype=float).ravel()
        q2 = np.array(self.q2_axis, dtype=float).ravel()
        for name, ax in (("q1", q1), ("q2", q2)):
            if ax.size < 1:
                raise ValueError(f"{name} axis needs at least one node")
            if np.any(np.diff(ax) <= 0):
                raise ValueError(f"{name} axis must be strictly increasing")
        q1.setflags(write=False)
        q2.setflags(write=False)
        object.__setattr__(self, "q1_axis", q1)
        object.__setattr__(self, "q2_axis", q2)
        if not np.all(self.domain.contains(self.nodes)):
            raise ValueError("grid nodes must lie inside the domain")

    @property
    def m1(self) -> int:
        return self.q1_axis.size

    @property
    def m2(self) -> int:
        return self.q2_axis.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m1, self.m2)

    @property
    def size(self) -> int:
        return self.m1 * self.m2

    @property
    def nodes(self) -> np.ndarray:
        """(M, 2) array of node coordinates in row-major order."""
        a, b = np.meshgrid(self.q1_axis, self.q2_axis, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    def points(self) -> list[ParameterPoint]:
        return [ParameterPoint(float(a), float(b)) for a, b in self.nodes]

    def node(self, j: int) -> ParameterPoint:
        j1, j2 = divmod(int(j), self.m2)
        return ParameterPoint(float(self.q1_axis[j1]), float(self.q2_axis[j2]))

    def spacing(self) -> tuple[float, float]:
        """Node spacing per axis; a single-node axis spans the whole domain."""
        d = self.domain
        h1 = (d.q1_max - d.q1_min) if self.m1 == 1 else float(self.q1_axis[1] - self.q1_axis[0])
        h2 = (d.q2_max - d.q2_min) if self.m2 == 1 else float(self.q2_axis[1] - self.q2_axis[0])
        return h1, h2

    def cell_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges of the node-centred cells (uniform grids only).

        Each node owns the cell ``[q - h/2, q + h/2]``; on a grid that includes
        the domain boundary the outermost cells overhang it by ``h/2``.
        """
        h1, h2 = self.spacing()
        e1 = np.append(self.q1_axis - h1 / 2, self.q1_axis[-1] + h1 / 2)
        e2 = np.append(self.q2_axis - h2 / 2, self.q2_axis[-1] + h2 / 2)
        return e1, e2

    def same_as(self, other: "ParameterGrid") -> bool:
        return (
            self is other
            or (
                self.shape == other.shape
                and np.array_equal(self.q1_axis, other.q1_axis)
                and np.array_equal(self.q2_axis, other.q2_axis)
            )
        )


def _axis(lo: float, hi: float, m: int) -> np.ndarray:
    if m == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, m)


def make_uniform_grid(domain: ParameterDomain, m1: int, m2: int) -> ParameterGrid:
    """Equally spaced ``m1 x m2`` grid including the domain corners.

    An axis with a single node uses the midpoint of its interval.
    """
    if int(m1) < 1 or int(m2) < 1:
        raise ValueError(f"node counts must be >= 1, got m1={m1}, m2={m2}")
    return ParameterGrid(
        domain,
        _axis(domain.q1_min, domain.q1_max, int(m1)),
        _axis(domain.q2_min, domain.q2_max, int(m2)),
    )


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """``sum_j p_j delta_{q_j}`` over the nodes of ``grid``."""

    grid: ParameterGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError(f"weights must be nonnegative (min {w.min():.3e})")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1 (sum - 1 = {w.sum() - 1.0:.3e})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, grid: ParameterGrid, j: int) -> "DiscreteMeasure":
        w = np.zeros(grid.size)
        w[j] = 1.0
        return cls(grid, w)

    @classmethod
    def uniform(cls, grid: ParameterGrid) -> "DiscreteMeasure":
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    @classmethod
    def from_unnormalized(cls, grid: ParameterGrid, values) -> "DiscreteMeasure":
        """Clip negatives to zero and rescale to unit mass."""
        w = np.clip(np.asarray(values, dtype=float).ravel(), 0.0, None)
        total = w.sum()
        if not total > 0:
            raise ValueError("cannot normalise a measure with zero total mass")
        return cls(grid, w / total)

    @property
    def table(self) -> np.ndarray:
        """Weights as an (m1, m2) array, axis 0 along q1."""
        return self.weights.reshape(self.grid.shape)

    def support(self, threshold: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights where ``p_j > threshold``."""
        keep = self.weights > threshold
        return self.grid.nodes[keep], self.weights[keep]

    def mean(self) -> np.ndarray:
        return self.weights @ self.grid.nodes


@dataclass(frozen=True, eq=False)
class Cdf2D:
    grid: ParameterGrid
    values: np.ndarray  # (m1, m2), F(q1_axis[a], q2_axis[b])

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_measure(self) -> DiscreteMeasure:
        """Recover node weights from mixed first differences."""
        padded = np.zeros((self.grid.m1 + 1, self.grid.m2 + 1))
        padded[1:, 1:] = self.values
        pmf = np.diff(np.diff(padded, axis=0), axis=1)
        return DiscreteMeasure(self.grid, np.clip(pmf, 0.0, None).ravel())


def cdf(measure: DiscreteMeasure) -> Cdf2D:
    """``F(a, b) = sum of p_j over nodes with q_j1 <= a and q_j2 <= b``."""
    values = np.cumsum(np.cumsum(measure.table, axis=0), axis=1)
    return Cdf2D(measure.grid, values)


def prohorov_distance(
    P: DiscreteMeasure,
    P2: DiscreteMeasure,
    eps_resolution: float,
    metric_order: float | None = None,
) -> float:
    """Brute-force Prohorov distance between two finitely supported measures.

    Every subset ``E`` of the union of supports is enumerated, so this is only
    a testing utility; at most ``MAX_PROHOROV_SUPPORT`` distinct support points
    are accepted.  The result is the smallest multiple ``k * eps_resolution``
    for which both Prohorov inequalities hold for every ``E``, with the
    fattening ``E^eps = {q : d(q, E) < eps}``.  Values are capped at 1.
    """
    if not eps_resolution > 0:
        raise ValueError("eps_resolution must be positive")
    order = P.grid.domain.metric_order if metric_order is None else metric_order

    pts_a, w_a = P.support()
    pts_b, w_b = P2.support()
    points = np.unique(np.vstack([pts_a, pts_b]), axis=0)
    n = len(points)
    if n > MAX_PROHOROV_SUPPORT:
        raise NotImplementedError(
            f"combined support has {n} points; exhaustive enumeration is limited "
            f"to {MAX_PROHOROV_SUPPORT}"
        )

    def masses(pts, w):
        out = np.zeros(n)
        for p, wt in zip(pts, w):
            out[np.flatnonzero(np.all(points == p, axis=1))[0]] += wt
        return out

    mass_a, mass_b = masses(pts_a, w_a), masses(pts_b, w_b)

    diff = np.abs(points[:, None, :] - points[None, :, :])
    if np.isinf(order):
        dist = diff.max(axis=-1)
    else:
        dist = np.sum(diff**order, axis=-1) ** (1.0 / order)

    # Subset masses indexed by bitmask, built by doubling over the points.
    size = 1 << n
    sub_a = np.zeros(size)
    sub_b = np.zeros(size)
    for i in range(n):
        lo, hi = 1 << i, 1 << (i + 1)
        sub_a[lo:hi] = sub_a[:lo] + mass_a[i]
        sub_b[lo:hi] = sub_b[:lo] + mass_b[i]

    bits = 1 << np.arange(n, dtype=np.int64)

    def holds(eps: float) -> bool:
        if eps >= 1.0 - 1e-12:
            return True
        near = (dist < eps).astype(np.int64) @ bits  # neighbourhood bitmask per point
        fat = np.zeros(size, dtype=np.int64)
        for i in range(n):
            lo, hi = 1 << i, 1 << (i + 1)
            fat[lo:hi] = fat[:lo] | near[i]
        tol = 1e-12
        return bool(
            np.all(sub_b <= sub_a[fat] + eps + tol) and np.all(sub_a <= sub_b[fat] + eps + tol)
        )

    k_hi = int(np.ceil(1.0 / eps_resolution))
    k_lo = 0  # invariant: holds(k_lo * res) is False or k_lo == 0
    while k_hi - k_lo > 1:
        mid = (k_lo + k_hi) // 2
        if holds(mid * eps_resolution):
            k_hi = mid
        else:
            k_lo = mid
    return min(k_hi * eps_resolution, 1.0)
