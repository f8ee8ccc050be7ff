"""Least-squares estimation of grid weights from aggregate output data.

The model output for episode ``i`` under ``P = sum_j p_j delta_{q_j}`` is
``sum_j p_j y_i(q_j)``, so with the output dictionary ``H`` (one simulated
trajectory per node and episode) the fit is a convex quadratic program over
the probability simplex.  It is solved with accelerated projected gradient
steps plus an occasional exact solve on the current support.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measures import DiscreteMeasure, ParameterGrid
from .pde_forward import Episode, TAU_RTOL, discretize_at, propagate

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AggregateDataset:
    """Episodes with measured outputs, zero-padded to a common length ``n``."""

    episodes: tuple[Episode, ...]

    def __post_init__(self):
        eps = tuple(self.episodes)
        if len(eps) < 1:
            raise ValueError("a dataset needs at least one episode")
        for ep in eps:
            if ep.output_y is None:
                raise ValueError(f"episode {ep.id!r} has no measured output")
        object.__setattr__(self, "episodes", eps)

    @property
    def m(self) -> int:
        return len(self.episodes)

    @property
    def n(self) -> int:
        return max(len(ep) for ep in self.episodes)

    @property
    def tau(self) -> float:
        taus = [ep.tau for ep in self.episodes]
        t0 = taus[0]
        for ep, t in zip(self.episodes, taus):
            if abs(t - t0) > TAU_RTOL * max(abs(t), abs(t0)):
                raise ValueError(
                    f"episodes do not share a sampling interval: {self.episodes[0].id!r} "
                    f"has tau={t0}, {ep.id!r} has tau={t}"
                )
        return t0

    @property
    def y_matrix(self) -> np.ndarray:
        """(n, m) measured outputs, zero after each episode ends."""
        Y = np.zeros((self.n, self.m))
        for i, ep in enumerate(self.episodes):
            Y[: len(ep), i] = ep.output_y
        return Y

    @property
    def u_matrix(self) -> np.ndarray:
        U = np.zeros((self.n, self.m))
        for i, ep in enumerate(self.episodes):
            U[: len(ep), i] = ep.input_u
        return U

    def subset(self, indices: Sequence[int]) -> "AggregateDataset":
        return AggregateDataset(tuple(self.episodes[i] for i in indices))


@dataclass(frozen=True, eq=False)
class OutputDictionary:
    """Simulated outputs ``H[k, i, j] = y_{k,i}(q_j)``, shape ``(n, m, M)``."""

    grid: ParameterGrid
    N: int
    H: np.ndarray
    episode_ids: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """The ``n x (m M)`` layout: blocks of ``m`` episode columns per node."""
        n, m, M = self.H.shape
        return self.H.transpose(0, 2, 1).reshape(n, M * m)

    def subset(self, indices: Sequence[int], n: Optional[int] = None) -> "OutputDictionary":
        idx = list(indices)
        H = self.H[:, idx, :] if n is None else self.H[:n, idx, :]
        ids = tuple(self.episode_ids[i] for i in idx) if self.episode_ids else ()
        return OutputDictionary(self.grid, self.N, H, ids)


@dataclass(frozen=True)
class RegularizationWeights:
    w1: float = 0.0
    w2: float = 0.0

    def __post_init__(self):
        if not (self.w1 >= 0 and self.w2 >= 0):
            raise ValueError(f"regularization weights must be >= 0, got {self.w1}, {self.w2}")


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iter: int = 50_000
    polish_every: int = 50
    record_history: bool = False


@dataclass(frozen=True, eq=False)
class EstimateResult:
    measure: DiscreteMeasure
    objective: float
    residual_norm: float
    iterations: int
    converged: bool
    gradient_residual: float = np.nan
    history: Optional[np.ndarray] = field(default=None, repr=False)


def build_dictionary(
    grid: ParameterGrid,
    dataset: AggregateDataset,
    N: int,
    workers: Optional[int] = None,
) -> OutputDictionary:
    """Simulate every episode input at every grid node.

    Inputs are zero-padded to ``dataset.n`` and the model is run over the full
    padded horizon.
    """
    if int(N) < 1:
        raise ValueError("N must be >= 1")
    tau = dataset.tau
    U = dataset.u_matrix
    nodes = grid.nodes

    def column(j):
        return propagate(discretize_at(nodes[j], N, tau), U)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, range(grid.size)))
    else:
        cols = [column(j) for j in range(grid.size)]
    H = np.stack(cols, axis=2)
    return OutputDictionary(grid, int(N), H, tuple(ep.id for ep in dataset.episodes))


def aggregate_output(dictionary: OutputDictionary, measure: DiscreteMeasure) -> np.ndarray:
    """Mean output ``sum_j p_j H[:, :, j]`` as an (n, m) array."""
    if not dictionary.grid.same_as(measure.grid):
        raise ValueError("measure and dictionary are defined on different grids")
    return dictionary.H @ measure.weights


def roughness(p: np.ndarray, shape: tuple[int, int]) -> tuple[float, float]:
    """Sums of squared first differences of the weight table along q1 and q2."""
    table = np.asarray(p, dtype=float).reshape(shape)
    return float(np.sum(np.diff(table, axis=0) ** 2)), float(np.sum(np.diff(table, axis=1) ** 2))


def _check_simplex(p: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    if np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ValueError(
            f"weights are off the simplex (min {p.min():.3e}, sum - 1 = {p.sum() - 1:.3e})"
        )


def objective(
    dictionary: OutputDictionary,
    dataset: AggregateDataset,
    p,
    reg: RegularizationWeights,
) -> float:
    """Squared Frobenius misfit plus the two difference penalties."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size != dictionary.grid.size:
        raise ValueError(f"expected {dictionary.grid.size} weights, got {p.size}")
    _check_simplex(p)
    resid = dataset.y_matrix - dictionary.H @ p
    r1, r2 = roughness(p, dictionary.grid.shape)
    return float(np.sum(resid**2) + reg.w1 * r1 + reg.w2 * r2)


def difference_operator(m1: int, m2: int, axis: int) -> np.ndarray:
    """Dense matrix of first differences of a row-major (m1, m2) table."""
    eye = np.eye(m1 * m2).reshape(m1, m2, m1 * m2)
    return np.diff(eye, axis=axis).reshape(-1, m1 * m2)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{p >= 0, sum p = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _power_norm(Q: np.ndarray, iters: int = 100) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(Q.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = Q @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= 1e-6 * nw:
            lam = nw
            break
        lam = nw
    return lam


class _Quadratic:
    """``f(p) = p'Qp - 2c'p + const`` assembled from the dictionary."""

    def __init__(self, dictionary, dataset, reg):
        n, m, M = dictionary.H.shape
        if dataset.m != m or dataset.n != n:
            raise ValueError(
                f"dictionary is {n}x{m} (steps x episodes) but data is {dataset.n}x{dataset.m}"
            )
        A = dictionary.H.reshape(n * m, M)
        y = dataset.y_matrix.reshape(n * m)
        m1, m2 = dictionary.grid.shape
        Q = A.T @ A
        if reg.w1 > 0 and m1 > 1:
            D = difference_operator(m1, m2, 0)
            Q = Q + reg.w1 * (D.T @ D)
        if reg.w2 > 0 and m2 > 1:
            D = difference_operator(m1, m2, 1)
            Q = Q + reg.w2 * (D.T @ D)
        self.Q = 0.5 * (Q + Q.T)
        self.c = A.T @ y
        self.const = float(y @ y)

    def value(self, p):
        return float(p @ (self.Q @ p) - 2.0 * self.c @ p + self.const)

    def grad(self, p):
        return 2.0 * (self.Q @ p - self.c)


def _face_minimizer(f: _Quadratic, support: np.ndarray) -> Optional[np.ndarray]:
    """Minimise ``f`` on the affine hull of the face spanned by ``support``."""
    s = support.size
    K = np.zeros((s + 1, s + 1))
    K[:s, :s] = 2.0 * f.Q[np.ix_(support, support)]
    K[:s, s] = 1.0
    K[s, :s] = 1.0
    rhs = np.append(2.0 * f.c[support], 1.0)
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:s]


def estimate(
    dictionary: OutputDictionary,
    dataset: AggregateDataset,
    reg: RegularizationWeights = RegularizationWeights(),
    opts: SolverOptions = SolverOptions(),
    initial: Optional[np.ndarray] = None,
) -> EstimateResult:
    """Minimise the regularised misfit over the probability simplex.

    Starts from the uniform weights (or the projection of ``initial``) and runs monotone FISTA with a backtracked
    step ``1/L``.  Every ``opts.polish_every`` iterations the quadratic is
    minimised exactly on the current support; the move is kept (truncated at
    the simplex boundary if needed) whenever it lowers the objective.
    Convergence is declared when the gradient-mapping norm falls below
    ``opts.tolerance`` times its value at the starting point.
    """
    f = _Quadratic(dictionary, dataset, reg)
    M = dictionary.grid.size
    grid = dictionary.grid

    def finish(p, it, converged, gres, hist):
        p = project_simplex(p)
        measure = DiscreteMeasure(grid, p)
        resid = dataset.y_matrix - dictionary.H @ p
        return EstimateResult(
            measure=measure,
            objective=objective(dictionary, dataset, p, reg),
            residual_norm=float(np.linalg.norm(resid)),
            iterations=it,
            converged=converged,
            gradient_residual=gres,
            history=None if hist is None else np.asarray(hist),
        )

    x = np.full(M, 1.0 / M) if initial is None else project_simplex(np.ravel(initial))
    if M == 1:
        return finish(x, 0, True, 0.0, [f.value(x)] if opts.record_history else None)

    L = max(2.0 * _power_norm(f.Q), 1e-300)

    def gmap(p, g):
        return L * np.linalg.norm(p - project_simplex(p - g / L))

    fx = f.value(x)
    gx = f.grad(x)
    scale = gmap(x, gx)
    hist = [fx] if opts.record_history else None
    if scale == 0.0:
        return finish(x, 0, True, 0.0, hist)
    target = opts.tolerance * scale

    y, t = x.copy(), 1.0
    it = 0
    gres = scale
    converged = False
    while it < opts.max_iter:
        it += 1
        gy = f.grad(y)
        fy = f.value(y)
        while True:
            z = project_simplex(y - gy / L)
            d = z - y
            fz = f.value(z)
            if fz <= fy + gy @ d + 0.5 * L * (d @ d) + 1e-14 * max(abs(fy), 1.0):
                break
            L *= 2.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fz <= fx:
            x_next, f_next = z, fz
        else:
            x_next, f_next = x, fx
        if fz > fx:
            # extrapolation overshot: restart momentum from the current iterate
            y, t_next = x.copy(), 1.0
        else:
            y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x)
        x, fx, t = x_next, f_next, t_next

        if opts.polish_every and it % opts.polish_every == 0:
            support = np.flatnonzero(x > 0)
            cand = _face_minimizer(f, support)
            if cand is not None:
                full = np.zeros(M)
                full[support] = cand
                step = full - x
                neg = step < 0
                # largest feasible step toward the face minimiser
                alpha = 1.0
                if np.any(full < 0):
                    alpha = float(np.min(x[neg] / -step[neg]))
                    alpha = min(alpha, 1.0)
                trial = np.maximum(x + alpha * step, 0.0)
                trial /= trial.sum()
                ft = f.value(trial)
                if ft < fx:
                    x, fx = trial, ft
                    y, t = x.copy(), 1.0

        if hist is not None:
            hist.append(fx)
        gx = f.grad(x)
        gres = gmap(x, gx)
        if gres <= target:
            converged = True
            break

    if not converged:
        logger.warning(
            "estimate stopped after %d iterations with gradient residual %.3e (target %.3e)",
            it, gres, target,
        )
    return finish(x, it, converged, gres, hist)
