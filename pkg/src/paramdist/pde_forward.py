"""Linear-spline Galerkin model of transdermal transport and its sampled form.

The diffusion model on the unit interval,

    x_t = q1 x_etaeta,   q1 x_eta(t, 0) = x(t, 0),   q1 x_eta(t, 1) = q2 u(t),
    y(t) = x(t, 0),

is projected onto hat functions on a uniform mesh of ``N`` subintervals,
giving ``mass @ x' = -(q1 * stiffness + E00) @ x + q2 * e_N * u``.  Under a
zero-order-hold input the sampled system is exactly
``x_k = a_hat x_{k-1} + b_hat u_{k-1}``, ``y_k = x_k[0]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .measures import ParameterPoint

TAU_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    n_intervals: int
    mass: np.ndarray
    stiffness: np.ndarray
    boundary_term: np.ndarray
    q: ParameterPoint
    generator: np.ndarray  # A = -mass^{-1} (q1 K + E00)
    input_vector: np.ndarray  # B = q2 mass^{-1} e_N

    @property
    def size(self) -> int:
        return self.n_intervals + 1

    @property
    def form_matrix(self) -> np.ndarray:
        """Matrix of the sesquilinear form, ``q1 * K + E00``."""
        return self.q.q1 * self.stiffness + self.boundary_term

    def output_vector(self) -> np.ndarray:
        c = np.zeros(self.size)
        c[0] = 1.0
        return c


@dataclass(frozen=True, eq=False)
class DiscreteTimeSystem:
    a_hat: np.ndarray
    b_hat: np.ndarray
    c_hat: np.ndarray
    tau: float

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.c_hat @ x

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.a_hat))))


@dataclass(frozen=True, eq=False)
class Episode:
    """One drinking episode: BrAC input and (optionally) measured TAC.

    ``input_u[k]`` is held over ``[k tau, (k+1) tau)``; ``output_y[k]`` is the
    TAC sampled at ``(k+1) tau``.
    """

    id: str
    tau: float
    input_u: np.ndarray
    output_y: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"episode {self.id!r}: tau must be positive, got {self.tau}")
        u = np.array(self.input_u, dtype=float).ravel()
        if u.size == 0 or not np.all(np.isfinite(u)):
            raise ValueError(f"episode {self.id!r}: input must be nonempty and finite")
        u.setflags(write=False)
        object.__setattr__(self, "input_u", u)
        if self.output_y is not None:
            y = np.array(self.output_y, dtype=float).ravel()
            if y.size != u.size:
                raise ValueError(
                    f"episode {self.id!r}: output length {y.size} != input length {u.size}"
                )
            if not np.all(np.isfinite(y)):
                raise ValueError(f"episode {self.id!r}: output must be finite")
            y.setflags(write=False)
            object.__setattr__(self, "output_y", y)

    def __len__(self) -> int:
        return self.input_u.size

    def with_output(self, y) -> "Episode":
        return Episode(self.id, self.tau, self.input_u, y)

    def times(self) -> np.ndarray:
        """Sample times ``tau, 2 tau, ..., n tau`` of the outputs."""
        return self.tau * np.arange(1, len(self) + 1)


@dataclass(frozen=True, eq=False)
class TacSeries:
    values: np.ndarray
    tau: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("TAC values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def spline_matrices(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrices of the hat functions and of their derivatives on [0, 1]."""
    h = 1.0 / N
    n = N + 1
    mass = np.zeros((n, n))
    stiff = np.zeros((n, n))
    idx = np.arange(N)
    # element contributions [[2,1],[1,2]] h/6 and [[1,-1],[-1,1]] / h
    np.add.at(mass, (idx, idx), h / 3)
    np.add.at(mass, (idx + 1, idx + 1), h / 3)
    mass[idx, idx + 1] = h / 6
    mass[idx + 1, idx] = h / 6
    np.add.at(stiff, (idx, idx), 1 / h)
    np.add.at(stiff, (idx + 1, idx + 1), 1 / h)
    stiff[idx, idx + 1] = -1 / h
    stiff[idx + 1, idx] = -1 / h
    return mass, stiff


def assemble(q, N: int) -> GalerkinSystem:
    """Galerkin matrices for parameter ``q = (q1, q2)`` and ``N`` subintervals."""
    N = int(N)
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    q = ParameterPoint(float(q[0]), float(q[1]))
    if q.q1 < 0 or q.q2 < 0:
        raise ValueError(f"parameters must be nonnegative, got {q}")
    mass, stiff = spline_matrices(N)
    boundary = np.zeros_like(mass)
    boundary[0, 0] = 1.0

    chol = scipy.linalg.cho_factor(mass)
    rhs = np.zeros(N + 1)
    rhs[-1] = q.q2
    generator = -scipy.linalg.cho_solve(chol, q.q1 * stiff + boundary)
    input_vector = scipy.linalg.cho_solve(chol, rhs)
    return GalerkinSystem(N, mass, stiff, boundary, q, generator, input_vector)


def discretize(sys: GalerkinSystem, tau: float) -> DiscreteTimeSystem:
    """Zero-order-hold sampling from one exponential of ``[[A, B], [0, 0]] tau``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    n = sys.size
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = sys.generator * tau
    aug[:n, n] = sys.input_vector * tau
    E = scipy.linalg.expm(aug)
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("matrix exponential produced non-finite entries")
    return DiscreteTimeSystem(
        a_hat=np.ascontiguousarray(E[:n, :n]),
        b_hat=np.ascontiguousarray(E[:n, n]),
        c_hat=sys.output_vector(),
        tau=float(tau),
    )


def discretize_at(q, N: int, tau: float) -> DiscreteTimeSystem:
    return discretize(assemble(q, N), tau)


def propagate(dts: DiscreteTimeSystem, inputs: np.ndarray) -> np.ndarray:
    """Outputs ``y_1..y_n`` from zero initial state for one or more input columns.

    ``inputs`` has shape ``(n,)`` or ``(n, m)``; the result has the same shape.
    """
    U = np.asarray(inputs, dtype=float)
    single = U.ndim == 1
    if single:
        U = U[:, None]
    n, m = U.shape
    x = np.zeros((dts.a_hat.shape[0], m))
    Y = np.empty((n, m))
    a, b = dts.a_hat, dts.b_hat[:, None]
    for k in range(n):
        x = a @ x + b * U[k]
        Y[k] = dts.c_hat @ x
    return Y[:, 0] if single else Y


def simulate(dts: DiscreteTimeSystem, episode: Episode) -> TacSeries:
    if abs(episode.tau - dts.tau) > TAU_RTOL * max(abs(episode.tau), abs(dts.tau)):
        raise ValueError(
            f"episode {episode.id!r} has tau={episode.tau} but the system was "
            f"discretized with tau={dts.tau}"
        )
    return TacSeries(propagate(dts, episode.input_u), dts.tau)


def filter_kernel(dts: DiscreteTimeSystem, n: int) -> np.ndarray:
    """Impulse response ``h_k = c_hat a_hat^(k-1) b_hat`` for ``k = 1..n``."""
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    h = np.empty(int(n))
    v = dts.b_hat.copy()
    for k in range(int(n)):
        h[k] = dts.c_hat @ v
        v = dts.a_hat @ v
    return h


def convolve_kernel(h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``y_k = sum_{j<k} h_{k-j} u_j`` for ``k = 1..len(u)``."""
    u = np.asarray(u, dtype=float)
    return np.convolve(h, u)[: u.size]


def steady_state_gain(sys: GalerkinSystem) -> float:
    """``-C A^{-1} B``: output per unit of constant input at equilibrium."""
    return float(-sys.output_vector() @ np.linalg.solve(sys.generator, sys.input_vector))


def form_spectrum(sys: GalerkinSystem) -> tuple[float, float]:
    """Smallest and largest eigenvalue of ``q1 K + E00`` (coercivity/boundedness)."""
    ev = np.linalg.eigvalsh(sys.form_matrix)
    return float(ev[0]), float(ev[-1])
