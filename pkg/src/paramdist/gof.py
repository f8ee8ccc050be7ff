"""Two-sample, two-dimensional Kolmogorov-Smirnov test (Peacock's statistic)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_SAMPLE = 10  # each sample must be strictly larger
PEACOCK_A = 0.53
PEACOCK_B = 0.9


@dataclass(frozen=True)
class KsResult:
    d_stat: float
    n_hat: float
    z_n: float
    z_inf: float
    p_value: float

    def as_lines(self) -> list[str]:
        return [f"{k}={getattr(self, k)!r}" for k in ("d_stat", "n_hat", "z_n", "z_inf", "p_value")]


def kolmogorov_cdf(z: float) -> float:
    """``P(K <= z) = 1 - 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 z^2)``."""
    if z < 0:
        raise ValueError(f"z must be nonnegative, got {z}")
    if z == 0:
        return 0.0
    if z < 0.3:
        # Alternating series converges too slowly here; use the dual
        # (Jacobi theta) form sqrt(2 pi)/z sum exp(-(2k-1)^2 pi^2 / (8 z^2)).
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * z * z))
            total += term
            if term < 1e-15:
                break
            k += 1
        return min(1.0, math.sqrt(2 * math.pi) / z * total)
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * z * z)
        total += term if k % 2 == 1 else -term
        if term < 1e-15:
            break
        k += 1
    return min(1.0, max(0.0, 1.0 - 2.0 * total))


def _as_points(sample, name: str) -> np.ndarray:
    pts = np.asarray(getattr(sample, "points", sample), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"{name} must be an (n, 2) array of points")
    if len(pts) <= MIN_SAMPLE:
        raise ValueError(f"{name} has {len(pts)} points; more than {MIN_SAMPLE} are required")
    return pts


def _orthant_fractions(pts: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Fractions of ``pts`` in the four closed quadrants at every corner.

    Corners are ``(xs[a], ys[b])`` for sorted unique ``xs``/``ys`` containing
    every coordinate of ``pts``.  Returns an array of shape (4, len(xs), len(ys))
    ordered as (<=,<=), (<=,>=), (>=,<=), (>=,>=).
    """
    n = len(pts)
    ia = np.searchsorted(xs, pts[:, 0])
    ib = np.searchsorted(ys, pts[:, 1])
    counts = np.zeros((xs.size + 1, ys.size + 1))
    np.add.at(counts, (ia + 1, ib + 1), 1.0)
    C = counts.cumsum(axis=0).cumsum(axis=1)  # C[a+1, b+1] = #(x <= xs[a], y <= ys[b])
    row_tot = C[-1:, :]  # #(y <= ys[b]) over all x
    col_tot = C[:, -1:]  # #(x <= xs[a]) over all y
    le_le = C[1:, 1:]
    le_ge = col_tot[1:] - C[1:, :-1]
    ge_le = row_tot[:, 1:] - C[:-1, 1:]
    ge_ge = n - col_tot[:-1] - row_tot[:, :-1] + C[:-1, :-1]
    return np.stack([le_le, le_ge, ge_le, ge_ge]) / n


def peacock_statistic(sample1, sample2) -> float:
    """Largest quadrant discrepancy over all pooled-coordinate corners."""
    a = _as_points(sample1, "sample1")
    b = _as_points(sample2, "sample2")
    pooled = np.vstack([a, b])
    xs = np.unique(pooled[:, 0])
    ys = np.unique(pooled[:, 1])
    diff = _orthant_fractions(a, xs, ys) - _orthant_fractions(b, xs, ys)
    return float(np.abs(diff).max())


def ks2d2s(sample1, sample2) -> KsResult:
    """Peacock two-sample test with the small-sample correction.

    ``Z_n = sqrt(n_hat) D`` with ``n_hat = n1 n2 / (n1 + n2)`` is corrected to
    ``Z_inf = Z_n / (1 - 0.53 n_hat^-0.9)`` and the p-value is
    ``min(1, 2 exp(-2 (Z_inf - 0.5)^2))``.
    """
    a = _as_points(sample1, "sample1")
    b = _as_points(sample2, "sample2")
    d = peacock_statistic(a, b)
    n1, n2 = len(a), len(b)
    n_hat = n1 * n2 / (n1 + n2)
    z_n = math.sqrt(n_hat) * d
    denom = 1.0 - PEACOCK_A * n_hat ** (-PEACOCK_B)
    if denom <= 0:
        raise FloatingPointError(f"small-sample correction undefined for n_hat={n_hat}")
    z_inf = z_n / denom
    p = 2.0 * math.exp(-2.0 * (z_inf - 0.5) ** 2)
    return KsResult(d, n_hat, z_n, z_inf, min(1.0, max(0.0, p)))
