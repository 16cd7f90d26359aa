"""Tail of a finite sum of correlated log-normals: one-big-jump approximation and IS estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .streams import EstimateWithError, as_stream, map_blocks, summarize_weighted


@dataclass(frozen=True, eq=False)
class LogNormalPortfolio:
    """Log-prices ``X ~ N(mu, cov)``; the portfolio value is ``sum_i exp(X_i)``."""

    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mu.size, mu.size):
            raise ValueError(f"cov must be {mu.size} x {mu.size}, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("cov must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("cov must be positive definite (det > 0)") from None
        for name, value in (("mu", mu), ("cov", cov), ("_chol", chol)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def scales(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @classmethod
    def equicorrelated(cls, n: int, rho: float, mu: float = 0.0, var: float = 1.0) -> "LogNormalPortfolio":
        cov = var * ((1.0 - rho) * np.eye(n) + rho * np.ones((n, n)))
        return cls(np.full(n, mu), cov)

    def standardized_levels(self, b: float) -> np.ndarray:
        return (math.log(b) - self.mu) / self.scales


def one_big_jump_approx(p: LogNormalPortfolio, b: float) -> float:
    """``sum_i P(exp(X_i) > b)``."""
    if not b > 0:
        raise ValueError("b must be positive")
    return float(stats.norm.sf(p.standardized_levels(b)).sum())


def b_for_marginal_tail(p: LogNormalPortfolio, tail: float, component: int = 0) -> float:
    """``b`` with ``P(exp(X_component) > b) = tail``."""
    return float(np.exp(p.mu[component] + p.scales[component] * stats.norm.isf(tail)))


def sum_tail_mc(
    p: LogNormalPortfolio, b: float, n_samples: int, stream, workers: int | None = None
) -> EstimateWithError:
    """IS estimate of ``P(sum exp(X_i) > b)``.

    Proposal: pick ``i`` uniformly and shift the mean to ``E[X | X_i = log b]``.
    Writing ``l_i`` for the standardized level of component ``i`` and ``z_i``
    for the standardized ``X_i``, the likelihood ratio is
    ``1 / mean_i exp(l_i z_i - l_i^2 / 2)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if b <= 0:
        return EstimateWithError(1.0, 0.0, n_samples, float(n_samples))
    levels = p.standardized_levels(b)
    scales = p.scales
    shifts = p.cov * (levels / scales)[None, :]  # column i: conditional mean shift for component i
    log_b = math.log(b)

    def block(rng, k):
        i = rng.integers(p.n, size=k)
        x = p.mu + rng.standard_normal((k, p.n)) @ p._chol.T + shifts[:, i].T
        z = (x - p.mu) / scales
        log_lr = math.log(p.n) - special.logsumexp(levels * z - 0.5 * levels**2, axis=1)
        hit = special.logsumexp(x, axis=1) > log_b
        return np.where(hit, np.exp(log_lr), 0.0)

    return summarize_weighted(map_blocks(block, n_samples, as_stream(stream), workers))
