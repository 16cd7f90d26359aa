"""Exact Gaussian field simulation on grids and Monte Carlo tail estimators.

The importance sampler draws a bump location ``t*`` uniformly over the grid
nodes and adds ``u C(. - t*)`` to an exact field draw.  Against the mixture of
these shifted laws the likelihood ratio of a field ``f`` is

    [ (1/M) sum_j exp(u f_j - u^2 K_jj / 2) ]^{-1}

with ``K`` the (jittered) Gram matrix, so it is exact for the simulated law.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, special

from .asymptotics import InfeasibleThresholdError, solve_u
from .kernel import CovarianceModel, standardize
from .partition import PanelCover, as_boxes, domain_measure
from .streams import (
    EstimateWithError,
    Stream,
    as_stream,
    combine_sum,
    map_blocks,
    summarize_indicator,
    summarize_weighted,
)

JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
NODES_PER_BUMP = 8


class IllConditionedError(np.linalg.LinAlgError):
    """Gram matrix could not be factorized even with the largest jitter."""


def trapezoid_axis(lo: float, hi: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.linspace(lo, hi, m)
    h = (hi - lo) / (m - 1)
    w = np.full(m, h)
    w[0] = w[-1] = 0.5 * h
    return x, w


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Quadrature nodes and trapezoidal weights over a box domain (or a union of boxes)."""

    domain: np.ndarray
    nodes: np.ndarray
    cell_weights: np.ndarray

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def measure(self) -> float:
        return float(self.cell_weights.sum())

    @classmethod
    def box(cls, box, points_per_axis) -> "FieldGrid":
        boxes = as_boxes(box)
        if len(boxes) != 1:
            raise ValueError("FieldGrid.box takes a single box; use FieldGrid.union for several")
        bounds = boxes[0]
        d = bounds.shape[0]
        m = np.broadcast_to(np.asarray(points_per_axis, dtype=int), (d,))
        if np.any(m < 2):
            raise ValueError("need at least 2 points per axis")
        axes = [trapezoid_axis(lo, hi, k) for (lo, hi), k in zip(bounds, m)]
        mesh = np.meshgrid(*(a[0] for a in axes), indexing="ij")
        wmesh = np.meshgrid(*(a[1] for a in axes), indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        weights = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=-1)
        return cls(boxes, nodes, weights)

    @classmethod
    def from_nodes(cls, nodes, cell_weights) -> "FieldGrid":
        """Arbitrary nodes; the domain is their bounding box."""
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        w = np.asarray(cell_weights, dtype=float).reshape(len(nodes))
        if np.any(w <= 0):
            raise ValueError("cell weights must be positive")
        box = np.stack([nodes.min(axis=0), nodes.max(axis=0)], axis=-1)[None]
        return cls(box, nodes, w)

    @classmethod
    def union(cls, grids: list["FieldGrid"], decimals: int = 10) -> "FieldGrid":
        """Merge grids of adjacent boxes; coincident boundary nodes pool their weights."""
        nodes = np.concatenate([g.nodes for g in grids])
        weights = np.concatenate([g.cell_weights for g in grids])
        keys = np.round(nodes, decimals)
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        merged_w = np.zeros(len(uniq))
        np.add.at(merged_w, inverse.ravel(), weights)
        return cls(np.concatenate([g.domain for g in grids]), nodes[first], merged_w)


def resolution_points(u: float, side: float, minimum: int = 2) -> int:
    """Points per axis so the bump width ``1/sqrt(u)`` spans ``NODES_PER_BUMP`` spacings."""
    return max(minimum, int(math.ceil(NODES_PER_BUMP * math.sqrt(u) * side)) + 1)


@dataclass(frozen=True)
class FieldSample:
    values: np.ndarray
    seed_path: str


class FieldSampler:
    """Cholesky factor of the Gram matrix over the grid, computed once and shared read-only."""

    def __init__(self, model: CovarianceModel, grid: FieldGrid):
        if grid.d != model.d:
            raise ValueError(f"grid dimension {grid.d} does not match model dimension {model.d}")
        self.model = model
        self.grid = grid
        gram = model.gram(grid.nodes)
        for jitter in JITTERS:
            K = gram + jitter * np.eye(grid.size) if jitter else gram
            try:
                self.factor = linalg.cholesky(K, lower=True, check_finite=False)
            except linalg.LinAlgError:
                continue
            self.gram = K
            self.jitter = jitter
            break
        else:
            raise IllConditionedError(
                f"Gram matrix of {grid.size} nodes is not factorizable with jitter up to {JITTERS[-1]:g}"
            )
        self.factor.setflags(write=False)
        self.gram.setflags(write=False)

    @cached_property
    def log_weights(self) -> np.ndarray:
        return np.log(self.grid.cell_weights)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.grid.size))
        return z @ self.factor.T

    def draw_shifted(self, rng: np.random.Generator, n: int, shift: float) -> np.ndarray:
        """Draws from the mixture proposal with bump height ``shift``."""
        j = rng.integers(self.grid.size, size=n)
        return self.draw(rng, n) + shift * self.gram[j]

    def log_likelihood_ratio(self, f: np.ndarray, shift: float) -> np.ndarray:
        a = shift * f - 0.5 * shift * shift * np.diag(self.gram)
        return math.log(self.grid.size) - special.logsumexp(a, axis=1)

    def log_integral(self, f: np.ndarray, sigma: float) -> np.ndarray:
        return special.logsumexp(sigma * f + self.log_weights, axis=-1)


def _sampler(model, grid, sampler):
    if sampler is None:
        return FieldSampler(model, grid)
    if sampler.grid is not grid or sampler.model is not model:
        raise ValueError("sampler was built for a different model or grid")
    return sampler


def sample_field(model: CovarianceModel, grid: FieldGrid, stream, sampler: FieldSampler | None = None) -> FieldSample:
    stream = as_stream(stream)
    s = _sampler(model, grid, sampler)
    return FieldSample(s.draw(stream.generator(), 1)[0], stream.id)


def sample_fields(
    model: CovarianceModel, grid: FieldGrid, n: int, stream, workers: int | None = None, sampler=None
) -> np.ndarray:
    """``n`` exact draws, shape ``(n, nodes)``; identical for any worker count."""
    s = _sampler(model, grid, sampler)
    return np.concatenate(map_blocks(s.draw, n, as_stream(stream), workers))


def integral_functional(sample: FieldSample | np.ndarray, grid: FieldGrid, sigma: float) -> float:
    values = sample.values if isinstance(sample, FieldSample) else np.asarray(sample, dtype=float)
    log_i = special.logsumexp(sigma * values + np.log(grid.cell_weights))
    return float(np.exp(log_i))


def threshold_level(model: CovarianceModel, sigma: float, b: float) -> float:
    """``u`` for ``b``, after mapping ``b`` through the affine standardization of ``model``."""
    _, affine = standardize(model)
    return solve_u(b / affine.measure_factor, sigma, model.d)


def default_shift(model: CovarianceModel, sigma: float, b: float) -> float:
    """Bump height for the IS proposal: the threshold level, or ``d/(2 sigma)`` below the feasible range.

    Any shift leaves the estimator unbiased; below the range the threshold
    equation has no root and the event is not rare anyway.
    """
    try:
        return threshold_level(model, sigma, b)
    except InfeasibleThresholdError:
        return model.d / (2.0 * sigma)


def crude_mc(
    model: CovarianceModel,
    grid: FieldGrid,
    sigma: float,
    b: float,
    n: int,
    stream,
    workers: int | None = None,
    sampler: FieldSampler | None = None,
) -> EstimateWithError:
    if n < 1:
        raise ValueError("n must be at least 1")
    s = _sampler(model, grid, sampler)
    log_b = math.log(b) if b > 0 else -math.inf

    def block(rng, k):
        return s.log_integral(s.draw(rng, k), sigma) > log_b

    return summarize_indicator(map_blocks(block, n, as_stream(stream), workers))


def importance_sampling_mc(
    model: CovarianceModel,
    grid: FieldGrid,
    sigma: float,
    b: float,
    n: int,
    stream,
    workers: int | None = None,
    sampler: FieldSampler | None = None,
    shift: float | None = None,
) -> EstimateWithError:
    """Mean-shift mixture estimate of ``P(I_sigma(grid) > b)``.

    ``shift`` defaults to the threshold level ``u`` of ``b``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if b <= 0:
        return EstimateWithError(1.0, 0.0, n, float(n))
    s = _sampler(model, grid, sampler)
    u = default_shift(model, sigma, b) if shift is None else shift
    log_b = math.log(b)

    def block(rng, k):
        f = s.draw_shifted(rng, k, u)
        hit = s.log_integral(f, sigma) > log_b
        return np.where(hit, np.exp(s.log_likelihood_ratio(f, u)), 0.0)

    return summarize_weighted(map_blocks(block, n, as_stream(stream), workers))


def sup_mc(
    model: CovarianceModel,
    grid: FieldGrid,
    u_level: float,
    n: int,
    stream,
    method: str = "is",
    workers: int | None = None,
    sampler: FieldSampler | None = None,
) -> EstimateWithError:
    """``P(max over nodes > u_level)``, crude or with the mean-shift mixture."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = _sampler(model, grid, sampler)
    stream = as_stream(stream)
    if method == "crude" or u_level <= 0:

        def crude(rng, k):
            return s.draw(rng, k).max(axis=1) > u_level

        return summarize_indicator(map_blocks(crude, n, stream, workers))
    if method != "is":
        raise ValueError(f"unknown method {method!r}")

    def block(rng, k):
        f = s.draw_shifted(rng, k, u_level)
        hit = f.max(axis=1) > u_level
        return np.where(hit, np.exp(s.log_likelihood_ratio(f, u_level)), 0.0)

    return summarize_weighted(map_blocks(block, n, stream, workers))


def panel_grids(cover: PanelCover, which: str = "outer", points_per_panel: int | None = None) -> list[FieldGrid]:
    if points_per_panel is None:
        points_per_panel = resolution_points(cover.u, 2.0 * cover.epsilon)
    return [FieldGrid.box(box, points_per_panel) for box in cover.panels(which)]


def panel_sum_vs_union_mc(
    model: CovarianceModel,
    cover: PanelCover,
    sigma: float,
    b: float,
    n: int,
    stream,
    which: str = "outer",
    points_per_panel: int | None = None,
    workers: int | None = None,
) -> tuple[EstimateWithError, EstimateWithError]:
    """IS estimates of ``P(I(union of panels) > b)`` and of the sum of per-panel probabilities."""
    stream = as_stream(stream)
    grids = panel_grids(cover, which, points_per_panel)
    if not grids:
        raise ValueError(f"the {which} cover has no panels")
    union = FieldGrid.union(grids)
    union_est = importance_sampling_mc(model, union, sigma, b, n, stream.child(0), workers)
    if len(grids) == 1:
        return union_est, union_est
    parts = [
        importance_sampling_mc(model, g, sigma, b, n, stream.child(1 + i), workers)
        for i, g in enumerate(grids)
    ]
    return union_est, combine_sum(parts)


def write_samples_csv(target, grid: FieldGrid, samples: np.ndarray) -> None:
    """Long format: ``sample, t1..td, value`` per row.  ``target`` is a path or text stream."""
    samples = np.atleast_2d(samples)
    if hasattr(target, "write"):
        _write_samples(target, grid, samples)
        return
    with open(target, "w", newline="") as fh:
        _write_samples(fh, grid, samples)


def _write_samples(fh, grid: FieldGrid, samples: np.ndarray) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["sample", *(f"t{i + 1}" for i in range(grid.d)), "value"])
    for s, row in enumerate(samples):
        for node, value in zip(grid.nodes, row):
            w.writerow([s, *(repr(float(x)) for x in node), repr(float(value))])


def grid_for_domain(domain, points_per_axis: int) -> FieldGrid:
    boxes = as_boxes(domain)
    if len(boxes) == 1:
        return FieldGrid.box(boxes[0], points_per_axis)
    grid = FieldGrid.union([FieldGrid.box(b, points_per_axis) for b in boxes])
    if not math.isclose(grid.measure, domain_measure(boxes), rel_tol=1e-9):
        raise ValueError("overlapping boxes are not supported for simulation grids")
    return grid


__all__ = [
    "FieldGrid",
    "FieldSample",
    "FieldSampler",
    "IllConditionedError",
    "Stream",
    "crude_mc",
    "grid_for_domain",
    "importance_sampling_mc",
    "integral_functional",
    "panel_grids",
    "panel_sum_vs_union_mc",
    "resolution_points",
    "sample_field",
    "sample_fields",
    "sup_mc",
    "threshold_level",
    "write_samples_csv",
]
